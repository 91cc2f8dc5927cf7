use nalgebra::DVector;

use super::{EnergyModel, Point};
use crate::error::{check_dim, Result};
use crate::linalg::SparseMatrix;

/// Euclidean space with `W[a, b] = |a − b|²`.
#[derive(Debug, Clone, Copy)]
pub struct FlatModel {
    dim: usize,
}

/// Flat model of dimension `d ≥ 1`.
pub fn make_flat_model(d: usize) -> FlatModel {
    assert!(d >= 1, "dimension must be positive");
    FlatModel { dim: d }
}

impl FlatModel {
    fn check(&self, a: &Point, b: &Point) -> Result<()> {
        check_dim(self.dim, a.len())?;
        check_dim(self.dim, b.len())
    }
}

impl EnergyModel for FlatModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, a: &Point, b: &Point) -> Result<f64> {
        self.check(a, b)?;
        Ok((a - b).norm_squared())
    }

    fn grad1(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        self.check(a, b)?;
        Ok((a - b) * 2.0)
    }

    fn grad2(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        self.check(a, b)?;
        Ok((b - a) * 2.0)
    }

    fn hess11(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        self.check(a, b)?;
        Ok(SparseMatrix::identity(self.dim).scaled(2.0))
    }

    fn hess12(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        self.check(a, b)?;
        Ok(SparseMatrix::identity(self.dim).scaled(-2.0))
    }

    fn hess22(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        self.check(a, b)?;
        Ok(SparseMatrix::identity(self.dim).scaled(2.0))
    }

    fn metric_scale(&self) -> f64 {
        2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::metric_eval;
    use nalgebra::DMatrix;

    #[test]
    fn closed_forms() {
        let m = make_flat_model(2);
        let o = DVector::from_vec(vec![0.0, 0.0]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(m.energy(&o, &b).unwrap(), 25.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(m.grad2(&o, &e1).unwrap(), DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(m.hess12(&o, &b).unwrap().to_dense(), DMatrix::identity(2, 2) * -2.0);
        assert_eq!(metric_eval(&m, &b, &e1, &e1).unwrap(), 1.0);
    }
}
