//! Deformation energies `W: M × M → ℝ` and the metric they induce.
//!
//! A model supplies `W` together with its first derivatives in each
//! argument and, optionally, its second derivatives. The Riemannian metric
//! is never given directly; it is read off `W_{,22}[y, y] = 2 g_y`.

mod check;
mod embedded;
mod flat;

pub use check::{derivative_order_check, DerivativeCheck};
pub use embedded::{make_embedded_model, Chart, EmbeddedModel, SphereChart, TorusChart};
pub use flat::{make_flat_model, FlatModel};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{LinearSolverKind, SparseMatrix};

/// Coordinates of a point of the shape space (chart coordinates or stacked
/// vertex positions).
pub type Point = DVector<f64>;

/// Tangent vector; its base point is implied by the call site.
pub type Tangent = DVector<f64>;

/// A deformation energy `W[a, b]` with derivative evaluators.
///
/// `grad1`/`grad2` are derivatives with respect to the first/second
/// argument. `hess12[a, b]` has entries `∂²W / ∂a_i ∂b_j`; the `W_{,21}`
/// block is its transpose. Hessians default to central differences of the
/// analytic gradients.
pub trait EnergyModel: Send + Sync {
    fn dim(&self) -> usize;

    fn energy(&self, a: &Point, b: &Point) -> Result<f64>;

    fn grad1(&self, a: &Point, b: &Point) -> Result<DVector<f64>>;

    fn grad2(&self, a: &Point, b: &Point) -> Result<DVector<f64>>;

    fn hess11(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        fd_hessian(self, a, b, Slot::First, Slot::First)
    }

    fn hess12(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        fd_hessian(self, a, b, Slot::First, Slot::Second)
    }

    fn hess22(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        fd_hessian(self, a, b, Slot::Second, Slot::Second)
    }

    /// Evaluates the requested Hessian blocks at one argument pair. Models
    /// override this when the blocks share intermediate quantities.
    fn hessians(&self, a: &Point, b: &Point, want: HessianRequest) -> Result<HessianBlocks> {
        Ok(HessianBlocks {
            h11: if want.h11 { Some(self.hess11(a, b)?) } else { None },
            h12: if want.h12 { Some(self.hess12(a, b)?) } else { None },
            h22: if want.h22 { Some(self.hess22(a, b)?) } else { None },
        })
    }

    /// Characteristic energy magnitude used to make tolerances dimensionless.
    fn metric_scale(&self) -> f64;

    /// Rows spanning directions that Newton increments must be orthogonal to
    /// (gauge degrees of freedom), built at `reference`. Rows are orthonormal.
    fn gauge_constraints(&self, _reference: &Point) -> Option<DMatrix<f64>> {
        None
    }

    /// Linear solver suited to this model's Hessian structure.
    fn preferred_solver(&self) -> LinearSolverKind {
        LinearSolverKind::DenseDirect
    }

    /// Validates a point: dimension, finiteness, and the model's domain.
    fn check_point(&self, p: &Point) -> Result<()> {
        check_dim(self.dim(), p.len())?;
        check_finite(p)
    }
}

/// Selection of Hessian blocks for [`EnergyModel::hessians`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HessianRequest {
    pub h11: bool,
    pub h12: bool,
    pub h22: bool,
}

#[derive(Debug, Clone, Default)]
pub struct HessianBlocks {
    pub h11: Option<SparseMatrix>,
    pub h12: Option<SparseMatrix>,
    pub h22: Option<SparseMatrix>,
}

pub(crate) fn check_finite(p: &DVector<f64>) -> Result<()> {
    if p.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite coordinate".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    First,
    Second,
}

/// Central-difference Hessian block from analytic gradients with step
/// `ε^{1/3} · max(1, |x_j|)`.
fn fd_hessian<M: EnergyModel + ?Sized>(
    model: &M,
    a: &Point,
    b: &Point,
    row: Slot,
    col: Slot,
) -> Result<SparseMatrix> {
    let d = model.dim();
    let h0 = f64::EPSILON.cbrt();
    let grad = |a: &Point, b: &Point| match row {
        Slot::First => model.grad1(a, b),
        Slot::Second => model.grad2(a, b),
    };
    let mut dense = DMatrix::zeros(d, d);
    for j in 0..d {
        let (mut ap, mut bp) = (a.clone(), b.clone());
        let (mut am, mut bm) = (a.clone(), b.clone());
        let x = match col {
            Slot::First => a[j],
            Slot::Second => b[j],
        };
        let h = h0 * x.abs().max(1.0);
        match col {
            Slot::First => {
                ap[j] += h;
                am[j] -= h;
            }
            Slot::Second => {
                bp[j] += h;
                bm[j] -= h;
            }
        }
        let gp = grad(&ap, &bp)?;
        let gm = grad(&am, &bm)?;
        dense.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    // Rows index the differentiated-gradient slot; for hess12 rows are slot 1.
    Ok(SparseMatrix::from_dense(&dense))
}

/// `trace(W_{,22}[y₀, y₀]) / d`, the default metric scale at a base point.
pub fn default_metric_scale<M: EnergyModel + ?Sized>(model: &M, base: &Point) -> Result<f64> {
    let h = model.hess22(base, base)?;
    Ok(h.trace() / model.dim() as f64)
}

/// Metric `g_y` at a base point, stored as `½ W_{,22}[y, y]`.
#[derive(Debug, Clone)]
pub struct MetricOperator {
    matrix: SparseMatrix,
}

impl MetricOperator {
    pub fn at<M: EnergyModel + ?Sized>(model: &M, y: &Point) -> Result<Self> {
        model.check_point(y)?;
        Ok(MetricOperator { matrix: model.hess22(y, y)?.scaled(0.5) })
    }

    pub fn inner(&self, v: &Tangent, w: &Tangent) -> Result<f64> {
        check_dim(self.matrix.ncols(), v.len())?;
        check_dim(self.matrix.ncols(), w.len())?;
        Ok(self.matrix.bilinear(v, w))
    }

    pub fn apply(&self, v: &Tangent) -> DVector<f64> {
        self.matrix.mul_vec(v)
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Largest `|g_ij − g_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let g = self.to_dense();
        (&g - g.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let g = self.to_dense();
        let sym = (&g + g.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// `g_y(v, w) = ½ vᵀ W_{,22}[y, y] w`.
pub fn metric_eval<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    v: &Tangent,
    w: &Tangent,
) -> Result<f64> {
    check_dim(model.dim(), v.len())?;
    check_dim(model.dim(), w.len())?;
    MetricOperator::at(model, y)?.inner(v, w)
}

/// Largest deviations from the identities a consistent energy satisfies on
/// the diagonal, each divided by the model's metric scale (bilinear and
/// trilinear terms also by the norms of their arguments).
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConsistencyReport {
    /// `|W[y, y]|`
    pub energy_on_diagonal: f64,
    /// `|W_{,1}[y, y]|`
    pub grad1_on_diagonal: f64,
    /// `|W_{,2}[y, y]|`
    pub grad2_on_diagonal: f64,
    /// `|W_{,11} + W_{,12}|(v, w)`
    pub hess11_plus_hess12: f64,
    /// `|W_{,11} − W_{,22}|(v, w)`
    pub hess11_minus_hess22: f64,
    /// `|W_{,12} − W_{,21}|(v, w)`
    pub hess12_minus_hess21: f64,
    /// Spread of the four third-derivative combinations obtained by
    /// differentiating the second-derivative identities along the diagonal.
    pub third_derivative: f64,
}

impl ConsistencyReport {
    pub fn max_second_order(&self) -> f64 {
        [
            self.energy_on_diagonal,
            self.grad1_on_diagonal,
            self.grad2_on_diagonal,
            self.hess11_plus_hess12,
            self.hess11_minus_hess22,
            self.hess12_minus_hess21,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.max_second_order().max(self.third_derivative)
    }
}

/// Evaluates the diagonal identities at `y` for every sample pair `(v, w)`.
///
/// The third-order identity is checked for `(u, v, w) = (v, w, v + w)` by
/// central differences of the Hessians along the diagonal with step
/// `fd_step`.
pub fn check_consistency_identities<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    samples: &[(Tangent, Tangent)],
    fd_step: f64,
) -> Result<ConsistencyReport> {
    model.check_point(y)?;
    let s = model.metric_scale();
    let mut rep = ConsistencyReport {
        energy_on_diagonal: model.energy(y, y)?.abs() / s,
        grad1_on_diagonal: model.grad1(y, y)?.norm() / s,
        grad2_on_diagonal: model.grad2(y, y)?.norm() / s,
        ..Default::default()
    };
    let h11 = model.hess11(y, y)?;
    let h12 = model.hess12(y, y)?;
    let h22 = model.hess22(y, y)?;

    for (v, w) in samples {
        check_dim(model.dim(), v.len())?;
        check_dim(model.dim(), w.len())?;
        let nvw = (v.norm() * w.norm()).max(f64::MIN_POSITIVE);
        let a11 = h11.bilinear(v, w);
        let a12 = h12.bilinear(v, w);
        let a21 = h12.bilinear(w, v);
        let a22 = h22.bilinear(v, w);
        rep.hess11_plus_hess12 = rep.hess11_plus_hess12.max((a11 + a12).abs() / (s * nvw));
        rep.hess11_minus_hess22 = rep.hess11_minus_hess22.max((a11 - a22).abs() / (s * nvw));
        rep.hess12_minus_hess21 = rep.hess12_minus_hess21.max((a12 - a21).abs() / (s * nvw));

        let dir = v + w;
        let yp = y + &dir * fd_step;
        let ym = y - &dir * fd_step;
        let diff = |f: &dyn Fn(&Point, &Point) -> Result<SparseMatrix>, swap: bool| -> Result<f64> {
            let (p, m) = (f(&yp, &yp)?, f(&ym, &ym)?);
            let (l, r) = if swap { (w, v) } else { (v, w) };
            Ok((p.bilinear(l, r) - m.bilinear(l, r)) / (2.0 * fd_step))
        };
        let t22 = diff(&|a, b| model.hess22(a, b), false)?;
        let t11 = diff(&|a, b| model.hess11(a, b), false)?;
        let t12 = -diff(&|a, b| model.hess12(a, b), false)?;
        let t21 = -diff(&|a, b| model.hess12(a, b), true)?;
        let vals = [t22, t11, t12, t21];
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let norm = (nvw * dir.norm()).max(f64::MIN_POSITIVE);
        rep.third_derivative = rep.third_derivative.max(spread / (s * norm));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Torus-chart energy that only provides gradients, exercising the
    /// finite-difference Hessian fallback.
    struct GradientOnly(EmbeddedModel);

    impl EnergyModel for GradientOnly {
        fn dim(&self) -> usize {
            2
        }
        fn energy(&self, a: &Point, b: &Point) -> Result<f64> {
            self.0.energy(a, b)
        }
        fn grad1(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
            self.0.grad1(a, b)
        }
        fn grad2(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
            self.0.grad2(a, b)
        }
        fn metric_scale(&self) -> f64 {
            self.0.metric_scale()
        }
    }

    fn torus() -> EmbeddedModel {
        make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap()
    }

    #[test]
    fn fd_fallback_matches_analytic_hessians() {
        let m = torus();
        let fd = GradientOnly(torus());
        let a = DVector::from_vec(vec![0.3, -0.4]);
        let b = DVector::from_vec(vec![0.5, 0.1]);
        let pairs = [
            (m.hess11(&a, &b).unwrap(), fd.hess11(&a, &b).unwrap()),
            (m.hess12(&a, &b).unwrap(), fd.hess12(&a, &b).unwrap()),
            (m.hess22(&a, &b).unwrap(), fd.hess22(&a, &b).unwrap()),
        ];
        for (exact, approx) in pairs {
            let err = (exact.to_dense() - approx.to_dense()).amax();
            assert!(err < 1e-8, "fd hessian error {err}");
        }
    }

    #[test]
    fn metric_eval_rejects_wrong_dimension() {
        let m = make_flat_model(2);
        let y = DVector::zeros(2);
        let v = DVector::zeros(3);
        assert!(matches!(
            metric_eval(&m, &y, &v, &v),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn metric_of_zero_vector_vanishes() {
        let m = torus();
        let y = DVector::from_vec(vec![0.2, 0.9]);
        let z = DVector::zeros(2);
        let w = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(metric_eval(&m, &y, &z, &w).unwrap(), 0.0);
    }

    #[test]
    fn flat_identities_are_exact() {
        let m = make_flat_model(3);
        let y = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let v = DVector::from_vec(vec![1.0, 0.0, 2.0]);
        let w = DVector::from_vec(vec![0.0, -1.0, 1.0]);
        let rep = check_consistency_identities(&m, &y, &[(v, w)], 1e-5).unwrap();
        assert_eq!(rep.max_second_order(), 0.0);
        assert!(rep.third_derivative < 1e-9);
    }
}
