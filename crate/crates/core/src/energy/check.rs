use serde::Serialize;

use super::{EnergyModel, Point, Tangent};
use crate::error::{check_dim, Result};

/// Central-difference error of one analytic derivative at two steps.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub name: &'static str,
    /// Error at step `h`.
    pub error: f64,
    /// Error at step `h / 2`.
    pub error_half: f64,
    /// Magnitude of the analytic directional derivative.
    pub magnitude: f64,
}

impl DerivativeCheck {
    /// Ratio of the two errors; close to 4 for a correct derivative.
    pub fn ratio(&self) -> f64 {
        self.error / self.error_half
    }

    pub fn relative_error(&self) -> f64 {
        self.error_half / self.magnitude.max(f64::MIN_POSITIVE)
    }
}

/// Compares every analytic derivative of `model` at `(a, b)` against central
/// differences along `da` (first slot) and `db` (second slot) at steps `h`
/// and `h/2`.
///
/// Gradients are checked against differences of the energy, Hessian blocks
/// against differences of the gradients.
pub fn derivative_order_check<M: EnergyModel + ?Sized>(
    model: &M,
    a: &Point,
    b: &Point,
    da: &Tangent,
    db: &Tangent,
    h: f64,
) -> Result<Vec<DerivativeCheck>> {
    check_dim(model.dim(), da.len())?;
    check_dim(model.dim(), db.len())?;
    let g1 = model.grad1(a, b)?;
    let g2 = model.grad2(a, b)?;
    let h11 = model.hess11(a, b)?;
    let h12 = model.hess12(a, b)?;
    let h22 = model.hess22(a, b)?;

    // Points displaced by `s` along the first or second slot direction.
    let shift = |slot: usize, s: f64| -> (Point, Point) {
        if slot == 1 {
            (a + da * s, b.clone())
        } else {
            (a.clone(), b + db * s)
        }
    };
    let scalar = |slot: usize, exact: f64, name| -> Result<DerivativeCheck> {
        let mut err = [0.0; 2];
        for (e, s) in err.iter_mut().zip([h, h / 2.0]) {
            let (ap, bp) = shift(slot, s);
            let (am, bm) = shift(slot, -s);
            let fd = (model.energy(&ap, &bp)? - model.energy(&am, &bm)?) / (2.0 * s);
            *e = (fd - exact).abs();
        }
        Ok(DerivativeCheck { name, error: err[0], error_half: err[1], magnitude: exact.abs() })
    };
    let vector = |slot: usize, grad_slot: usize, exact: Tangent, name| -> Result<DerivativeCheck> {
        let grad = |x: &Point, y: &Point| if grad_slot == 1 { model.grad1(x, y) } else { model.grad2(x, y) };
        let mut err = [0.0; 2];
        for (e, s) in err.iter_mut().zip([h, h / 2.0]) {
            let (ap, bp) = shift(slot, s);
            let (am, bm) = shift(slot, -s);
            let fd = (grad(&ap, &bp)? - grad(&am, &bm)?) / (2.0 * s);
            *e = (fd - &exact).norm();
        }
        Ok(DerivativeCheck { name, error: err[0], error_half: err[1], magnitude: exact.norm() })
    };

    Ok(vec![
        scalar(1, g1.dot(da), "grad1")?,
        scalar(2, g2.dot(db), "grad2")?,
        vector(1, 1, h11.mul_vec(da), "hess11")?,
        vector(2, 1, h12.mul_vec(db), "hess12")?,
        vector(1, 2, h12.transpose().mul_vec(da), "hess21")?,
        vector(2, 2, h22.mul_vec(db), "hess22")?,
    ])
}
