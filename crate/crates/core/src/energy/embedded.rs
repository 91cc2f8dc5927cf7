use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2, Matrix3x2, Vector2, Vector3};

use super::{check_finite, default_metric_scale, EnergyModel, Point};
use crate::error::{check_dim, Error, Result};
use crate::linalg::SparseMatrix;

/// A parameterization `Φ: ℝ² → ℝ³` with analytic first and second
/// derivatives, valid on an axis-aligned box.
pub trait Chart: Send + Sync {
    fn name(&self) -> &str;

    fn eval(&self, p: Vector2<f64>) -> Vector3<f64>;

    /// Columns are `∂Φ/∂p₀` and `∂Φ/∂p₁`.
    fn jacobian(&self, p: Vector2<f64>) -> Matrix3x2<f64>;

    /// Second derivatives `∂²Φ_k/∂p_i∂p_j`, one 2×2 matrix per component k.
    fn second_derivatives(&self, p: Vector2<f64>) -> [Matrix2<f64>; 3];

    /// Closed validity box `(lower, upper)`.
    fn domain(&self) -> (Vector2<f64>, Vector2<f64>);

    /// Point at which the metric scale is taken.
    fn base_point(&self) -> Vector2<f64>;
}

/// Torus with center-line radius `R` and tube radius `r`, parameterized by
/// toroidal angle `u` and poloidal angle `v`.
#[derive(Debug, Clone, Copy)]
pub struct TorusChart {
    pub major: f64,
    pub minor: f64,
}

impl TorusChart {
    pub fn new(major: f64, minor: f64) -> Self {
        assert!(major > minor && minor > 0.0, "torus needs R > r > 0");
        TorusChart { major, minor }
    }
}

impl Chart for TorusChart {
    fn name(&self) -> &str {
        "torus"
    }

    fn eval(&self, p: Vector2<f64>) -> Vector3<f64> {
        let (u, v) = (p[0], p[1]);
        let rho = self.major + self.minor * v.cos();
        Vector3::new(rho * u.cos(), rho * u.sin(), self.minor * v.sin())
    }

    fn jacobian(&self, p: Vector2<f64>) -> Matrix3x2<f64> {
        let (u, v) = (p[0], p[1]);
        let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
        let rho = self.major + self.minor * cv;
        let r = self.minor;
        Matrix3x2::new(-rho * su, -r * sv * cu, rho * cu, -r * sv * su, 0.0, r * cv)
    }

    fn second_derivatives(&self, p: Vector2<f64>) -> [Matrix2<f64>; 3] {
        let (u, v) = (p[0], p[1]);
        let (su, cu, sv, cv) = (u.sin(), u.cos(), v.sin(), v.cos());
        let rho = self.major + self.minor * cv;
        let r = self.minor;
        [
            Matrix2::new(-rho * cu, r * sv * su, r * sv * su, -r * cv * cu),
            Matrix2::new(-rho * su, -r * sv * cu, -r * sv * cu, -r * cv * su),
            Matrix2::new(0.0, 0.0, 0.0, -r * sv),
        ]
    }

    fn domain(&self) -> (Vector2<f64>, Vector2<f64>) {
        (Vector2::new(-2.0 * PI, -2.0 * PI), Vector2::new(2.0 * PI, 2.0 * PI))
    }

    fn base_point(&self) -> Vector2<f64> {
        Vector2::zeros()
    }
}

/// Unit sphere in colatitude/longitude coordinates `(θ, φ)`, restricted to
/// `θ ∈ [0.05, π − 0.05]` to stay away from the poles.
#[derive(Debug, Clone, Copy, Default)]
pub struct SphereChart;

/// Distance from the poles excluded from the sphere chart.
pub const SPHERE_POLE_MARGIN: f64 = 0.05;

impl Chart for SphereChart {
    fn name(&self) -> &str {
        "sphere"
    }

    fn eval(&self, p: Vector2<f64>) -> Vector3<f64> {
        let (t, f) = (p[0], p[1]);
        Vector3::new(t.sin() * f.cos(), t.sin() * f.sin(), t.cos())
    }

    fn jacobian(&self, p: Vector2<f64>) -> Matrix3x2<f64> {
        let (st, ct, sf, cf) = (p[0].sin(), p[0].cos(), p[1].sin(), p[1].cos());
        Matrix3x2::new(ct * cf, -st * sf, ct * sf, st * cf, -st, 0.0)
    }

    fn second_derivatives(&self, p: Vector2<f64>) -> [Matrix2<f64>; 3] {
        let (st, ct, sf, cf) = (p[0].sin(), p[0].cos(), p[1].sin(), p[1].cos());
        [
            Matrix2::new(-st * cf, -ct * sf, -ct * sf, -st * cf),
            Matrix2::new(-st * sf, ct * cf, ct * cf, -st * sf),
            Matrix2::new(-ct, 0.0, 0.0, 0.0),
        ]
    }

    fn domain(&self) -> (Vector2<f64>, Vector2<f64>) {
        (
            Vector2::new(SPHERE_POLE_MARGIN, -2.0 * PI),
            Vector2::new(PI - SPHERE_POLE_MARGIN, 2.0 * PI),
        )
    }

    fn base_point(&self) -> Vector2<f64> {
        Vector2::new(PI / 2.0, 0.0)
    }
}

/// Pullback of the squared Euclidean distance in ℝ³ through a chart:
/// `W[a, b] = |Φ(a) − Φ(b)|²`.
pub struct EmbeddedModel {
    chart: Box<dyn Chart>,
    metric_scale: f64,
}

/// Wraps a chart as an energy model; the metric scale is taken at the
/// chart's base point.
pub fn make_embedded_model<C: Chart + 'static>(chart: C) -> Result<EmbeddedModel> {
    let mut model = EmbeddedModel { chart: Box::new(chart), metric_scale: 1.0 };
    let base = model.chart.base_point();
    let base = DVector::from_vec(vec![base[0], base[1]]);
    model.metric_scale = default_metric_scale(&model, &base)?;
    Ok(model)
}

impl EmbeddedModel {
    pub fn chart(&self) -> &dyn Chart {
        self.chart.as_ref()
    }

    fn coords(&self, p: &Point) -> Result<Vector2<f64>> {
        check_dim(2, p.len())?;
        check_finite(p)?;
        let (lo, hi) = self.chart.domain();
        if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] {
            return Err(Error::Domain(format!(
                "{} chart: ({}, {}) outside [{}, {}] × [{}, {}]",
                self.chart.name(),
                p[0],
                p[1],
                lo[0],
                hi[0],
                lo[1],
                hi[1]
            )));
        }
        Ok(Vector2::new(p[0], p[1]))
    }

    /// `Σ_k r_k ∂²Φ_k(p)`.
    fn contract(&self, p: Vector2<f64>, r: &Vector3<f64>) -> Matrix2<f64> {
        let h = self.chart.second_derivatives(p);
        h[0] * r[0] + h[1] * r[1] + h[2] * r[2]
    }
}

fn dense2(m: Matrix2<f64>) -> SparseMatrix {
    let mut s = SparseMatrix::with_capacity(2, 2, 4);
    for j in 0..2 {
        for i in 0..2 {
            s.push(i, j, m[(i, j)]);
        }
    }
    s
}

fn dvec(v: Vector2<f64>) -> DVector<f64> {
    DVector::from_vec(vec![v[0], v[1]])
}

impl EnergyModel for EmbeddedModel {
    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, a: &Point, b: &Point) -> Result<f64> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        Ok((self.chart.eval(a) - self.chart.eval(b)).norm_squared())
    }

    fn grad1(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        let r = self.chart.eval(a) - self.chart.eval(b);
        Ok(dvec(self.chart.jacobian(a).transpose() * r * 2.0))
    }

    fn grad2(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        let r = self.chart.eval(a) - self.chart.eval(b);
        Ok(dvec(self.chart.jacobian(b).transpose() * r * -2.0))
    }

    fn hess11(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        let r = self.chart.eval(a) - self.chart.eval(b);
        let j = self.chart.jacobian(a);
        Ok(dense2((j.transpose() * j + self.contract(a, &r)) * 2.0))
    }

    fn hess12(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        let (ja, jb) = (self.chart.jacobian(a), self.chart.jacobian(b));
        Ok(dense2(ja.transpose() * jb * -2.0))
    }

    fn hess22(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        let (a, b) = (self.coords(a)?, self.coords(b)?);
        let r = self.chart.eval(a) - self.chart.eval(b);
        let j = self.chart.jacobian(b);
        Ok(dense2((j.transpose() * j - self.contract(b, &r)) * 2.0))
    }

    fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        self.coords(p).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{check_consistency_identities, metric_eval};

    fn p(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn torus_values() {
        let m = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let s = 2f64.sqrt() + 1.0;
        assert_eq!(m.energy(&p(0.0, 0.0), &p(0.0, 0.0)).unwrap(), 0.0);
        let e = m.energy(&p(0.0, 0.0), &p(PI, 0.0)).unwrap();
        assert!((e - 4.0 * s * s).abs() < 1e-12);
        let g = metric_eval(&m, &p(0.0, 0.0), &p(1.0, 0.0), &p(1.0, 0.0)).unwrap();
        assert!((g - s * s).abs() < 1e-12);
    }

    #[test]
    fn sphere_metric_at_equator() {
        let m = make_embedded_model(SphereChart).unwrap();
        let g = metric_eval(&m, &p(PI / 2.0, 0.3), &p(0.0, 1.0), &p(0.0, 1.0)).unwrap();
        assert!((g - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_pole_is_a_domain_error() {
        let m = make_embedded_model(SphereChart).unwrap();
        assert!(matches!(m.energy(&p(0.0, 0.0), &p(1.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn second_derivatives_match_jacobian_differences() {
        let charts: [Box<dyn Chart>; 2] = [Box::new(TorusChart::new(2.0, 0.7)), Box::new(SphereChart)];
        let at = Vector2::new(0.9, 0.4);
        let h = 1e-5;
        for c in &charts {
            let sd = c.second_derivatives(at);
            for i in 0..2 {
                let mut e = Vector2::zeros();
                e[i] = h;
                let dj = (c.jacobian(at + e) - c.jacobian(at - e)) / (2.0 * h);
                for k in 0..3 {
                    for j in 0..2 {
                        assert!((dj[(k, j)] - sd[k][(i, j)]).abs() < 1e-8, "{}", c.name());
                    }
                }
            }
            let je = (c.eval(at + Vector2::new(h, 0.0)) - c.eval(at - Vector2::new(h, 0.0))) / (2.0 * h);
            assert!((je - c.jacobian(at).column(0)).norm() < 1e-9);
        }
    }

    #[test]
    fn torus_identities_hold() {
        let m = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let samples = vec![(p(1.0, 0.0), p(0.0, 1.0)), (p(0.3, -0.7), p(1.2, 0.5))];
        let rep = check_consistency_identities(&m, &p(0.4, 1.1), &samples, 1e-5).unwrap();
        assert!(rep.max() <= 1e-6, "{rep:?}");
    }
}
