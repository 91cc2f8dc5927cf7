//! Schild's ladder: discrete parallel transport by geodesic parallelograms,
//! its inverse, and the covariant difference quotients built on it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, HessianRequest, Point, Tangent};
use crate::error::{check_dim, Error, Result, ResultExt};
use crate::geodesic::{extend, midpoint, model_gauge};
use crate::linalg::SparseMatrix;
use crate::solver::{newton, FnSystem, NewtonConfig, SolveReport};

/// Smallest step accepted by the covariant quotients by default.
pub const DEFAULT_TAU_FLOOR: f64 = 1e-4;

/// One rung of the ladder: the parallelogram `(y, y+w, z, y+v)` with
/// diagonal midpoint `c`.
#[derive(Debug, Clone)]
pub struct LadderStep {
    pub y: Point,
    pub v: Tangent,
    pub w: Tangent,
    pub c: Point,
    pub z: Point,
    pub reports: [SolveReport; 2],
}

impl LadderStep {
    /// The transported vector `z − (y + v)`.
    pub fn transported(&self) -> Tangent {
        &self.z - &self.y - &self.v
    }
}

/// Builds the parallelogram transporting `w` from `y` to `y + v`.
pub fn ladder_step<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    v: &Tangent,
    w: &Tangent,
    config: &NewtonConfig,
) -> Result<LadderStep> {
    check_dim(model.dim(), v.len())?;
    check_dim(model.dim(), w.len())?;
    let c_init = y + (v + w) * 0.5;
    let (c, r1) = midpoint(model, &(y + w), &(y + v), Some(&c_init), config).stage(|| "midpoint".into())?;
    let (z, r2) = extend(model, y, &c, None, config).stage(|| "extension".into())?;
    Ok(LadderStep { y: y.clone(), v: v.clone(), w: w.clone(), c, z, reports: [r1, r2] })
}

/// Transport of `w` from `y` to `y + v` by one ladder step.
pub fn transport_step<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    v: &Tangent,
    w: &Tangent,
    config: &NewtonConfig,
) -> Result<Tangent> {
    Ok(ladder_step(model, y, v, w, config)?.transported())
}

/// Inverse transport of `w` from `y + v` back to `y`.
///
/// Solves for `(z, c)` with `(z, c, y+v)` and `(y, c, y+v+w)` both discrete
/// 2-geodesics and returns `z − y`. The start is `c = y + (v+w)/2`,
/// `z = y + w`.
pub fn inverse_transport<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    v: &Tangent,
    w: &Tangent,
    config: &NewtonConfig,
) -> Result<(Tangent, SolveReport)> {
    model.check_point(y)?;
    check_dim(model.dim(), v.len())?;
    check_dim(model.dim(), w.len())?;
    let d = model.dim();
    let yv = y + v;
    let yvw = &yv + w;
    model.check_point(&yv)?;
    model.check_point(&yvw)?;

    let split = |x: &DVector<f64>| (x.rows(0, d).into_owned(), x.rows(d, d).into_owned());
    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (z, c) = split(x);
        let mut r = DVector::zeros(2 * d);
        r.rows_mut(0, d).copy_from(&(model.grad2(&z, &c)? + model.grad1(&c, &yv)?));
        r.rows_mut(d, d).copy_from(&(model.grad2(y, &c)? + model.grad1(&c, &yvw)?));
        Ok(r)
    };
    let jacobian = |x: &DVector<f64>| -> Result<SparseMatrix> {
        let (z, c) = split(x);
        let zc = model.hessians(&z, &c, HessianRequest { h11: false, h12: true, h22: true })?;
        let mut j = SparseMatrix::new(2 * d, 2 * d);
        j.add_block_transposed(0, 0, zc.h12.as_ref().expect("requested"), 1.0);
        j.add_block(0, d, zc.h22.as_ref().expect("requested"), 1.0);
        j.add_block(0, d, &model.hess11(&c, &yv)?, 1.0);
        j.add_block(d, d, &model.hess22(y, &c)?, 1.0);
        j.add_block(d, d, &model.hess11(&c, &yvw)?, 1.0);
        Ok(j)
    };
    let mut x0 = DVector::zeros(2 * d);
    x0.rows_mut(0, d).copy_from(&(y + w));
    x0.rows_mut(d, d).copy_from(&(y + (v + w) * 0.5));
    let gauge = model_gauge(model, y, 2);
    let (x, report) = newton(
        &FnSystem { residual, jacobian },
        x0,
        gauge.as_ref(),
        config,
        "first-order parallelogram",
    )?;
    Ok((x.rows(0, d) - y, report))
}

/// Transport of `w₀` along the polygon through `waypoints`, each leg split
/// into `substeps` ladder steps. The payload is scaled by `1/substeps`
/// during transport and scaled back at the end.
pub fn transport_polygonal<M: EnergyModel + ?Sized>(
    model: &M,
    waypoints: &[Point],
    w0: &Tangent,
    substeps: usize,
    config: &NewtonConfig,
) -> Result<Tangent> {
    if waypoints.len() < 2 || substeps == 0 {
        return Err(Error::InvalidInput("need at least one leg and one substep".into()));
    }
    let tau = 1.0 / substeps as f64;
    let mut w = w0 * tau;
    for (leg, pair) in waypoints.windows(2).enumerate() {
        let v = (&pair[1] - &pair[0]) * tau;
        for j in 0..substeps {
            let y = &pair[0] + &v * j as f64;
            w = transport_step(model, &y, &v, &w, config).stage(|| format!("leg {leg}, step {j}"))?;
        }
    }
    Ok(w / tau)
}

/// Sign convention and order of a covariant difference quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// First-order quotient from one transport along `τv`.
    OneSided,
    /// Second-order quotient from transports along `±τv`.
    #[default]
    Central,
}

impl Variant {
    /// Smallest admissible inner-step exponent.
    pub fn default_beta(self) -> f64 {
        match self {
            Variant::OneSided => 2.0,
            Variant::Central => 1.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::OneSided => "one-sided",
            Variant::Central => "central",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-sided" | "one_sided" => Ok(Variant::OneSided),
            "central" => Ok(Variant::Central),
            _ => Err(Error::InvalidInput(format!("unknown variant {s:?}"))),
        }
    }
}

/// Largest outer step accepted by curvature queries by default.
pub const DEFAULT_TAU_MAX: f64 = 1.0;

/// Newton settings plus the admissible step range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovOptions {
    pub newton: NewtonConfig,
    pub tau_floor: f64,
    pub tau_max: f64,
}

impl CovOptions {
    pub fn for_model<M: EnergyModel + ?Sized>(model: &M) -> Self {
        CovOptions {
            newton: NewtonConfig::for_model(model),
            tau_floor: DEFAULT_TAU_FLOOR,
            tau_max: DEFAULT_TAU_MAX,
        }
    }
}

fn check_tau(tau: f64, floor: f64) -> Result<()> {
    if !tau.is_finite() || tau.abs() < floor {
        return Err(Error::InvalidInput(format!("step {tau} below the floor {floor}")));
    }
    Ok(())
}

/// `(P⁻¹ τ w(y+τv) − τ w(y)) / τ²`; negative `τ` gives the backward quotient.
pub fn cov_quotient_one_sided<M, F>(
    model: &M,
    y: &Point,
    v: &Tangent,
    field: F,
    tau: f64,
    opts: &CovOptions,
) -> Result<Tangent>
where
    M: EnergyModel + ?Sized,
    F: Fn(&Point) -> Result<Tangent>,
{
    check_tau(tau, opts.tau_floor)?;
    Ok(cov_quotient(model, y, v, &field, tau, Variant::OneSided, &opts.newton)?.0)
}

/// `[P⁻¹ τ w(y+τv) + P⁻¹(−τ w(y−τv))] / (2τ²)` with the second transport
/// taken along `−τv`.
pub fn cov_quotient_central<M, F>(
    model: &M,
    y: &Point,
    v: &Tangent,
    field: F,
    tau: f64,
    opts: &CovOptions,
) -> Result<Tangent>
where
    M: EnergyModel + ?Sized,
    F: Fn(&Point) -> Result<Tangent>,
{
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("central quotient needs τ > 0, got {tau}")));
    }
    check_tau(tau, opts.tau_floor)?;
    Ok(cov_quotient(model, y, v, &field, tau, Variant::Central, &opts.newton)?.0)
}

/// Covariant quotient without the step floor, returning the inverse
/// transport reports.
pub(crate) fn cov_quotient<M, F>(
    model: &M,
    y: &Point,
    v: &Tangent,
    field: &F,
    tau: f64,
    variant: Variant,
    config: &NewtonConfig,
) -> Result<(Tangent, Vec<SolveReport>)>
where
    M: EnergyModel + ?Sized,
    F: Fn(&Point) -> Result<Tangent> + ?Sized,
{
    check_dim(model.dim(), v.len())?;
    let tv = v * tau;
    let ahead = y + &tv;
    let w_ahead = field(&ahead).stage(|| "field at y + τv".into())? * tau;
    let (fwd, r1) =
        inverse_transport(model, y, &tv, &w_ahead, config).stage(|| "inverse transport along +τv".into())?;
    match variant {
        Variant::OneSided => {
            let here = field(y).stage(|| "field at y".into())? * tau;
            Ok(((fwd - here) / (tau * tau), vec![r1]))
        }
        Variant::Central => {
            let behind = y - &tv;
            let w_behind = field(&behind).stage(|| "field at y − τv".into())? * -tau;
            let (bwd, r2) = inverse_transport(model, y, &(-&tv), &w_behind, config)
                .stage(|| "inverse transport along −τv".into())?;
            Ok(((fwd + bwd) / (2.0 * tau * tau), vec![r1, r2]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{make_embedded_model, make_flat_model, SphereChart, TorusChart};
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn flat_transport_is_identity() {
        let m = make_flat_model(3);
        let cfg = NewtonConfig::for_model(&m);
        let y = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let v = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let w = DVector::from_vec(vec![-0.2, 0.05, 0.1]);
        assert!((transport_step(&m, &y, &v, &w, &cfg).unwrap() - &w).norm() < 1e-14);
        assert!((inverse_transport(&m, &y, &v, &w, &cfg).unwrap().0 - &w).norm() < 1e-14);
        let poly = [y.clone(), &y + &v, &y - &w];
        assert!((transport_polygonal(&m, &poly, &w, 3, &cfg).unwrap() - &w).norm() < 1e-13);
    }

    #[test]
    fn zero_payload_stays_zero() {
        let m = make_embedded_model(TorusChart::new(2.0, 0.6)).unwrap();
        let cfg = NewtonConfig::for_model(&m);
        let out = transport_step(&m, &v2(0.3, 0.4), &v2(0.05, -0.02), &v2(0.0, 0.0), &cfg).unwrap();
        assert!(out.norm() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward_step() {
        let m = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let cfg = NewtonConfig::for_model(&m);
        let (y, v, w) = (v2(0.2, 0.7), v2(0.03, 0.02), v2(-0.01, 0.04));
        let far = transport_step(&m, &y, &v, &w, &cfg).unwrap();
        let back = inverse_transport(&m, &y, &v, &far, &cfg).unwrap().0;
        assert!((back - w).norm() < 1e-11);
    }

    #[test]
    fn single_leg_matches_a_step() {
        let m = make_embedded_model(SphereChart).unwrap();
        let cfg = NewtonConfig::for_model(&m);
        let (y, v, w) = (v2(1.0, 0.2), v2(0.05, 0.04), v2(0.02, -0.03));
        let poly = transport_polygonal(&m, &[y.clone(), &y + &v], &w, 1, &cfg).unwrap();
        let step = transport_step(&m, &y, &v, &w, &cfg).unwrap();
        assert!((poly - step).norm() < 1e-15);
    }

    #[test]
    fn latitude_loop_holonomy() {
        // Around the latitude at colatitude α a vector turns by 2π cos α.
        let m = make_embedded_model(SphereChart).unwrap();
        let cfg = NewtonConfig::for_model(&m);
        let alpha: f64 = 1.1;
        let loop_pts = [v2(alpha, 0.0), v2(alpha, 2.0 * PI)];
        let w0 = v2(1.0, 0.0);
        let angle = |n: usize| {
            let w = transport_polygonal(&m, &loop_pts, &w0, n, &cfg).unwrap();
            // Orthonormal frame (e_θ, e_φ / sin α).
            (w[1] * alpha.sin()).atan2(w[0])
        };
        let expect = {
            let t = 2.0 * PI * alpha.cos();
            t.sin().atan2(t.cos())
        };
        let err = |n| (angle(n) - expect).abs().min((angle(n) + expect).abs());
        let (e1, e2) = (err(64), err(128));
        assert!(e2 < 0.02, "holonomy error {e2}");
        assert!(e2 < e1);
    }

    #[test]
    fn flat_linear_field_quotients() {
        let m = make_flat_model(2);
        let opts = CovOptions::for_model(&m);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        let field = |p: &Point| Ok(&a * p);
        let (y, v) = (v2(0.4, -0.2), v2(0.7, 1.1));
        let expect = &a * &v;
        let one = cov_quotient_one_sided(&m, &y, &v, field, 1e-2, &opts).unwrap();
        let two = cov_quotient_central(&m, &y, &v, field, 1e-2, &opts).unwrap();
        assert!((one - &expect).norm() < 1e-8);
        assert!((two - &expect).norm() < 1e-8);
        let constant = |_: &Point| Ok(v2(3.0, -1.0));
        assert!(cov_quotient_central(&m, &y, &v, constant, 1e-2, &opts).unwrap().norm() < 1e-8);
        assert!(cov_quotient_one_sided(&m, &y, &v, constant, -1e-2, &opts).unwrap().norm() < 1e-8);
    }

    #[test]
    fn step_floor_is_enforced() {
        let m = make_flat_model(2);
        let opts = CovOptions::for_model(&m);
        let field = |_: &Point| Ok(v2(1.0, 0.0));
        let (y, v) = (v2(0.0, 0.0), v2(1.0, 0.0));
        assert!(cov_quotient_central(&m, &y, &v, field, 1e-5, &opts).is_err());
        assert!(cov_quotient_central(&m, &y, &v, field, -1e-2, &opts).is_err());
        let loose = CovOptions { tau_floor: 1e-6, ..opts };
        assert!(cov_quotient_central(&m, &y, &v, field, 1e-5, &loose).is_ok());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("one-sided".parse::<Variant>().unwrap(), Variant::OneSided);
        assert_eq!("central".parse::<Variant>().unwrap().default_beta(), 1.5);
        assert!("both".parse::<Variant>().is_err());
    }
}
