//! Damped Newton iteration for the coupled Euler–Lagrange systems.
//!
//! Gauge constraints are handled by bordering: the increment solves
//! `[J Cᵀ; C 0] [δ; λ] = [−r; 0]`, so every iterate stays in the affine
//! slice through the initial guess. Convergence is measured on the
//! residual projected onto the orthogonal complement of the constraint rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{check_dim, Error, NonConvergence, Result};
use crate::linalg::{self, LinearSolverKind, SparseMatrix};

/// Armijo backtracking on `½|r|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Damping {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for Damping {
    fn default() -> Self {
        Damping { shrink: 0.5, sufficient_decrease: 1e-4, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Absolute residual tolerance, in gradient units.
    pub residual_tol_abs: f64,
    /// Tolerance relative to the initial residual.
    pub residual_tol_rel: f64,
    pub max_iterations: usize,
    pub damping: Damping,
    pub linear_solver: LinearSolverKind,
    /// Extra full Newton steps taken after the tolerance is met, each kept
    /// only if it lowers the residual.
    pub polish_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            residual_tol_abs: 1e-12,
            residual_tol_rel: 0.0,
            max_iterations: 50,
            damping: Damping::default(),
            linear_solver: LinearSolverKind::DenseDirect,
            polish_iterations: 1,
        }
    }
}

impl NewtonConfig {
    /// Defaults scaled to a model: `1e-12 · metric_scale · √d` and the
    /// model's preferred linear solver.
    pub fn for_model<M: EnergyModel + ?Sized>(model: &M) -> Self {
        NewtonConfig {
            residual_tol_abs: 1e-12 * model.metric_scale() * (model.dim() as f64).sqrt(),
            linear_solver: model.preferred_solver(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.damping;
        if !(self.residual_tol_abs > 0.0)
            || self.residual_tol_rel < 0.0
            || self.max_iterations == 0
            || !(d.shrink > 0.0 && d.shrink < 1.0)
            || !(d.sufficient_decrease > 0.0 && d.sufficient_decrease < 0.5)
        {
            return Err(Error::InvalidInput(format!("invalid Newton configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub damping_events: usize,
    pub residual_history: Vec<f64>,
    /// How the initial guess was produced.
    pub initialization: String,
}

impl SolveReport {
    /// Combined statistics of several solves (iterations and damping add up,
    /// residuals take the worst case).
    pub fn merge(reports: &[&SolveReport]) -> SolveReport {
        SolveReport {
            converged: reports.iter().all(|r| r.converged),
            initial_residual: reports.iter().map(|r| r.initial_residual).fold(0.0, f64::max),
            final_residual: reports.iter().map(|r| r.final_residual).fold(0.0, f64::max),
            tolerance: reports.iter().map(|r| r.tolerance).fold(0.0, f64::max),
            iterations: reports.iter().map(|r| r.iterations).sum(),
            damping_events: reports.iter().map(|r| r.damping_events).sum(),
            residual_history: Vec::new(),
            initialization: String::new(),
        }
    }
}

/// A square nonlinear system `r(x) = 0` with its Jacobian.
pub trait NewtonSystem {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>) -> Result<SparseMatrix>;
}

/// A [`NewtonSystem`] from fallible closures.
pub struct FnSystem<R, J> {
    pub residual: R,
    pub jacobian: J,
}

impl<R, J> NewtonSystem for FnSystem<R, J>
where
    R: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    J: Fn(&DVector<f64>) -> Result<SparseMatrix>,
{
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (self.residual)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<SparseMatrix> {
        (self.jacobian)(x)
    }
}

struct ClosureSystem<R, J> {
    residual: R,
    jacobian: J,
}

impl<R, J> NewtonSystem for ClosureSystem<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.residual)(x))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<SparseMatrix> {
        Ok(SparseMatrix::from_dense(&(self.jacobian)(x)))
    }
}

/// Newton solve from closures with a dense Jacobian. `gauge` rows span the
/// directions increments must be orthogonal to.
pub fn solve_system<R, J>(
    residual: R,
    jacobian: J,
    init: &DVector<f64>,
    gauge: Option<&DMatrix<f64>>,
    config: &NewtonConfig,
) -> Result<(DVector<f64>, SolveReport)>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let gauge = gauge.map(GaugeRows::new);
    newton(&ClosureSystem { residual, jacobian }, init.clone(), gauge.as_ref(), config, "caller supplied")
}

/// Orthonormal constraint rows `C`; Newton increments satisfy `C δ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeRows {
    rows: DMatrix<f64>,
}

impl GaugeRows {
    /// Orthonormalizes arbitrary constraint rows.
    pub fn new(rows: &DMatrix<f64>) -> Self {
        GaugeRows { rows: linalg::orthonormal_rows(rows) }
    }

    /// Wraps rows the caller guarantees to be orthonormal.
    pub fn from_orthonormal(rows: DMatrix<f64>) -> Self {
        GaugeRows { rows }
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// Gauge for `copies` stacked unknowns, each constrained by `self`.
    pub fn block_diagonal(&self, copies: usize) -> Self {
        let (m, n) = self.rows.shape();
        let mut out = DMatrix::zeros(m * copies, n * copies);
        for k in 0..copies {
            out.view_mut((k * m, k * n), (m, n)).copy_from(&self.rows);
        }
        GaugeRows { rows: out }
    }

    /// `r − Cᵀ C r`.
    pub fn project(&self, r: &DVector<f64>) -> DVector<f64> {
        let c = &self.rows * r;
        r - self.rows.tr_mul(&c)
    }
}

/// Core damped Newton loop.
pub fn newton<S: NewtonSystem + ?Sized>(
    system: &S,
    init: DVector<f64>,
    gauge: Option<&GaugeRows>,
    config: &NewtonConfig,
    initialization: &str,
) -> Result<(DVector<f64>, SolveReport)> {
    config.validate()?;
    let n = init.len();
    if let Some(g) = gauge {
        check_dim(n, g.rows.ncols())?;
    }
    let measure = |r: &DVector<f64>| match gauge {
        Some(g) => g.project(r).norm(),
        None => r.norm(),
    };

    let mut x = init;
    let mut r = system.residual(&x)?;
    let mut res = measure(&r);
    let tol = config.residual_tol_abs.max(config.residual_tol_rel * res);
    let mut report = SolveReport {
        initial_residual: res,
        tolerance: tol,
        residual_history: vec![res],
        initialization: initialization.to_string(),
        ..Default::default()
    };

    let step = |x: &DVector<f64>, r: &DVector<f64>, iteration: usize| -> Result<DVector<f64>> {
        let jac = system.jacobian(x)?;
        let (mat, rhs) = match gauge {
            None => (jac, -r),
            Some(g) => {
                let m = g.rows.nrows();
                let mut b = SparseMatrix::with_capacity(n + m, n + m, jac.entries().len() + 2 * m * n);
                b.add_block(0, 0, &jac, 1.0);
                b.add_dense_block(n, 0, &g.rows, 1.0);
                b.add_dense_block(0, n, &g.rows.transpose(), 1.0);
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-r));
                (b, rhs)
            }
        };
        let sol = linalg::solve(&mat, &rhs, config.linear_solver)
            .ok_or(Error::SingularSystem { iteration })?;
        Ok(sol.rows(0, n).into_owned())
    };

    loop {
        if res <= tol {
            report.converged = true;
            break;
        }
        if report.iterations >= config.max_iterations {
            report.final_residual = res;
            return Err(Error::NonConvergence(Box::new(NonConvergence { best: x, report })));
        }
        let delta = step(&x, &r, report.iterations)?;
        report.iterations += 1;

        let c = config.damping.sufficient_decrease;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.damping.max_backtracks {
            let trial = &x + &delta * alpha;
            if let Ok(rt) = system.residual(&trial) {
                let rn = measure(&rt);
                if rn.is_finite() && rn * rn <= (1.0 - 2.0 * c * alpha) * res * res {
                    accepted = Some((trial, rt, rn));
                    break;
                }
            }
            alpha *= config.damping.shrink;
            report.damping_events += 1;
        }
        match accepted {
            Some((xt, rt, rn)) => {
                x = xt;
                r = rt;
                res = rn;
                report.residual_history.push(res);
            }
            None => {
                report.final_residual = res;
                return Err(Error::NonConvergence(Box::new(NonConvergence { best: x, report })));
            }
        }
    }

    for _ in 0..config.polish_iterations {
        if res == 0.0 {
            break;
        }
        let Ok(delta) = step(&x, &r, report.iterations) else { break };
        let trial = &x + delta;
        match system.residual(&trial) {
            Ok(rt) if measure(&rt) < res => {
                res = measure(&rt);
                x = trial;
                r = rt;
                report.iterations += 1;
                report.residual_history.push(res);
            }
            _ => break,
        }
    }
    report.final_residual = res;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn linear_system_in_one_step() {
        let a = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let (x, rep) = solve_system(
            |x| x - &a,
            |_| DMatrix::identity(3, 3),
            &DVector::from_vec(vec![10.0, 3.0, -7.0]),
            None,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert_eq!(x, a);
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn scalar_square_root_converges_quadratically() {
        let cfg = NewtonConfig { residual_tol_abs: 1e-14, polish_iterations: 0, ..Default::default() };
        let (x, rep) = solve_system(
            |x| scalar(x[0] * x[0] - 4.0),
            |x| DMatrix::from_element(1, 1, 2.0 * x[0]),
            &scalar(3.0),
            None,
            &cfg,
        )
        .unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        let h = &rep.residual_history;
        for k in 0..h.len() - 1 {
            if h[k] < 1e-3 && h[k + 1] > 0.0 {
                assert!(h[k + 1] / (h[k] * h[k]) < 1.0, "ratio {}", h[k + 1] / (h[k] * h[k]));
            }
        }
    }

    #[test]
    fn gauge_increments_are_feasible() {
        // r(x) = x has the whole plane as Jacobian range; with the
        // constraint row (1, 1)/√2 increments must keep x₀ + x₁ fixed.
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let init = DVector::from_vec(vec![1.0, -1.0]);
        let (x, rep) =
            solve_system(|x| x.clone(), |_| DMatrix::identity(2, 2), &init, Some(&c), &NewtonConfig::default())
                .unwrap();
        assert!(rep.converged);
        assert!((x[0] + x[1]).abs() < 1e-15);
        assert!(x.norm() < 1e-12);
    }

    #[test]
    fn iteration_limit_reports_best_iterate() {
        // x² + 1 has no real root.
        let cfg = NewtonConfig { max_iterations: 5, ..Default::default() };
        let err = solve_system(
            |x| scalar(x[0] * x[0] + 1.0),
            |x| DMatrix::from_element(1, 1, 2.0 * x[0]),
            &scalar(0.5),
            None,
            &cfg,
        )
        .unwrap_err();
        match err {
            Error::NonConvergence(nc) => {
                assert!(!nc.report.converged);
                assert!(nc.best[0].is_finite());
            }
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn singular_jacobian_names_iteration() {
        let err = solve_system(
            |x| scalar(x[0] - 1.0),
            |_| DMatrix::zeros(1, 1),
            &scalar(0.0),
            None,
            &NewtonConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularSystem { iteration: 0 }));
    }

    #[test]
    fn dense_solves_are_deterministic() {
        let run = || {
            solve_system(
                |x| DVector::from_vec(vec![x[0].sin() + x[1] - 0.3, x[0] * x[1] - 0.01]),
                |x| DMatrix::from_row_slice(2, 2, &[x[0].cos(), 1.0, x[1], x[0]]),
                &DVector::from_vec(vec![0.5, 0.5]),
                None,
                &NewtonConfig::default(),
            )
            .unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = NewtonConfig { damping: Damping { shrink: 1.5, ..Default::default() }, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
