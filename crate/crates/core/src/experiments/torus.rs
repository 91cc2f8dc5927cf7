//! Curvature maps and convergence studies.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ConvergenceModel, ExperimentConfig};
use super::oracle::AnalyticOracle;
use super::sphere::stretch_query;
use super::Output;
use crate::curvature::{sectional_curvature, CurvatureQuery};
use crate::energy::{make_embedded_model, EnergyModel, TorusChart};
use crate::error::{Error, Result};
use crate::shells::{shell_energy_model, GaugeSpec};
use crate::transport::{CovOptions, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapRow {
    pub u: f64,
    pub v: f64,
    pub kappa: Option<f64>,
    pub analytic: f64,
    /// `κ − K`.
    pub error: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMap {
    pub rows: Vec<MapRow>,
    /// NaN when any point failed.
    pub max_abs_error: f64,
}

impl CurvatureMap {
    pub fn invalid_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.valid).count()
    }
}

/// `κ(∂₀, ∂₁)` at every chart point of a two-dimensional model, compared
/// with `analytic`. Failed points are logged and marked invalid.
pub fn curvature_map<M, F>(
    model: &M,
    points: &[[f64; 2]],
    analytic: F,
    tau: f64,
    beta: f64,
    variant: Variant,
    opts: &CovOptions,
) -> Result<CurvatureMap>
where
    M: EnergyModel + Sync + ?Sized,
    F: Fn([f64; 2]) -> f64 + Sync,
{
    if model.dim() != 2 {
        return Err(Error::InvalidInput(format!("curvature map needs a 2-dimensional model, got {}", model.dim())));
    }
    let e0 = DVector::from_vec(vec![1.0, 0.0]);
    let e1 = DVector::from_vec(vec![0.0, 1.0]);
    let rows: Vec<MapRow> = points
        .par_iter()
        .map(|&p| {
            let q = CurvatureQuery::new(DVector::from_vec(p.to_vec()), e0.clone(), e1.clone(), tau, variant)
                .with_beta(beta);
            let k = analytic(p);
            match sectional_curvature(model, &q, opts) {
                Ok(r) => MapRow { u: p[0], v: p[1], kappa: Some(r.sectional), analytic: k, error: Some(r.sectional - k), valid: true },
                Err(e) => {
                    log::warn!("curvature at {p:?} failed: {e}");
                    MapRow { u: p[0], v: p[1], kappa: None, analytic: k, error: None, valid: false }
                }
            }
        })
        .collect();
    let max_abs_error = if rows.iter().all(|r| r.valid) {
        rows.iter().filter_map(|r| r.error).map(f64::abs).fold(0.0, f64::max)
    } else {
        f64::NAN
    };
    Ok(CurvatureMap { rows, max_abs_error })
}

fn torus_setup(config: &ExperimentConfig) -> Result<(AnalyticOracle, crate::energy::EmbeddedModel)> {
    let t = &config.torus;
    let oracle = AnalyticOracle::torus(t.major, t.minor);
    oracle.self_test()?;
    Ok((oracle, make_embedded_model(TorusChart::new(t.major, t.minor))?))
}

/// Discrete against analytic Gaussian curvature on a `grid × grid` chart
/// grid at the first configured `τ`.
pub fn torus_map(config: &ExperimentConfig) -> Result<CurvatureMap> {
    let (oracle, model) = torus_setup(config)?;
    let n = config.torus.grid;
    let step = 2.0 * PI / n as f64;
    let points: Vec<[f64; 2]> = (0..n).flat_map(|i| (0..n).map(move |j| [i as f64 * step, j as f64 * step])).collect();
    let opts = CovOptions::for_model(&model);
    curvature_map(
        &model,
        &points,
        |p| oracle.gaussian_curvature(p),
        config.taus[0],
        config.beta_for(config.variant),
        config.variant,
        &opts,
    )
}

#[derive(Serialize)]
struct MapCsvRow<'a> {
    kind: &'a str,
    u: Option<f64>,
    v: Option<f64>,
    kappa: Option<f64>,
    analytic: Option<f64>,
    error: Option<f64>,
    valid: bool,
}

pub(crate) fn run_map(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let map = torus_map(config)?;
    let mut rows: Vec<MapCsvRow> = map
        .rows
        .iter()
        .map(|r| MapCsvRow {
            kind: "point",
            u: Some(r.u),
            v: Some(r.v),
            kappa: r.kappa,
            analytic: Some(r.analytic),
            error: r.error,
            valid: r.valid,
        })
        .collect();
    let invalid = map.invalid_count();
    rows.push(MapCsvRow {
        kind: "max_abs_error",
        u: None,
        v: None,
        kappa: None,
        analytic: None,
        error: Some(map.max_abs_error),
        valid: invalid == 0,
    });
    out.rows("torus_map.csv", &rows)?;
    Ok((invalid, serde_json::json!({ "points": map.rows.len(), "max_abs_error": map.max_abs_error })))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub kappa_one_sided: Option<f64>,
    pub kappa_central: Option<f64>,
    pub rel_error_one_sided: Option<f64>,
    pub rel_error_central: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub model: ConvergenceModel,
    /// Analytic value, or the value at `τ_min` per variant.
    pub reference_one_sided: f64,
    pub reference_central: f64,
    pub rows: Vec<ConvergenceRow>,
    pub slope_one_sided: Option<f64>,
    pub slope_central: Option<f64>,
    /// Errors of valid rows strictly decrease with `τ`.
    pub monotone_one_sided: bool,
    pub monotone_central: bool,
}

/// Least-squares slope of `log₁₀ e` against `log₁₀ τ`, skipping the
/// `skip` largest steps and non-positive errors. `pairs` is ordered by
/// descending `τ`.
pub fn fit_slope(pairs: &[(f64, Option<f64>)], skip: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .skip(skip)
        .filter_map(|&(t, e)| e.filter(|e| *e > 0.0).map(|e| (t.log10(), e.log10())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn strictly_decreasing(errors: impl Iterator<Item = Option<f64>>) -> bool {
    let e: Vec<f64> = errors.flatten().collect();
    e.windows(2).all(|w| w[1] < w[0])
}

/// Number of largest steps excluded from slope fits as pre-asymptotic.
const PRE_ASYMPTOTIC: usize = 2;

/// Relative error of both variants over the configured steps: against the
/// analytic curvature on the torus, against the `τ_min` value on the
/// stretched sphere shell.
pub fn convergence(config: &ExperimentConfig) -> Result<Convergence> {
    let variants = [Variant::OneSided, Variant::Central];
    let jobs: Vec<(usize, Variant)> =
        (0..config.taus.len()).flat_map(|i| variants.iter().map(move |&v| (i, v))).collect();
    let (values, references): (Vec<Result<f64>>, [f64; 2]) = match config.model {
        ConvergenceModel::Torus => {
            let (oracle, model) = torus_setup(config)?;
            let opts = CovOptions::for_model(&model);
            let p = config.torus.point;
            let y = DVector::from_vec(p.to_vec());
            let (e0, e1) = (DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0]));
            let eval = |tau: f64, var: Variant| {
                let q = CurvatureQuery::new(y.clone(), e0.clone(), e1.clone(), tau, var).with_beta(config.beta_for(var));
                sectional_curvature(&model, &q, &opts).map(|r| r.sectional)
            };
            let values = jobs.par_iter().map(|&(i, v)| eval(config.taus[i], v)).collect();
            let k = oracle.gaussian_curvature(p);
            (values, [k, k])
        }
        ConvergenceModel::SphereShell => {
            AnalyticOracle::sphere().self_test()?;
            let (mesh, v, w) = stretch_query(config.sphere_level)?;
            let model = shell_energy_model(&mesh, config.shell, GaugeSpec::ProjectRigid)?;
            let opts = CovOptions::for_model(&model);
            let eval = |tau: f64, var: Variant| {
                let q = CurvatureQuery::new(mesh.positions.clone(), v.clone(), w.clone(), tau, var)
                    .with_beta(config.beta_for(var));
                sectional_curvature(&model, &q, &opts).map(|r| r.sectional)
            };
            let tau_min = config.tau_min.ok_or_else(|| Error::InvalidInput("self-convergence needs tau_min".into()))?;
            let refs: Vec<Result<f64>> = variants.par_iter().map(|&var| eval(tau_min, var)).collect();
            let mut r = [0.0; 2];
            for (slot, value) in r.iter_mut().zip(refs) {
                *slot = value.map_err(|e| Error::Stage { stage: "reference value at tau_min".into(), source: Box::new(e) })?;
            }
            (jobs.par_iter().map(|&(i, v)| eval(config.taus[i], v)).collect(), r)
        }
    };
    let mut values = values.into_iter();
    let rows: Vec<ConvergenceRow> = config
        .taus
        .iter()
        .map(|&tau| {
            let mut k = [None, None];
            for slot in &mut k {
                match values.next().expect("one value per job") {
                    Ok(x) => *slot = Some(x),
                    Err(e) => log::warn!("κ at τ = {tau} failed: {e}"),
                }
            }
            let rel = |x: Option<f64>, r: f64| x.map(|x| ((x - r) / r).abs());
            ConvergenceRow {
                tau,
                kappa_one_sided: k[0],
                kappa_central: k[1],
                rel_error_one_sided: rel(k[0], references[0]),
                rel_error_central: rel(k[1], references[1]),
                valid: k[0].is_some() && k[1].is_some(),
            }
        })
        .collect();
    let valid = || rows.iter().filter(|r| r.valid);
    let pairs = |f: fn(&ConvergenceRow) -> Option<f64>| -> Vec<(f64, Option<f64>)> {
        rows.iter().map(|r| (r.tau, if r.valid { f(r) } else { None })).collect()
    };
    Ok(Convergence {
        model: config.model,
        reference_one_sided: references[0],
        reference_central: references[1],
        slope_one_sided: fit_slope(&pairs(|r| r.rel_error_one_sided), PRE_ASYMPTOTIC),
        slope_central: fit_slope(&pairs(|r| r.rel_error_central), PRE_ASYMPTOTIC),
        monotone_one_sided: strictly_decreasing(valid().map(|r| r.rel_error_one_sided)),
        monotone_central: strictly_decreasing(valid().map(|r| r.rel_error_central)),
        rows,
    })
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    kind: &'static str,
    tau: Option<f64>,
    kappa_one_sided: Option<f64>,
    kappa_central: Option<f64>,
    rel_error_one_sided: Option<f64>,
    rel_error_central: Option<f64>,
    valid: bool,
}

pub(crate) fn run_convergence(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let c = convergence(config)?;
    let mut rows: Vec<ConvergenceCsvRow> = c
        .rows
        .iter()
        .map(|r| ConvergenceCsvRow {
            kind: "point",
            tau: Some(r.tau),
            kappa_one_sided: r.kappa_one_sided,
            kappa_central: r.kappa_central,
            rel_error_one_sided: r.rel_error_one_sided,
            rel_error_central: r.rel_error_central,
            valid: r.valid,
        })
        .collect();
    rows.push(ConvergenceCsvRow {
        kind: "slope",
        tau: None,
        kappa_one_sided: None,
        kappa_central: None,
        rel_error_one_sided: c.slope_one_sided,
        rel_error_central: c.slope_central,
        valid: c.slope_one_sided.is_some() && c.slope_central.is_some(),
    });
    out.rows("converge.csv", &rows)?;
    let invalid = c.rows.iter().filter(|r| !r.valid).count();
    Ok((
        invalid,
        serde_json::json!({
            "model": c.model,
            "reference_one_sided": c.reference_one_sided,
            "reference_central": c.reference_central,
            "slope_one_sided": c.slope_one_sided,
            "slope_central": c.slope_central,
            "monotone_one_sided": c.monotone_one_sided,
            "monotone_central": c.monotone_central,
        }),
    ))
}
