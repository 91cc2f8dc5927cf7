//! The stretched-sphere query and the bending-weight sweep.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::oracle::AnalyticOracle;
use super::Output;
use crate::curvature::{sectional_curvature, CurvatureQuery};
use crate::energy::Tangent;
use crate::error::Result;
use crate::shells::{make_sphere_shell, shell_energy_model, GaugeSpec, ShellMesh, ShellParams};
use crate::transport::CovOptions;

/// Unit icosphere with the stretch directions `v_i = (x_i/2, 0, 0)` and
/// `w_i = (0, y_i/2, 0)`.
pub fn stretch_query(level: usize) -> Result<(ShellMesh, Tangent, Tangent)> {
    let mesh = make_sphere_shell(level)?;
    let n = mesh.vertex_count();
    let mut v = DVector::zeros(3 * n);
    let mut w = DVector::zeros(3 * n);
    for i in 0..n {
        v[3 * i] = 0.5 * mesh.positions[3 * i];
        w[3 * i + 1] = 0.5 * mesh.positions[3 * i + 1];
    }
    Ok((mesh, v, w))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub kappa: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BendingSweep {
    /// Configured weights in order, then `μ = 0` if requested.
    pub rows: Vec<SweepRow>,
    /// `|κ|` strictly decreases over the positive weights.
    pub monotone: bool,
    /// `(|κ_k| − |κ_{k+1}|) / |κ_k|` over consecutive positive weights.
    pub relative_decrements: Vec<f64>,
    /// The last decrement is below 10% and below half the largest one.
    pub plateau: bool,
    /// Sign of every valid value, `−1`, `0` or `1`.
    pub signs: Vec<i8>,
}

/// Sectional curvature of the stretched-sphere plane for each bending
/// weight, at the first configured `τ`.
pub fn bending_sweep(config: &ExperimentConfig) -> Result<BendingSweep> {
    AnalyticOracle::sphere().self_test()?;
    let (mesh, v, w) = stretch_query(config.sphere_level)?;
    let mut mus = config.bending_weights.clone();
    if config.include_membrane_only {
        mus.push(0.0);
    }
    let tau = config.taus[0];
    let beta = config.beta_for(config.variant);
    let rows: Vec<SweepRow> = mus
        .par_iter()
        .map(|&mu| {
            let params = ShellParams { bending_weight: mu, ..config.shell };
            let value = shell_energy_model(&mesh, params, GaugeSpec::ProjectRigid).and_then(|model| {
                let q = CurvatureQuery::new(mesh.positions.clone(), v.clone(), w.clone(), tau, config.variant)
                    .with_beta(beta);
                sectional_curvature(&model, &q, &CovOptions::for_model(&model)).map(|r| r.sectional)
            });
            match value {
                Ok(k) => SweepRow { mu, kappa: Some(k), valid: true },
                Err(e) => {
                    log::warn!("κ at μ = {mu} failed: {e}");
                    SweepRow { mu, kappa: None, valid: false }
                }
            }
        })
        .collect();
    let mags: Vec<Option<f64>> = rows.iter().filter(|r| r.mu > 0.0).map(|r| r.kappa.map(f64::abs)).collect();
    let all_valid = mags.iter().all(Option::is_some);
    let mags: Vec<f64> = mags.into_iter().flatten().collect();
    let relative_decrements: Vec<f64> = mags.windows(2).map(|p| (p[0] - p[1]) / p[0]).collect();
    let monotone = all_valid && relative_decrements.iter().all(|d| *d > 0.0);
    let largest = relative_decrements.iter().cloned().fold(0.0, f64::max);
    let plateau = relative_decrements.last().is_some_and(|&d| d < 0.1 && d <= 0.5 * largest);
    let signs = rows.iter().filter_map(|r| r.kappa).map(|k| k.signum() as i8 * (k != 0.0) as i8).collect();
    Ok(BendingSweep { rows, monotone, relative_decrements, plateau, signs })
}

#[derive(Serialize)]
struct SweepCsvRow {
    mu: f64,
    kappa: Option<f64>,
    abs_kappa: Option<f64>,
    valid: bool,
}

pub(crate) fn run_sweep(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let s = bending_sweep(config)?;
    let rows: Vec<SweepCsvRow> =
        s.rows.iter().map(|r| SweepCsvRow { mu: r.mu, kappa: r.kappa, abs_kappa: r.kappa.map(f64::abs), valid: r.valid }).collect();
    out.rows("bending_sweep.csv", &rows)?;
    let invalid = s.rows.iter().filter(|r| !r.valid).count();
    Ok((
        invalid,
        serde_json::json!({
            "monotone": s.monotone,
            "plateau": s.plateau,
            "relative_decrements": s.relative_decrements,
            "signs": s.signs,
        }),
    ))
}
