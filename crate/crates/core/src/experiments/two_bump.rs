//! Geodesics between two-bump plate states that differ in the sign of both
//! bumps, and the curvature of the bump plane at the flat plate.

use nalgebra::DVector;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::oracle::AnalyticOracle;
use super::Output;
use crate::curvature::{sectional_curvature, CurvatureQuery};
use crate::error::{Result, ResultExt};
use crate::geodesic::{geodesic_bvp, DiscretePath};
use crate::shells::generate::{bump_field, PLATE_WIDTH};
use crate::shells::{make_bump_plate, shell_energy_model, write_obj_sequence, GaugeSpec, ShellMesh, ShellModel};
use crate::solver::{NewtonConfig, SolveReport};
use crate::transport::CovOptions;

/// Paths closer than this are the same geodesic.
const SAME_PATH: f64 = 1e-6;
/// Distinct paths must differ by this fraction of the plate width.
const DISTINCT_GAP: f64 = 1e-3;
/// Largest relative energy difference of two competing shortest paths.
const ENERGY_MATCH: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct TwoBump {
    /// Energies of the paths started by flipping the left bump first and
    /// the right bump first; `None` where the solve failed.
    pub energies: [Option<f64>; 2],
    /// Largest pointwise distance between the two paths.
    pub gap: Option<f64>,
    /// `|E₀ − E₁| / max(E₀, E₁)`.
    pub energy_difference: Option<f64>,
    /// The two paths differ by more than `1e-3` plate widths and their
    /// energies by at most 5%.
    pub distinct: bool,
    /// Both starts reached the same path (gap below `1e-6`).
    pub nonuniqueness_not_found: bool,
    /// `κ` of the plane spanned by the two bump fields at the flat plate.
    pub kappa: Option<f64>,
    #[serde(skip)]
    pub paths: [Option<DiscretePath>; 2],
    #[serde(skip)]
    pub plate: ShellMesh,
}

impl TwoBump {
    pub fn invalid_count(&self) -> usize {
        self.paths.iter().filter(|p| p.is_none()).count()
            + self.kappa.is_none() as usize
            + self.nonuniqueness_not_found as usize
    }
}

/// Plate, bump fields, and the clamped-boundary model.
fn setup(config: &ExperimentConfig) -> Result<(ShellMesh, DVector<f64>, DVector<f64>, ShellModel)> {
    let flat = make_bump_plate(config.plate.resolution, 0.0, 0.0)?;
    let b0 = bump_field(&flat, 0);
    let b1 = bump_field(&flat, 1);
    let gauge = GaugeSpec::FixedVertices(flat.topology.boundary_vertices().to_vec());
    let model = shell_energy_model(&flat, config.shell, gauge)?;
    Ok((flat, b0, b1, model))
}

/// Solves from `(ζ, −η)` to `(−ζ, η)` twice, starting from the paths that
/// flip one bump completely before the other, and evaluates `κ` at the
/// flat plate in the bump directions.
pub fn two_bump(config: &ExperimentConfig) -> Result<TwoBump> {
    AnalyticOracle::sphere().self_test()?;
    let (flat, b0, b1, model) = setup(config)?;
    let (zeta, eta, k) = (config.plate.zeta, config.plate.eta, config.plate.segments);
    let state = |z: f64, e: f64| &flat.positions + &b0 * z + &b1 * e;
    let (ya, yb) = (state(zeta, -eta), state(-zeta, eta));
    let newton = NewtonConfig::for_model(&model);
    let solve = |order: usize| {
        let points = (0..=k)
            .map(|i| {
                let s = 2.0 * i as f64 / k as f64;
                let (first, second) = (s.min(1.0), (s - 1.0).max(0.0));
                let (f0, f1) = if order == 0 { (first, second) } else { (second, first) };
                state(zeta * (1.0 - 2.0 * f0), -eta * (1.0 - 2.0 * f1))
            })
            .collect();
        let init = DiscretePath { points, k, energy: 0.0, report: SolveReport::default() };
        geodesic_bvp(&model, &ya, &yb, k, Some(&init), &newton).stage(|| format!("geodesic with flip order {order}"))
    };
    let paths = [0, 1].map(|order| match solve(order) {
        Ok(p) => Some(p),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    });
    let energies = [0, 1].map(|i| paths[i].as_ref().map(|p| p.energy));
    let (gap, energy_difference) = match (&paths[0], &paths[1]) {
        (Some(a), Some(b)) => {
            let hi = a.energy.max(b.energy);
            let diff = if hi > 0.0 { (a.energy - b.energy).abs() / hi } else { 0.0 };
            (Some(a.max_gap(b)), Some(diff))
        }
        _ => (None, None),
    };
    let distinct = matches!((gap, energy_difference), (Some(g), Some(d)) if g > DISTINCT_GAP * PLATE_WIDTH && d <= ENERGY_MATCH);
    let nonuniqueness_not_found = gap.is_some_and(|g| g < SAME_PATH);

    let q = CurvatureQuery::new(flat.positions.clone(), b0, b1, config.taus[0], config.variant)
        .with_beta(config.beta_for(config.variant));
    let kappa = match sectional_curvature(&model, &q, &CovOptions::for_model(&model)) {
        Ok(r) => Some(r.sectional),
        Err(e) => {
            log::warn!("κ at the flat plate failed: {e}");
            None
        }
    };
    Ok(TwoBump { energies, gap, energy_difference, distinct, nonuniqueness_not_found, kappa, paths, plate: flat })
}

#[derive(Serialize)]
struct PathRow {
    path: usize,
    energy: Option<f64>,
    converged: bool,
    valid: bool,
}

pub(crate) fn run(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let r = two_bump(config)?;
    let rows: Vec<PathRow> = (0..2)
        .map(|i| PathRow {
            path: i,
            energy: r.energies[i],
            converged: r.paths[i].is_some(),
            valid: r.paths[i].is_some() && !r.nonuniqueness_not_found,
        })
        .collect();
    out.rows("two_bump.csv", &rows)?;
    for (i, p) in r.paths.iter().enumerate() {
        if let Some(p) = p {
            p.write_json(&out.path(&format!("two_bump_path_{i}.json")))?;
            let files = write_obj_sequence(&r.plate.topology, &p.points, &out.dir, &format!("two_bump_path_{i}"))?;
            out.files.extend(files);
        }
    }
    if r.nonuniqueness_not_found {
        log::warn!("nonuniqueness not found: both initializations reached the same geodesic");
    }
    Ok((r.invalid_count(), serde_json::to_value(&r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Experiment;

    #[test]
    fn flat_endpoints_give_constant_path() {
        let mut c = ExperimentConfig::preset(Experiment::TwoBump);
        c.plate.zeta = 0.0;
        c.plate.eta = 0.0;
        let (flat, _, _, model) = setup(&c).unwrap();
        let p = geodesic_bvp(&model, &flat.positions, &flat.positions, 4, None, &NewtonConfig::for_model(&model)).unwrap();
        assert!(p.energy.abs() <= 1e-20);
        assert!(p.points.iter().all(|x| (x - &flat.positions).amax() <= 1e-12));
    }
}
