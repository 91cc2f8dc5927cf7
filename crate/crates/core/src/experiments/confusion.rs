//! Sectional curvatures between Hessian eigenmodes or logarithms of
//! user-supplied deformations.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::oracle::AnalyticOracle;
use super::Output;
use crate::curvature::{curvature_matrix, CurvatureMatrix};
use crate::energy::{Point, Tangent};
use crate::error::{Error, Result, ResultExt};
use crate::geodesic::{discrete_exp, discrete_log};
use crate::shells::{hessian_eigenmodes, make_three_branch, shell_energy_model, write_obj, GaugeSpec, ShellMesh, ShellModel};
use crate::solver::NewtonConfig;
use crate::transport::CovOptions;

pub struct Confusion {
    pub mesh: ShellMesh,
    pub model: ShellModel,
    pub tangents: Vec<Tangent>,
    /// Hessian eigenvalues when the tangents are eigenmodes.
    pub eigenvalues: Option<Vec<f64>>,
    pub matrix: CurvatureMatrix,
}

fn base_mesh(config: &ExperimentConfig) -> Result<(ShellMesh, GaugeSpec)> {
    let c = &config.confusion;
    let (mesh, foot) = match &c.mesh {
        Some(path) => (ShellMesh::read_obj(path)?, None),
        None => {
            let (mesh, foot) = make_three_branch(c.level)?;
            (mesh, Some(foot))
        }
    };
    let gauge = match (&c.fixed_vertices, foot) {
        (Some(v), _) => GaugeSpec::FixedVertices(v.clone()),
        (None, Some(foot)) => GaugeSpec::FixedVertices(foot),
        (None, None) => GaugeSpec::ProjectRigid,
    };
    Ok((mesh, gauge))
}

/// Tangents at the base shape and their curvature matrix at the first
/// configured `τ`.
pub fn confusion_matrix(config: &ExperimentConfig) -> Result<Confusion> {
    AnalyticOracle::sphere().self_test()?;
    let c = &config.confusion;
    let (mesh, gauge) = base_mesh(config)?;
    let model = shell_energy_model(&mesh, config.shell, gauge.clone())?;
    let (tangents, eigenvalues) = if c.deformed_meshes.is_empty() {
        let modes = hessian_eigenmodes(&mesh, &config.shell, &gauge, c.modes)?;
        let values = modes.iter().map(|m| m.eigenvalue).collect();
        (modes.into_iter().map(|m| m.vector).collect(), Some(values))
    } else {
        let newton = NewtonConfig::for_model(&model);
        let targets: Vec<ShellMesh> = c.deformed_meshes.iter().map(|p| ShellMesh::read_obj(p)).collect::<Result<_>>()?;
        for (t, p) in targets.iter().zip(&c.deformed_meshes) {
            if t.topology.triangles() != mesh.topology.triangles() {
                return Err(Error::InvalidMesh(format!("{} does not share the base connectivity", p.display())));
            }
        }
        let logs = targets
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                discrete_log(&model, &mesh.positions, &t.positions, c.log_segments, &newton)
                    .stage(|| format!("logarithm of deformation {i}"))
            })
            .collect::<Result<Vec<_>>>()?;
        (logs, None)
    };
    let opts = CovOptions::for_model(&model);
    let matrix = curvature_matrix(&model, &mesh.positions, &tangents, config.taus[0], config.beta, config.variant, &opts)?;
    Ok(Confusion { mesh, model, tangents, eigenvalues, matrix })
}

#[derive(Serialize)]
struct ModeRow {
    index: usize,
    eigenvalue: Option<f64>,
    norm: f64,
}

/// `exp(σv)` with `k` segments, retried with `2k`. If shooting breaks
/// down at `σ`, the scale is halved twice before giving up. Returns the
/// scale used.
fn snapshot(c: &Confusion, v: &Tangent, sigma: f64, k: usize, newton: &NewtonConfig) -> Result<(f64, Point)> {
    let mut last = None;
    for s in [sigma, sigma / 2.0, sigma / 4.0] {
        for segments in [k, 2 * k] {
            match discrete_exp(&c.model, &c.mesh.positions, &(v * s), segments, newton) {
                Ok(x) => return Ok((s, x)),
                Err(e) => {
                    log::info!("snapshot at σ = {s} with {segments} segments failed: {e}");
                    last = Some(e);
                }
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

pub(crate) fn run(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let c = confusion_matrix(config)?;
    let mut w = out.csv("confusion.csv")?;
    w.flush()?;
    c.matrix.write_csv(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    let modes: Vec<ModeRow> = c
        .tangents
        .iter()
        .enumerate()
        .map(|(i, t)| ModeRow { index: i, eigenvalue: c.eigenvalues.as_ref().map(|e| e[i]), norm: t.norm() })
        .collect();
    out.rows("modes.csv", &modes)?;
    std::fs::write(out.path("confusion.json"), c.matrix.to_json()?)?;
    write_obj(&c.mesh.topology, &c.mesh.positions, &out.path("base.obj"))?;

    let newton = NewtonConfig::for_model(&c.model);
    let jobs: Vec<(usize, f64)> = (0..c.tangents.len())
        .flat_map(|i| config.confusion.snapshot_scales.iter().map(move |&s| (i, s)))
        .collect();
    let snapshots: Vec<Result<_>> = jobs
        .par_iter()
        .map(|&(i, s)| snapshot(&c, &c.tangents[i], s, config.confusion.snapshot_segments, &newton))
        .collect();
    let (mut failed, mut reduced) = (0, Vec::new());
    for (&(i, s), snap) in jobs.iter().zip(snapshots) {
        match snap {
            Ok((used, x)) => {
                if used != s {
                    log::warn!("snapshot of mode {i} at σ = {s} reduced to σ = {used}");
                    reduced.push(serde_json::json!({ "mode": i, "sigma": s, "used": used }));
                }
                write_obj(&c.mesh.topology, &x, &out.path(&format!("mode_{i:02}_sigma_{used:+.3}.obj")))?
            }
            Err(e) => {
                log::warn!("snapshot of mode {i} at σ = {s} failed: {e}");
                failed += 1;
            }
        }
    }
    let m = &c.matrix;
    let values: Vec<f64> = m.entries.iter().filter_map(|e| e.value).collect();
    Ok((
        m.invalid_count() + failed,
        serde_json::json!({
            "tangents": c.tangents.len(),
            "eigenvalues": c.eigenvalues,
            "invalid_entries": m.invalid_count(),
            "failed_snapshots": failed,
            "reduced_snapshots": reduced,
            "all_negative": values.len() == m.entries.len() && values.iter().all(|k| *k < 0.0),
            "min": values.iter().cloned().fold(f64::INFINITY, f64::min),
            "max": values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            "clamp_level": m.clamp_level(),
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Experiment;

    #[test]
    fn relabeling_modes_permutes_the_matrix() {
        let mut c = ExperimentConfig::preset(Experiment::Confusion);
        c.confusion.level = 1;
        c.confusion.modes = 3;
        let a = confusion_matrix(&c).unwrap();
        assert_eq!(a.matrix.invalid_count(), 0, "{:?}", a.matrix.entries);
        let perm = [2, 0, 1];
        let tangents: Vec<Tangent> = perm.iter().map(|&i| a.tangents[i].clone()).collect();
        let opts = CovOptions::for_model(&a.model);
        let b = curvature_matrix(&a.model, &a.mesh.positions, &tangents, 1e-2, None, c.variant, &opts).unwrap();
        for i in 0..3 {
            assert_eq!(b.get(i, i), None);
            for j in 0..3 {
                if i != j {
                    let (x, y) = (b.get(i, j).unwrap(), a.matrix.get(perm[i], perm[j]).unwrap());
                    assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "({i}, {j}): {x} vs {y}");
                    assert_eq!(b.get(i, j), b.get(j, i));
                }
            }
        }
    }
}
