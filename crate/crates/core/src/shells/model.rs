use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::energy::{assemble, Assembled, ShellParams, Want};
use super::mesh::{vertex, MeshTopology, ShellMesh};
use crate::energy::{check_finite, default_metric_scale, EnergyModel, HessianBlocks, HessianRequest, Point};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{orthonormal_rows, LinearSolverKind, SparseMatrix};

/// How the rigid-motion kernel of the shell energy is removed in solves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GaugeSpec {
    None,
    /// Listed vertices never move.
    FixedVertices(Vec<usize>),
    /// Increments are orthogonal to the six infinitesimal rigid motions of
    /// the reference shape.
    #[default]
    ProjectRigid,
}

impl GaugeSpec {
    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if let GaugeSpec::FixedVertices(v) = self {
            if v.is_empty() {
                return Err(Error::InvalidInput("fixed vertex list is empty".into()));
            }
            if let Some(&bad) = v.iter().find(|&&i| i >= vertex_count) {
                return Err(Error::InvalidInput(format!("fixed vertex {bad} out of range")));
            }
        }
        Ok(())
    }
}

/// Translations and linearized rotations about the centroid, one row each.
pub fn rigid_modes(x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len() / 3;
    let mut centroid = nalgebra::Vector3::zeros();
    for i in 0..n {
        centroid += vertex(x, i);
    }
    centroid /= n as f64;
    let mut rows = DMatrix::zeros(6, 3 * n);
    for i in 0..n {
        let p = vertex(x, i) - centroid;
        for c in 0..3 {
            rows[(c, 3 * i + c)] = 1.0;
        }
        for (r, axis) in [nalgebra::Vector3::x(), nalgebra::Vector3::y(), nalgebra::Vector3::z()].iter().enumerate() {
            let u = axis.cross(&p);
            for c in 0..3 {
                rows[(3 + r, 3 * i + c)] = u[c];
            }
        }
    }
    rows
}

/// `W[s, s̃]`: the shell energy of the deformation taking the vertices of `s`
/// to those of `s̃`, over stacked coordinates in `ℝ^{3n}`.
#[derive(Debug, Clone)]
pub struct ShellModel {
    topology: Arc<MeshTopology>,
    params: ShellParams,
    gauge: GaugeSpec,
    area_eps: f64,
    metric_scale: f64,
}

/// Wraps the shell energy over the connectivity of `mesh`. The mesh's
/// positions set the degenerate-area threshold and the metric scale.
pub fn shell_energy_model(mesh: &ShellMesh, params: ShellParams, gauge: GaugeSpec) -> Result<ShellModel> {
    params.validate()?;
    if !(params.mu_mem + params.lambda_mem > 0.0) {
        return Err(Error::InvalidInput("membrane moduli must not both vanish".into()));
    }
    gauge.validate(mesh.vertex_count())?;
    let mut model = ShellModel {
        topology: Arc::new(mesh.topology.clone()),
        params,
        gauge,
        area_eps: 1e-12 * mesh.mean_area(),
        metric_scale: 1.0,
    };
    model.metric_scale = default_metric_scale(&model, &mesh.positions)?;
    Ok(model)
}

impl ShellModel {
    pub fn topology(&self) -> &MeshTopology {
        &self.topology
    }

    pub fn params(&self) -> &ShellParams {
        &self.params
    }

    pub fn gauge(&self) -> &GaugeSpec {
        &self.gauge
    }

    fn run(&self, a: &Point, b: &Point, want: Want) -> Result<Assembled> {
        self.check_point(a)?;
        self.check_point(b)?;
        assemble(&self.topology, &self.params, a, b, self.area_eps, want)
    }
}

impl EnergyModel for ShellModel {
    fn dim(&self) -> usize {
        self.topology.dim()
    }

    fn energy(&self, a: &Point, b: &Point) -> Result<f64> {
        Ok(self.run(a, b, Want { energy: true, ..Default::default() })?.energy)
    }

    fn grad1(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        Ok(self.run(a, b, Want { g1: true, ..Default::default() })?.g1.expect("requested"))
    }

    fn grad2(&self, a: &Point, b: &Point) -> Result<DVector<f64>> {
        Ok(self.run(a, b, Want { g2: true, ..Default::default() })?.g2.expect("requested"))
    }

    fn hess11(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        Ok(self.run(a, b, Want { h11: true, ..Default::default() })?.h11.expect("requested"))
    }

    fn hess12(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        Ok(self.run(a, b, Want { h12: true, ..Default::default() })?.h12.expect("requested"))
    }

    fn hess22(&self, a: &Point, b: &Point) -> Result<SparseMatrix> {
        Ok(self.run(a, b, Want { h22: true, ..Default::default() })?.h22.expect("requested"))
    }

    fn hessians(&self, a: &Point, b: &Point, want: HessianRequest) -> Result<HessianBlocks> {
        let r = self.run(a, b, Want { h11: want.h11, h12: want.h12, h22: want.h22, ..Default::default() })?;
        Ok(HessianBlocks { h11: r.h11, h12: r.h12, h22: r.h22 })
    }

    fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    fn gauge_constraints(&self, reference: &Point) -> Option<DMatrix<f64>> {
        match &self.gauge {
            GaugeSpec::None => None,
            GaugeSpec::FixedVertices(list) => {
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                let mut rows = DMatrix::zeros(3 * sorted.len(), self.dim());
                for (r, &v) in sorted.iter().enumerate() {
                    for c in 0..3 {
                        rows[(3 * r + c, 3 * v + c)] = 1.0;
                    }
                }
                Some(rows)
            }
            GaugeSpec::ProjectRigid => Some(orthonormal_rows(&rigid_modes(reference))),
        }
    }

    fn preferred_solver(&self) -> LinearSolverKind {
        LinearSolverKind::SparseDirect
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        check_dim(self.dim(), p.len())?;
        check_finite(p)
    }
}
