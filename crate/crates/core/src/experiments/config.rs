use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shells::ShellParams;
use crate::transport::Variant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    #[default]
    TorusMap,
    Converge,
    BendingSweep,
    Confusion,
    TwoBump,
    Check,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::TorusMap => "torus-map",
            Experiment::Converge => "converge",
            Experiment::BendingSweep => "bending-sweep",
            Experiment::Confusion => "confusion",
            Experiment::TwoBump => "two-bump",
            Experiment::Check => "check",
        }
    }
}

/// Shape space used by the convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceModel {
    /// Error against the analytic Gaussian curvature.
    #[default]
    Torus,
    /// Self-convergence on the stretched icosphere.
    SphereShell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusParams {
    pub major: f64,
    pub minor: f64,
    /// Grid points per angle for the curvature map.
    pub grid: usize,
    /// Chart point `(u, v)` of the convergence study.
    pub point: [f64; 2],
}

impl Default for TorusParams {
    fn default() -> Self {
        TorusParams { major: std::f64::consts::SQRT_2, minor: 1.0, grid: 16, point: [0.3, 0.7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateParams {
    /// Cells across the plate width; the length has twice as many.
    pub resolution: usize,
    pub zeta: f64,
    pub eta: f64,
    /// Segments of the discrete geodesics.
    pub segments: usize,
}

impl Default for PlateParams {
    fn default() -> Self {
        PlateParams { resolution: 8, zeta: 0.15, eta: 0.15, segments: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfusionParams {
    /// Base OBJ mesh; the procedural three-branch shape when absent.
    pub mesh: Option<PathBuf>,
    /// Subdivision level of the procedural shape.
    pub level: usize,
    /// Held vertices; the procedural shape's foot when absent.
    pub fixed_vertices: Option<Vec<usize>>,
    /// Number of Hessian eigenmodes used as tangents.
    pub modes: usize,
    /// Deformed meshes whose discrete logarithms replace the eigenmodes.
    pub deformed_meshes: Vec<PathBuf>,
    pub log_segments: usize,
    /// Scales `σ` of the exported `exp(σ v_i)` snapshots, halved up to
    /// twice where shooting breaks down.
    pub snapshot_scales: Vec<f64>,
    /// Segments of each snapshot exponential.
    pub snapshot_segments: usize,
}

impl Default for ConfusionParams {
    fn default() -> Self {
        ConfusionParams {
            mesh: None,
            level: 3,
            fixed_vertices: None,
            modes: 8,
            deformed_meshes: Vec::new(),
            log_segments: 8,
            snapshot_scales: vec![-0.2, 0.2],
            snapshot_segments: 4,
        }
    }
}

/// Everything an experiment run depends on. Serialized in full into the
/// first line of every CSV it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ConvergenceModel,
    pub torus: TorusParams,
    pub sphere_level: usize,
    pub shell: ShellParams,
    /// Bending weights of the sweep, descending.
    pub bending_weights: Vec<f64>,
    /// Append a `μ = 0` row to the sweep.
    pub include_membrane_only: bool,
    pub plate: PlateParams,
    pub confusion: ConfusionParams,
    /// Outer steps, descending.
    pub taus: Vec<f64>,
    /// Step whose value serves as ground truth in self-convergence studies.
    pub tau_min: Option<f64>,
    pub beta: Option<f64>,
    pub variant: Variant,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Experiment::TorusMap)
    }
}

impl ExperimentConfig {
    /// Defaults for an experiment.
    pub fn preset(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            model: ConvergenceModel::Torus,
            torus: TorusParams::default(),
            sphere_level: 2,
            shell: ShellParams::with_bending(1e-3),
            bending_weights: (0..10).map(|k| 0.1 * 0.5f64.powi(k)).collect(),
            include_membrane_only: true,
            plate: PlateParams::default(),
            confusion: ConfusionParams::default(),
            taus: vec![1e-2],
            tau_min: None,
            beta: None,
            variant: Variant::Central,
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: None,
        };
        match experiment {
            Experiment::TorusMap => c.beta = Some(1.5),
            Experiment::Converge => c.taus = vec![0.3, 0.2, 0.1, 0.05, 0.03, 0.02, 0.01, 0.005],
            Experiment::Confusion | Experiment::TwoBump => c.shell = ShellParams::with_bending(1e-2),
            Experiment::BendingSweep | Experiment::Check => {}
        }
        c
    }

    /// Defaults of the shell self-convergence study.
    pub fn sphere_convergence() -> Self {
        ExperimentConfig {
            model: ConvergenceModel::SphereShell,
            taus: vec![0.5, 0.25, 0.125, 0.0625, 0.03125],
            tau_min: Some(0.015625),
            beta: Some(2.0),
            ..ExperimentConfig::preset(Experiment::Converge)
        }
    }

    /// Parses a possibly partial document. Missing fields take the preset
    /// of the named experiment (and convergence model).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let experiment: Experiment = field(&doc, "experiment")?;
        let model: ConvergenceModel = field(&doc, "model")?;
        let base = if experiment == Experiment::Converge && model == ConvergenceModel::SphereShell {
            ExperimentConfig::sphere_convergence()
        } else {
            ExperimentConfig::preset(experiment)
        };
        let mut merged = serde_json::to_value(base)?;
        merge(&mut merged, doc);
        Ok(serde_json::from_value(merged)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Single-line JSON echo.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.taus.is_empty() {
            return bad("τ list is empty".into());
        }
        if self.taus.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("τ values must be positive".into());
        }
        if self.taus.windows(2).any(|w| w[0] <= w[1]) {
            return bad("τ list must be strictly descending".into());
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("invalid β {b}"));
            }
        }
        self.shell.validate()?;
        let t = &self.torus;
        if !(t.major > t.minor && t.minor > 0.0) {
            return bad("torus needs R > r > 0".into());
        }
        match self.experiment {
            Experiment::TorusMap if t.grid < 8 => return bad("torus grid must be at least 8×8".into()),
            Experiment::Converge => {
                let (hi, lo) = (self.taus[0], self.taus[self.taus.len() - 1]);
                if self.taus.len() < 5 || hi / lo < 10.0 - 1e-9 {
                    return bad("convergence needs at least 5 τ values spanning a decade".into());
                }
                if self.model == ConvergenceModel::SphereShell {
                    match self.tau_min {
                        Some(m) if m > 0.0 && m < lo => {}
                        _ => return bad("self-convergence needs tau_min below every τ".into()),
                    }
                }
            }
            Experiment::BendingSweep => {
                let w = &self.bending_weights;
                if w.is_empty() || w.iter().any(|m| !(*m > 0.0)) || w.windows(2).any(|p| p[0] <= p[1]) {
                    return bad("bending weights must be positive and strictly descending".into());
                }
            }
            Experiment::Confusion => {
                let c = &self.confusion;
                let k = if c.deformed_meshes.is_empty() { c.modes } else { c.deformed_meshes.len() };
                if !(2..=16).contains(&k) {
                    return bad(format!("confusion matrix needs 2 to 16 tangents, got {k}"));
                }
                if c.log_segments == 0 || c.snapshot_segments == 0 {
                    return bad("segment counts must be positive".into());
                }
            }
            Experiment::TwoBump => {
                if self.plate.resolution < 8 {
                    return bad("two-bump plate needs resolution at least 8".into());
                }
                if self.plate.segments < 2 {
                    return bad("two-bump geodesics need at least 2 segments".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `β` for a variant: the configured value or the variant's default.
    pub fn beta_for(&self, variant: Variant) -> f64 {
        self.beta.unwrap_or_else(|| variant.default_beta())
    }
}

fn field<T: serde::de::DeserializeOwned + Default>(doc: &serde_json::Value, key: &str) -> Result<T> {
    Ok(doc.get(key).cloned().map(serde_json::from_value).transpose()?.unwrap_or_default())
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_partial_documents() {
        let c = ExperimentConfig::sphere_convergence();
        assert_eq!(ExperimentConfig::from_json(&c.echo()).unwrap(), c);
        let p = ExperimentConfig::from_json(r#"{"experiment": "two-bump", "plate": {"zeta": 0.2}}"#).unwrap();
        assert_eq!(p.experiment, Experiment::TwoBump);
        assert_eq!((p.plate.zeta, p.plate.resolution), (0.2, 8));
        assert_eq!(p.shell.bending_weight, 1e-2);
        let s = ExperimentConfig::from_json(r#"{"experiment": "converge", "model": "sphere-shell"}"#).unwrap();
        assert_eq!(s, ExperimentConfig::sphere_convergence());
        assert!(ExperimentConfig::from_json(r#"{"tau": [0.1]}"#).is_err());
    }

    #[test]
    fn validation() {
        for e in [Experiment::TorusMap, Experiment::Converge, Experiment::BendingSweep, Experiment::Confusion, Experiment::TwoBump] {
            ExperimentConfig::preset(e).validate().unwrap();
        }
        ExperimentConfig::sphere_convergence().validate().unwrap();
        let mut c = ExperimentConfig::preset(Experiment::Converge);
        c.taus = vec![0.1, 0.2, 0.05, 0.02, 0.01];
        assert!(c.validate().is_err());
        c.taus = vec![0.1, 0.08, 0.06, 0.04, 0.02];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Experiment::TwoBump);
        c.plate.resolution = 6;
        assert!(c.validate().is_err());
    }
}
