//! Experiment drivers. Each runner validates its config, runs the oracle
//! self-tests, computes, and writes CSV/JSON/OBJ output whose first CSV
//! line echoes the config.

mod check;
mod config;
mod confusion;
mod oracle;
mod sphere;
mod torus;
mod two_bump;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

pub use check::{check_suite, CheckRow};
pub use config::{ConfusionParams, ConvergenceModel, Experiment, ExperimentConfig, PlateParams, TorusParams};
pub use confusion::{confusion_matrix, Confusion};
pub use oracle::{AnalyticOracle, Christoffel, Surface};
pub use sphere::{bending_sweep, stretch_query, BendingSweep, SweepRow};
pub use torus::{convergence, curvature_map, fit_slope, torus_map, Convergence, ConvergenceRow, CurvatureMap, MapRow};
pub use two_bump::{two_bump, TwoBump};

use crate::error::Result;

/// What a run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub files: Vec<PathBuf>,
    /// Rows marked invalid; a nonzero count maps to exit code 2.
    pub invalid_rows: usize,
    pub summary: serde_json::Value,
}

/// Runs the experiment named in `config` and writes its output under
/// `config.out_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut out = Output { dir: config.out_dir.clone(), config, files: Vec::new() };
    let (invalid_rows, summary) = match config.experiment {
        Experiment::TorusMap => torus::run_map(config, &mut out)?,
        Experiment::Converge => torus::run_convergence(config, &mut out)?,
        Experiment::BendingSweep => sphere::run_sweep(config, &mut out)?,
        Experiment::Confusion => confusion::run(config, &mut out)?,
        Experiment::TwoBump => two_bump::run(config, &mut out)?,
        Experiment::Check => check::run(config, &mut out)?,
    };
    let outcome = RunOutcome { experiment: config.experiment, files: out.files, invalid_rows, summary };
    let path = config.out_dir.join(format!("{}_summary.json", config.experiment.name()));
    std::fs::write(&path, serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}

pub(crate) struct Output<'a> {
    dir: PathBuf,
    config: &'a ExperimentConfig,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    /// CSV writer whose first line is `# config: {json}`.
    fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
        let path = self.path(name);
        let mut f = BufWriter::new(File::create(path)?);
        write_echo(&mut f, self.config)?;
        Ok(csv::Writer::from_writer(f))
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = self.csv(name)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn write_echo<W: Write>(w: &mut W, config: &ExperimentConfig) -> Result<()> {
    writeln!(w, "# config: {}", config.echo())?;
    Ok(())
}
