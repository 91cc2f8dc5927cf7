use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geocalc::experiments::{run, ConvergenceModel, Experiment, ExperimentConfig};
use geocalc::shells::{make_bump_plate, make_sphere_shell, make_three_branch};
use geocalc::transport::Variant;
use serde_json::Value;

/// Discrete geodesic calculus experiments.
#[derive(Parser)]
#[command(name = "geocalc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete against analytic Gaussian curvature on a torus grid.
    TorusMap(Common),
    /// Error of both curvature quotients against the step size.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
    },
    /// Curvature of the stretched sphere as the bending weight is halved.
    BendingSweep(Common),
    /// Sectional curvatures between Hessian eigenmodes of a shell.
    Confusion(Common),
    /// Competing geodesics between two-bump plate states.
    TwoBump(Common),
    /// Identity, exactness and oracle suites.
    Check(Common),
    /// Write a procedural mesh as OBJ.
    #[command(subcommand)]
    Mesh(MeshCommand),
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated step sizes, descending.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    OneSided,
    Central,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Torus,
    SphereShell,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Subdivided icosahedron on the unit sphere.
    Sphere {
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plate with two bumps of heights ζ and η.
    Plate {
        #[arg(long, default_value_t = 8)]
        resolution: usize,
        #[arg(long, default_value_t = 0.0)]
        zeta: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed trunk-and-arms surface; prints the foot vertices as JSON.
    ThreeBranch {
        #[arg(long, default_value_t = 3)]
        level: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_for(experiment: Experiment, common: &Common, model: Option<ModelArg>) -> Result<ExperimentConfig, String> {
    let mut doc = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<Value>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => Value::Object(Default::default()),
    };
    let obj = doc.as_object_mut().ok_or("config must be a JSON object")?;
    let name = Value::from(experiment.name());
    match obj.get("experiment") {
        Some(v) if *v != name => return Err(format!("config is for experiment {v}, not {name}")),
        _ => {
            obj.insert("experiment".into(), name);
        }
    }
    if let Some(m) = model {
        let m = match m {
            ModelArg::Torus => ConvergenceModel::Torus,
            ModelArg::SphereShell => ConvergenceModel::SphereShell,
        };
        obj.insert("model".into(), serde_json::to_value(m).map_err(|e| e.to_string())?);
    }
    let mut config = ExperimentConfig::from_json(&doc.to_string()).map_err(|e| e.to_string())?;
    if let Some(t) = &common.tau {
        config.taus = t.clone();
    }
    if let Some(b) = common.beta {
        config.beta = Some(b);
    }
    if let Some(v) = common.variant {
        config.variant = match v {
            VariantArg::OneSided => Variant::OneSided,
            VariantArg::Central => Variant::Central,
        };
    }
    if let Some(o) = &common.out {
        config.out_dir = o.clone();
    }
    if let Some(n) = common.threads {
        config.threads = Some(n);
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn experiment(experiment: Experiment, common: &Common, model: Option<ModelArg>) -> Result<ExitCode, String> {
    let config = config_for(experiment, common, model)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    let outcome = run(&config).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&outcome).map_err(|e| e.to_string())?);
    if outcome.invalid_rows > 0 {
        log::warn!("{} invalid rows", outcome.invalid_rows);
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn mesh(command: &MeshCommand) -> Result<ExitCode, String> {
    let err = |e: geocalc::Error| e.to_string();
    match command {
        MeshCommand::Sphere { level, out } => make_sphere_shell(*level).map_err(err)?.write_obj(out).map_err(err)?,
        MeshCommand::Plate { resolution, zeta, eta, out } => {
            make_bump_plate(*resolution, *zeta, *eta).map_err(err)?.write_obj(out).map_err(err)?
        }
        MeshCommand::ThreeBranch { level, out } => {
            let (mesh, foot) = make_three_branch(*level).map_err(err)?;
            mesh.write_obj(out).map_err(err)?;
            println!("{}", serde_json::json!({ "fixed_vertices": foot }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TorusMap(c) => experiment(Experiment::TorusMap, c, None),
        Command::Converge { common, model } => experiment(Experiment::Converge, common, *model),
        Command::BendingSweep(c) => experiment(Experiment::BendingSweep, c, None),
        Command::Confusion(c) => experiment(Experiment::Confusion, c, None),
        Command::TwoBump(c) => experiment(Experiment::TwoBump, c, None),
        Command::Check(c) => experiment(Experiment::Check, c, None),
        Command::Mesh(m) => mesh(m),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
