//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use geocalc::energy::derivative_order_check;
use geocalc::experiments::{
    bending_sweep, check_suite, confusion_matrix, convergence, torus_map, two_bump, CheckRow, Experiment,
    ExperimentConfig,
};
use geocalc::shells::{make_bump_plate, make_sphere_shell, shell_energy_model, GaugeSpec, ShellMesh, ShellParams};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

/// `spent` is time already used by shared setup.
fn criterion(number: usize, name: &str, budget: Duration, spent: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = spent + start.elapsed();
    let pass = out.pass && elapsed <= budget;
    println!(
        "criterion {number} ({name}): {} | {} | {:.1} s of {} s",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn rows_outcome(rows: &[CheckRow]) -> Outcome {
    let worst = rows.iter().map(|r| format!("{}/{} {:.2e} (tol {:.0e})", r.suite, r.name, r.value, r.tolerance));
    Outcome { pass: !rows.is_empty() && rows.iter().all(|r| r.valid), detail: worst.collect::<Vec<_>>().join(", ") }
}

fn noise(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| amp * rng.random_range(-1.0..1.0))
}

fn derivative_regression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let meshes: Vec<(&str, ShellMesh)> =
        vec![("sphere", make_sphere_shell(1).unwrap()), ("plate", make_bump_plate(4, 0.1, -0.1).unwrap())];
    let params = [ShellParams::default(), ShellParams { mu_mem: 2.0, lambda_mem: 0.5, bending_weight: 0.3 }];
    let (mut lo, mut hi, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (_, mesh) in &meshes {
        for p in params {
            let n = mesh.positions.len();
            let a = &mesh.positions + noise(&mut rng, n, 0.03);
            let b = &a + noise(&mut rng, n, 0.05);
            let model = shell_energy_model(mesh, p, GaugeSpec::None).unwrap();
            let (da, db) = (noise(&mut rng, n, 1.0).normalize(), noise(&mut rng, n, 1.0).normalize());
            for c in derivative_order_check(&model, &a, &b, &da, &db, 4e-4).unwrap() {
                lo = lo.min(c.ratio());
                hi = hi.max(c.ratio());
                count += 1;
            }
        }
    }
    Outcome {
        pass: (lo - 4.0).abs() <= 0.5 && (hi - 4.0).abs() <= 0.5,
        detail: format!("{count} derivative checks, error ratios in [{lo:.3}, {hi:.3}] (target 4 +- 0.5)"),
    }
}

fn main() {
    let mut results = Vec::new();

    let check = ExperimentConfig::preset(Experiment::Check);
    let start = Instant::now();
    let rows = check_suite(&check).unwrap();
    let shared = start.elapsed();
    let (identities, flat): (Vec<CheckRow>, Vec<CheckRow>) =
        rows.into_iter().filter(|r| r.suite != "oracle").partition(|r| r.suite != "flat_exactness");
    let second: Vec<CheckRow> = identities.iter().filter(|r| r.name == "second_order_identities").cloned().collect();
    results.push(criterion(1, "identity suite", minutes(1), shared, || rows_outcome(&second)));
    results.push(criterion(2, "flat-space exactness", minutes(1), shared, || rows_outcome(&flat)));

    results.push(criterion(3, "torus pointwise accuracy", minutes(5), Duration::ZERO, || {
        let map = torus_map(&ExperimentConfig::preset(Experiment::TorusMap)).unwrap();
        Outcome {
            pass: map.rows.len() == 256 && map.invalid_count() == 0 && map.max_abs_error <= 1e-3,
            detail: format!("{} points, {} invalid, max |kappa - K| = {:.3e} (tol 1e-3)", map.rows.len(), map.invalid_count(), map.max_abs_error),
        }
    }));

    results.push(criterion(4, "torus convergence orders", minutes(10), Duration::ZERO, || {
        let c = convergence(&ExperimentConfig::preset(Experiment::Converge)).unwrap();
        let (one, central) = (c.slope_one_sided.unwrap_or(f64::NAN), c.slope_central.unwrap_or(f64::NAN));
        Outcome {
            pass: one >= 0.9 && (1.8..=2.2).contains(&central),
            detail: format!("slope one-sided {one:.3} (>= 0.9), central {central:.3} (in [1.8, 2.2])"),
        }
    }));

    results.push(criterion(5, "shell sphere self-convergence", minutes(30), Duration::ZERO, || {
        let c = convergence(&ExperimentConfig::sphere_convergence()).unwrap();
        let slope = c.slope_central.unwrap_or(f64::NAN);
        let errors: Vec<String> =
            c.rows.iter().map(|r| format!("{:.2e}", r.rel_error_central.unwrap_or(f64::NAN))).collect();
        Outcome {
            pass: c.monotone_central && (1.7..=2.3).contains(&slope),
            detail: format!(
                "central self-errors [{}], monotone {}, slope {slope:.3} (in [1.7, 2.3])",
                errors.join(", "),
                c.monotone_central
            ),
        }
    }));

    results.push(criterion(6, "bending monotonicity", minutes(15), Duration::ZERO, || {
        let s = bending_sweep(&ExperimentConfig::preset(Experiment::BendingSweep)).unwrap();
        let values: Vec<String> =
            s.rows.iter().map(|r| format!("{}:{:.4}", r.mu, r.kappa.unwrap_or(f64::NAN))).collect();
        Outcome {
            pass: s.monotone && s.plateau,
            detail: format!(
                "|kappa| strictly decreasing {}, plateau {} (last relative step {:.3}); signed mu:kappa {}",
                s.monotone,
                s.plateau,
                s.relative_decrements.last().copied().unwrap_or(f64::NAN),
                values.join(" ")
            ),
        }
    }));

    results.push(criterion(7, "negativity pattern", minutes(30), Duration::ZERO, || {
        let c = confusion_matrix(&ExperimentConfig::preset(Experiment::Confusion)).unwrap();
        let values: Vec<f64> = c.matrix.entries.iter().filter_map(|e| e.value).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Outcome {
            pass: c.tangents.len() == 8 && c.matrix.invalid_count() == 0 && max < 0.0,
            detail: format!(
                "{} modes, {} entries, {} invalid, largest kappa_ij {max:.4}",
                c.tangents.len(),
                c.matrix.entries.len(),
                c.matrix.invalid_count()
            ),
        }
    }));

    results.push(criterion(8, "two-bump nonuniqueness and positive curvature", minutes(20), Duration::ZERO, || {
        let r = two_bump(&ExperimentConfig::preset(Experiment::TwoBump)).unwrap();
        let kappa = r.kappa.unwrap_or(f64::NAN);
        Outcome {
            pass: r.distinct && kappa > 0.0,
            detail: format!(
                "energies {:?}, gap {:.3e} (need > 1e-3 widths), distinct {}, kappa at flat plate {kappa:.4} (> 0)",
                r.energies,
                r.gap.unwrap_or(f64::NAN),
                r.distinct
            ),
        }
    }));
    let mut soft = ExperimentConfig::preset(Experiment::TwoBump);
    soft.shell.bending_weight = 1e-4;
    let r = two_bump(&soft).unwrap();
    println!(
        "diagnostic (not a criterion): two-bump at bending weight 1e-4 gives energies {:?}, gap {:.3e}, distinct {}",
        r.energies,
        r.gap.unwrap_or(f64::NAN),
        r.distinct
    );

    results.push(criterion(9, "derivative regression", minutes(2), Duration::ZERO, derivative_regression));

    let passed = results.iter().filter(|p| **p).count();
    println!("{passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
