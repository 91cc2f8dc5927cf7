//! Identity and exactness suites over the reference models.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::oracle::AnalyticOracle;
use super::Output;
use crate::curvature::{sectional_curvature, CurvatureQuery};
use crate::energy::{
    check_consistency_identities, make_embedded_model, make_flat_model, EnergyModel, Point, SphereChart, Tangent,
    TorusChart,
};
use crate::error::Result;
use crate::geodesic::{discrete_exp, discrete_log, geodesic_bvp};
use crate::shells::{make_sphere_shell, shell_energy_model, GaugeSpec};
use crate::solver::NewtonConfig;
use crate::transport::{inverse_transport, transport_step, CovOptions};

/// Sampled points per model.
const SAMPLES: usize = 100;
/// Direction pairs per point.
const DIRECTIONS: usize = 2;
const IDENTITY_TOL: f64 = 1e-8;
/// Finite-difference check of the third-order identity.
const THIRD_ORDER_TOL: f64 = 1e-4;
const FLAT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub name: String,
    /// Worst value over all samples.
    pub value: f64,
    pub tolerance: f64,
    pub valid: bool,
}

impl CheckRow {
    fn new(suite: &str, name: &str, value: f64, tolerance: f64) -> Self {
        CheckRow { suite: suite.into(), name: name.into(), value, tolerance, valid: value <= tolerance }
    }

    fn failed(suite: &str, name: &str, error: impl std::fmt::Display) -> Self {
        log::warn!("{suite}/{name}: {error}");
        CheckRow { suite: suite.into(), name: name.into(), value: f64::NAN, tolerance: 0.0, valid: false }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)))
}

fn cube(rng: &mut ChaCha8Rng, d: usize, amp: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| amp * rng.random_range(-1.0..1.0))
}

fn identity_rows<M, P>(suite: &str, model: &M, mut point: P, rng: &mut ChaCha8Rng) -> Vec<CheckRow>
where
    M: EnergyModel + ?Sized,
    P: FnMut(&mut ChaCha8Rng) -> Point,
{
    let d = model.dim();
    let mut worst = [0.0f64; 2];
    for _ in 0..SAMPLES {
        let y = point(rng);
        let samples: Vec<(Tangent, Tangent)> = (0..DIRECTIONS).map(|_| (cube(rng, d, 1.0), cube(rng, d, 1.0))).collect();
        match check_consistency_identities(model, &y, &samples, 1e-4) {
            Ok(r) => {
                worst[0] = worst[0].max(r.max_second_order());
                worst[1] = worst[1].max(r.third_derivative);
            }
            Err(e) => return vec![CheckRow::failed(suite, "identities", e)],
        }
    }
    vec![
        CheckRow::new(suite, "second_order_identities", worst[0], IDENTITY_TOL),
        CheckRow::new(suite, "third_order_identity", worst[1], THIRD_ORDER_TOL),
    ]
}

/// Diagonal identities on flat, torus, sphere-chart and coarse shell
/// models, scaled by the metric scale.
fn identity_suite(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let t = &config.torus;
    let mut rows = Vec::new();
    rows.extend(identity_rows("flat", &make_flat_model(5), |r| cube(r, 5, 2.0), rng));
    let torus = make_embedded_model(TorusChart::new(t.major, t.minor))?;
    rows.extend(identity_rows("torus", &torus, |r| uniform(r, &[-PI, -PI], &[PI, PI]), rng));
    let sphere = make_embedded_model(SphereChart)?;
    rows.extend(identity_rows("sphere_chart", &sphere, |r| uniform(r, &[0.2, -PI], &[PI - 0.2, PI]), rng));
    let mesh = make_sphere_shell(1)?;
    let shell = shell_energy_model(&mesh, config.shell, GaugeSpec::ProjectRigid)?;
    let base = mesh.positions.clone();
    rows.extend(identity_rows("shell", &shell, |r| &base + cube(r, base.len(), 0.05), rng));
    Ok(rows)
}

/// Geodesics, transport and curvature in Euclidean space. Curvature uses
/// the configured variant and `β`.
fn flat_suite(config: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Vec<CheckRow> {
    const D: usize = 4;
    const K: usize = 5;
    let model = make_flat_model(D);
    let newton = NewtonConfig::for_model(&model);
    let opts = CovOptions::for_model(&model);
    let mut worst = [0.0f64; 5];
    let mut rows = Vec::new();
    let mut fail = |name: &str, e: crate::Error| rows.push(CheckRow::failed("flat_exactness", name, e));
    for _ in 0..SAMPLES {
        let (ya, yb) = (cube(rng, D, 1.0), cube(rng, D, 1.0));
        let (v, w) = (cube(rng, D, 0.5), cube(rng, D, 0.5));
        let scale = 1.0 + (&yb - &ya).norm();
        match geodesic_bvp(&model, &ya, &yb, K, None, &newton) {
            Ok(p) => {
                for (k, x) in p.points.iter().enumerate() {
                    let line = &ya + (&yb - &ya) * (k as f64 / K as f64);
                    worst[0] = worst[0].max((x - line).norm() / scale);
                }
            }
            Err(e) => fail("straight_geodesics", e),
        }
        match discrete_log(&model, &ya, &yb, K, &newton)
            .and_then(|l| discrete_exp(&model, &ya, &l, K, &newton).map(|e| (l, e)))
        {
            Ok((l, e)) => {
                worst[1] = worst[1].max((&l - (&yb - &ya)).norm().max((&e - &yb).norm()) / scale);
            }
            Err(e) => fail("log_exp", e),
        }
        match transport_step(&model, &ya, &v, &w, &newton) {
            Ok(tw) => {
                worst[2] = worst[2].max((&tw - &w).norm() / w.norm());
                match inverse_transport(&model, &ya, &v, &tw, &newton) {
                    Ok((back, _)) => worst[3] = worst[3].max((&back - &w).norm() / w.norm()),
                    Err(e) => fail("inverse_round_trip", e),
                }
            }
            Err(e) => fail("transport_identity", e),
        }
        let q = CurvatureQuery::new(ya.clone(), v.clone(), w.clone(), config.taus[0], config.variant)
            .with_beta(config.beta_for(config.variant));
        match sectional_curvature(&model, &q, &opts) {
            Ok(r) => worst[4] = worst[4].max(r.sectional.abs()),
            Err(e) => fail("zero_curvature", e),
        }
    }
    let names = ["straight_geodesics", "log_exp", "transport_identity", "inverse_round_trip", "zero_curvature"];
    let failed: Vec<String> = rows.iter().map(|r| r.name.clone()).collect();
    for (name, value) in names.iter().zip(worst) {
        if !failed.iter().any(|f| f == name) {
            rows.push(CheckRow::new("flat_exactness", name, value, FLAT_TOL));
        }
    }
    rows
}

fn oracle_suite(config: &ExperimentConfig) -> Vec<CheckRow> {
    let t = &config.torus;
    [("torus", AnalyticOracle::torus(t.major, t.minor)), ("sphere", AnalyticOracle::sphere())]
        .into_iter()
        .map(|(name, o)| match o.self_test() {
            Ok(()) => CheckRow::new("oracle", name, 0.0, 0.0),
            Err(e) => CheckRow::failed("oracle", name, e),
        })
        .collect()
}

/// Oracle self-tests, the identity suite on `100` sampled points per
/// model, and Euclidean exactness on `100` random queries. Sampling uses
/// `config.seed`.
pub fn check_suite(config: &ExperimentConfig) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = oracle_suite(config);
    rows.extend(identity_suite(config, &mut rng)?);
    rows.extend(flat_suite(config, &mut rng));
    Ok(rows)
}

pub(crate) fn run(config: &ExperimentConfig, out: &mut Output) -> Result<(usize, serde_json::Value)> {
    let rows = check_suite(config)?;
    out.rows("check.csv", &rows)?;
    let invalid = rows.iter().filter(|r| !r.valid).count();
    let failed: Vec<String> = rows.iter().filter(|r| !r.valid).map(|r| format!("{}/{}", r.suite, r.name)).collect();
    Ok((invalid, serde_json::json!({ "checks": rows.len(), "failed": failed })))
}
