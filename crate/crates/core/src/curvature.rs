//! Discrete Riemann curvature tensor from nested covariant difference
//! quotients, and the sectional curvature derived from it.

use std::cell::RefCell;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{EnergyModel, MetricOperator, Point, Tangent};
use crate::error::{check_dim, Error, Result, ResultExt};
use crate::solver::{NewtonConfig, SolveReport};
use crate::transport::{cov_quotient, CovOptions, Variant};

/// Plane `(v, w)` at `y`, tensor argument `z`, and step parameters.
#[derive(Debug, Clone)]
pub struct CurvatureQuery {
    pub y: Point,
    pub v: Tangent,
    pub w: Tangent,
    /// Defaults to `w`.
    pub z: Option<Tangent>,
    /// Outer step.
    pub tau: f64,
    /// Inner step is `τ^β`; defaults to the variant's smallest admissible
    /// exponent.
    pub beta: Option<f64>,
    pub variant: Variant,
}

impl CurvatureQuery {
    pub fn new(y: Point, v: Tangent, w: Tangent, tau: f64, variant: Variant) -> Self {
        CurvatureQuery { y, v, w, z: None, tau, beta: None, variant }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_z(mut self, z: Tangent) -> Self {
        self.z = Some(z);
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.variant.default_beta())
    }

    fn validate<M: EnergyModel + ?Sized>(&self, model: &M, opts: &CovOptions) -> Result<()> {
        model.check_point(&self.y)?;
        check_dim(model.dim(), self.v.len())?;
        check_dim(model.dim(), self.w.len())?;
        if let Some(z) = &self.z {
            check_dim(model.dim(), z.len())?;
        }
        if !(self.tau >= opts.tau_floor && self.tau <= opts.tau_max) {
            return Err(Error::InvalidInput(format!(
                "τ = {} outside [{}, {}]",
                self.tau, opts.tau_floor, opts.tau_max
            )));
        }
        let beta = self.beta();
        let min = self.variant.default_beta();
        if !(beta >= min) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "β = {beta} below {min} for the {} variant",
                self.variant.name()
            )));
        }
        Ok(())
    }
}

/// Aggregate statistics of the inverse transports behind one evaluation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveStats {
    pub transports: usize,
    pub newton_iterations: usize,
    pub damping_events: usize,
    pub max_final_residual: f64,
}

impl SolveStats {
    fn add(&mut self, reports: &[SolveReport]) {
        for r in reports {
            self.transports += 1;
            self.newton_iterations += r.iterations;
            self.damping_events += r.damping_events;
            self.max_final_residual = self.max_final_residual.max(r.final_residual);
        }
    }

    fn merge(&mut self, other: &SolveStats) {
        self.transports += other.transports;
        self.newton_iterations += other.newton_iterations;
        self.damping_events += other.damping_events;
        self.max_final_residual = self.max_final_residual.max(other.max_final_residual);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    /// `R(v, w) z`.
    pub tensor_vector: Vec<f64>,
    pub sectional: f64,
    /// `g(v, R(v, w) w)`.
    pub numerator: f64,
    /// `g(v, v) g(w, w) − g(v, w)²`.
    pub denominator: f64,
    pub tau: f64,
    pub beta: f64,
    pub variant: Variant,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub stats: SolveStats,
}

impl CurvatureReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `Cov_a^τ (Cov_b^σ z)(y)` with `z` a constant field.
fn nested<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    a: &Tangent,
    b: &Tangent,
    z: &Tangent,
    tau: f64,
    sigma: f64,
    variant: Variant,
    config: &NewtonConfig,
    stats: &mut SolveStats,
) -> Result<Tangent> {
    let inner_reports = RefCell::new(Vec::new());
    let constant = |_: &Point| Ok(z.clone());
    let inner = |p: &Point| -> Result<Tangent> {
        let (q, reps) = cov_quotient(model, p, b, &constant, sigma, variant, config).stage(|| "inner quotient".into())?;
        inner_reports.borrow_mut().extend(reps);
        Ok(q)
    };
    let (out, outer_reports) =
        cov_quotient(model, y, a, &inner, tau, variant, config).stage(|| "outer quotient".into())?;
    stats.add(&inner_reports.into_inner());
    stats.add(&outer_reports);
    Ok(out)
}

fn tensor_with_stats<M: EnergyModel + ?Sized>(
    model: &M,
    query: &CurvatureQuery,
    opts: &CovOptions,
) -> Result<(Tangent, SolveStats)> {
    query.validate(model, opts)?;
    let z = query.z.as_ref().unwrap_or(&query.w);
    let sigma = query.tau.powf(query.beta());
    let (y, v, w) = (&query.y, &query.v, &query.w);
    let mut stats = SolveStats::default();
    let vw = nested(model, y, v, w, z, query.tau, sigma, query.variant, &opts.newton, &mut stats)
        .stage(|| "term Cov_v Cov_w z".into())?;
    let wv = nested(model, y, w, v, z, query.tau, sigma, query.variant, &opts.newton, &mut stats)
        .stage(|| "term Cov_w Cov_v z".into())?;
    Ok((vw - wv, stats))
}

/// `R(v, w) z = Cov_v^τ Cov_w^{τ^β} z − Cov_w^τ Cov_v^{τ^β} z` at `y`, with
/// the quotient variant applied at both levels.
pub fn curvature_tensor<M: EnergyModel + ?Sized>(
    model: &M,
    query: &CurvatureQuery,
    opts: &CovOptions,
) -> Result<Tangent> {
    Ok(tensor_with_stats(model, query, opts)?.0)
}

/// Smallest admissible `sin²` of the metric angle between `v` and `w`.
const PLANE_THRESHOLD: f64 = 1e-10;

/// Discrete sectional curvature `g(v, R(v,w)w) / (g(v,v) g(w,w) − g(v,w)²)`.
pub fn sectional_curvature<M: EnergyModel + ?Sized>(
    model: &M,
    query: &CurvatureQuery,
    opts: &CovOptions,
) -> Result<CurvatureReport> {
    query.validate(model, opts)?;
    let g = MetricOperator::at(model, &query.y)?;
    let (v, w) = (&query.v, &query.w);
    let (gvv, gww, gvw) = (g.inner(v, v)?, g.inner(w, w)?, g.inner(v, w)?);
    let denominator = gvv * gww - gvw * gvw;
    let threshold = PLANE_THRESHOLD * gvv * gww;
    if !(denominator > threshold) {
        return Err(Error::DegeneratePlane { gram: denominator, threshold });
    }
    let q = CurvatureQuery { z: None, ..query.clone() };
    let (rw, stats) = tensor_with_stats(model, &q, opts)?;
    let numerator = g.inner(v, &rw)?;
    Ok(CurvatureReport {
        tensor_vector: rw.as_slice().to_vec(),
        sectional: numerator / denominator,
        numerator,
        denominator,
        tau: query.tau,
        beta: query.beta(),
        variant: query.variant,
        v: v.as_slice().to_vec(),
        w: w.as_slice().to_vec(),
        stats,
    })
}

/// One off-diagonal entry of a curvature matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixEntry {
    pub i: usize,
    pub j: usize,
    pub value: Option<f64>,
    pub error: Option<String>,
}

/// Sectional curvatures `κ_ij` for all pairs of a list of tangents.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureMatrix {
    pub size: usize,
    pub tau: f64,
    pub beta: f64,
    pub variant: Variant,
    /// Entries with `i < j`, row-major.
    pub entries: Vec<MatrixEntry>,
    pub stats: SolveStats,
}

impl CurvatureMatrix {
    /// `κ_ij`, or `None` on the diagonal and for failed entries.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return None;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let n = self.size;
        let idx = a * n - a * (a + 1) / 2 + (b - a - 1);
        self.entries[idx].value
    }

    /// Dense symmetric matrix with NaN on the diagonal and at failed entries.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |i, j| self.get(i, j).unwrap_or(f64::NAN))
    }

    pub fn invalid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.value.is_none()).count()
    }

    /// 90th percentile of `|κ_ij|` over valid entries (linear interpolation
    /// between order statistics).
    pub fn clamp_level(&self) -> Option<f64> {
        let mut a: Vec<f64> = self.entries.iter().filter_map(|e| e.value.map(f64::abs)).collect();
        if a.is_empty() {
            return None;
        }
        a.sort_by(|x, y| x.total_cmp(y));
        let pos = 0.9 * (a.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        Some(a[lo] + (pos - lo as f64) * (a[hi] - a[lo]))
    }

    /// `min(κ̄, |κ_ij|)` with `κ̄` from [`Self::clamp_level`].
    pub fn clamped(&self) -> DMatrix<f64> {
        let level = self.clamp_level().unwrap_or(f64::NAN);
        self.to_dense().map(|x| if x.is_nan() { x } else { x.abs().min(level) })
    }

    /// CSV rows `i,j,value,valid`, both orderings of every pair and the
    /// diagonal marked invalid.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["i", "j", "value", "valid"])?;
        for i in 0..self.size {
            for j in 0..self.size {
                let v = self.get(i, j);
                wr.write_record([
                    i.to_string(),
                    j.to_string(),
                    v.map(|x| format!("{x:.12e}")).unwrap_or_else(|| "nan".into()),
                    v.is_some().to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Orders a pair by comparing coefficients lexicographically. The discrete
/// `κ(v, w)` and `κ(w, v)` agree only up to discretization error; a
/// label-free orientation makes the matrix follow any relabeling exactly.
fn oriented<'a>(v: &'a Tangent, w: &'a Tangent) -> (&'a Tangent, &'a Tangent) {
    let order = v.iter().zip(w.iter()).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne());
    if order == Some(std::cmp::Ordering::Greater) {
        (w, v)
    } else {
        (v, w)
    }
}

/// Sectional curvature for every pair of `tangents` at `y`. Pairs are
/// evaluated in parallel; failures are recorded per entry.
pub fn curvature_matrix<M: EnergyModel + ?Sized>(
    model: &M,
    y: &Point,
    tangents: &[Tangent],
    tau: f64,
    beta: Option<f64>,
    variant: Variant,
    opts: &CovOptions,
) -> Result<CurvatureMatrix> {
    model.check_point(y)?;
    for t in tangents {
        check_dim(model.dim(), t.len())?;
    }
    let n = tangents.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<(MatrixEntry, SolveStats)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = oriented(&tangents[i], &tangents[j]);
            let mut q = CurvatureQuery::new(y.clone(), a.clone(), b.clone(), tau, variant);
            q.beta = beta;
            match sectional_curvature(model, &q, opts) {
                Ok(rep) => (MatrixEntry { i, j, value: Some(rep.sectional), error: None }, rep.stats),
                Err(e) => {
                    log::warn!("curvature entry ({i}, {j}) failed: {e}");
                    (MatrixEntry { i, j, value: None, error: Some(e.to_string()) }, SolveStats::default())
                }
            }
        })
        .collect();
    let mut stats = SolveStats::default();
    let mut entries = Vec::with_capacity(results.len());
    for (e, s) in results {
        stats.merge(&s);
        entries.push(e);
    }
    Ok(CurvatureMatrix {
        size: n,
        tau,
        beta: beta.unwrap_or_else(|| variant.default_beta()),
        variant,
        entries,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{make_embedded_model, make_flat_model, SphereChart, TorusChart};
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn flat_space_has_no_curvature() {
        let m = make_flat_model(3);
        let opts = CovOptions::for_model(&m);
        let y = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.5]);
        let w = DVector::from_vec(vec![0.0, 1.0, -0.5]);
        let q = CurvatureQuery::new(y, v, w, 1e-2, Variant::Central);
        let rep = sectional_curvature(&m, &q, &opts).unwrap();
        assert!(rep.sectional.abs() < 1e-8);
        assert!(DVector::from_vec(rep.tensor_vector).norm() < 1e-8);
        assert_eq!(rep.stats.transports, 12);
    }

    #[test]
    fn sphere_tensor_matches_constant_curvature() {
        let m = make_embedded_model(SphereChart).unwrap();
        let opts = CovOptions::for_model(&m);
        // At the equator (e_θ, e_φ) is orthonormal, so R(v,w)w = v.
        let q = CurvatureQuery::new(v2(PI / 2.0, 0.3), v2(1.0, 0.0), v2(0.0, 1.0), 1e-2, Variant::Central);
        let r = curvature_tensor(&m, &q, &opts).unwrap();
        assert!((r - v2(1.0, 0.0)).norm() < 2e-3);
    }

    #[test]
    fn tensor_is_antisymmetric() {
        let m = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let opts = CovOptions::for_model(&m);
        let z = v2(0.3, -0.7);
        let (y, v, w) = (v2(0.2, 0.4), v2(1.0, 0.2), v2(-0.1, 1.0));
        for variant in [Variant::OneSided, Variant::Central] {
            let a = CurvatureQuery::new(y.clone(), v.clone(), w.clone(), 2e-2, variant).with_z(z.clone());
            let b = CurvatureQuery::new(y.clone(), w.clone(), v.clone(), 2e-2, variant).with_z(z.clone());
            let ra = curvature_tensor(&m, &a, &opts).unwrap();
            let rb = curvature_tensor(&m, &b, &opts).unwrap();
            assert_eq!(ra, -rb);
        }
    }

    #[test]
    fn torus_outer_equator_curvature() {
        let m = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let opts = CovOptions::for_model(&m);
        let q = CurvatureQuery::new(v2(0.0, 0.0), v2(1.0, 0.0), v2(0.0, 1.0), 1e-2, Variant::Central);
        let k = sectional_curvature(&m, &q, &opts).unwrap().sectional;
        assert!((k - 1.0 / (2f64.sqrt() + 1.0)).abs() < 1e-3, "κ = {k}");
    }

    #[test]
    fn collinear_plane_is_rejected() {
        let m = make_flat_model(2);
        let opts = CovOptions::for_model(&m);
        let q = CurvatureQuery::new(v2(0.0, 0.0), v2(1.0, 1.0), v2(2.0, 2.0), 1e-2, Variant::Central);
        assert!(matches!(sectional_curvature(&m, &q, &opts), Err(Error::DegeneratePlane { .. })));
    }

    #[test]
    fn query_validation() {
        let m = make_flat_model(2);
        let opts = CovOptions::for_model(&m);
        let base = CurvatureQuery::new(v2(0.0, 0.0), v2(1.0, 0.0), v2(0.0, 1.0), 1e-2, Variant::OneSided);
        assert!(curvature_tensor(&m, &base.clone().with_beta(1.5), &opts).is_err());
        let tiny = CurvatureQuery { tau: 1e-5, ..base.clone() };
        assert!(curvature_tensor(&m, &tiny, &opts).is_err());
        assert!(curvature_tensor(&m, &base, &opts).is_ok());
    }

    #[test]
    fn matrix_layout_and_clamping() {
        let m = make_embedded_model(SphereChart).unwrap();
        let opts = CovOptions::for_model(&m);
        let t = [v2(1.0, 0.0), v2(0.0, 1.0), v2(1.0, 1.0)];
        let mat = curvature_matrix(&m, &v2(1.2, 0.0), &t, 1e-2, None, Variant::Central, &opts).unwrap();
        assert_eq!(mat.entries.len(), 3);
        assert_eq!(mat.invalid_count(), 0);
        let d = mat.to_dense();
        for i in 0..3 {
            assert!(d[(i, i)].is_nan());
            for j in 0..3 {
                if i != j {
                    assert_eq!(d[(i, j)], d[(j, i)]);
                    assert!((d[(i, j)] - 1.0).abs() < 5e-3);
                }
            }
        }
        let c = mat.clamped();
        assert!(c[(0, 1)] <= mat.clamp_level().unwrap());
        let mut buf = Vec::new();
        mat.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text.contains("0,0,nan,false"));
    }

    #[test]
    fn failed_entries_are_marked() {
        let m = make_flat_model(2);
        let opts = CovOptions::for_model(&m);
        let t = [v2(1.0, 0.0), v2(2.0, 0.0), v2(0.0, 1.0)];
        let mat = curvature_matrix(&m, &v2(0.0, 0.0), &t, 1e-2, None, Variant::Central, &opts).unwrap();
        assert_eq!(mat.get(0, 1), None);
        assert!(mat.entries[0].error.is_some());
        assert!(mat.get(0, 2).unwrap().abs() < 1e-8);
    }
}
