//! Discrete geodesics: path energy, boundary value problems, the two-point
//! midpoint and extension solves, and the discrete logarithm and exponential.

use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::energy::{EnergyModel, HessianRequest, Point, Tangent};
use crate::error::{check_dim, Error, Result, ResultExt};
use crate::linalg::SparseMatrix;
use crate::solver::{newton, FnSystem, GaugeRows, NewtonConfig, NewtonSystem, SolveReport};

/// Number of times a failed boundary value solve is retried from the
/// subsampled solution of a path with twice as many segments.
const MAX_UPSAMPLING: usize = 2;

/// A discrete K-path `(y₀, …, y_K)` with the statistics of the solve that
/// produced it.
#[derive(Debug, Clone)]
pub struct DiscretePath {
    pub points: Vec<Point>,
    pub k: usize,
    pub energy: f64,
    pub report: SolveReport,
}

#[derive(Serialize)]
struct PathJson<'a> {
    k: usize,
    energy: f64,
    points: Vec<&'a [f64]>,
    report: &'a SolveReport,
}

impl DiscretePath {
    pub fn to_json(&self) -> Result<String> {
        let doc = PathJson {
            k: self.k,
            energy: self.energy,
            points: self.points.iter().map(|p| p.as_slice()).collect(),
            report: &self.report,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Largest pointwise Euclidean distance to another path of equal length.
    pub fn max_gap(&self, other: &DiscretePath) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// `K · Σ W[y_{k−1}, y_k]` for a path of `K + 1` points.
pub fn path_energy<M: EnergyModel + ?Sized>(model: &M, points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("a path needs at least two points".into()));
    }
    let k = (points.len() - 1) as f64;
    let mut sum = 0.0;
    for w in points.windows(2) {
        sum += model.energy(&w[0], &w[1])?;
    }
    Ok(k * sum)
}

/// Norms of `W_{,2}[y_{k−1}, y_k] + W_{,1}[y_k, y_{k+1}]` at interior indices,
/// optionally with the gauge directions projected out.
pub fn el_residuals<M: EnergyModel + ?Sized>(
    model: &M,
    points: &[Point],
    gauge: Option<&GaugeRows>,
) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for w in points.windows(3) {
        let r = model.grad2(&w[0], &w[1])? + model.grad1(&w[1], &w[2])?;
        out.push(match gauge {
            Some(g) => g.project(&r).norm(),
            None => r.norm(),
        });
    }
    Ok(out)
}

/// The model's gauge rows at `reference`, repeated for `copies` unknowns.
pub(crate) fn model_gauge<M: EnergyModel + ?Sized>(
    model: &M,
    reference: &Point,
    copies: usize,
) -> Option<GaugeRows> {
    let rows = model.gauge_constraints(reference)?;
    let g = GaugeRows::from_orthonormal(rows);
    Some(if copies == 1 { g } else { g.block_diagonal(copies) })
}

fn stack(points: &[Point]) -> DVector<f64> {
    let d = points[0].len();
    let mut x = DVector::zeros(d * points.len());
    for (i, p) in points.iter().enumerate() {
        x.rows_mut(i * d, d).copy_from(p);
    }
    x
}

/// Straight line `((K − k) y_A + k y_B) / K` in coordinates.
pub fn linear_path(ya: &Point, yb: &Point, k: usize) -> Vec<Point> {
    let kf = k as f64;
    (0..=k).map(|i| (ya * (kf - i as f64) + yb * i as f64) / kf).collect()
}

struct BvpSystem<'a, M: ?Sized> {
    model: &'a M,
    ya: &'a Point,
    yb: &'a Point,
    k: usize,
}

impl<M: EnergyModel + ?Sized> BvpSystem<'_, M> {
    fn unpack(&self, x: &DVector<f64>) -> Vec<Point> {
        let d = self.ya.len();
        let mut pts = Vec::with_capacity(self.k + 1);
        pts.push(self.ya.clone());
        for i in 0..self.k - 1 {
            pts.push(x.rows(i * d, d).into_owned());
        }
        pts.push(self.yb.clone());
        pts
    }
}

impl<M: EnergyModel + ?Sized> NewtonSystem for BvpSystem<'_, M> {
    fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.unpack(x);
        let d = self.ya.len();
        let mut r = DVector::zeros((self.k - 1) * d);
        for i in 1..self.k {
            let ri = self.model.grad2(&p[i - 1], &p[i])? + self.model.grad1(&p[i], &p[i + 1])?;
            r.rows_mut((i - 1) * d, d).copy_from(&ri);
        }
        Ok(r)
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<SparseMatrix> {
        let p = self.unpack(x);
        let d = self.ya.len();
        let n = (self.k - 1) * d;
        let mut jac = SparseMatrix::new(n, n);
        // Segment s joins y_s and y_{s+1}; interior point i owns block i − 1.
        for s in 0..self.k {
            let left = s >= 1;
            let right = s + 1 < self.k;
            let want = HessianRequest { h11: left, h12: left && right, h22: right };
            let h = self.model.hessians(&p[s], &p[s + 1], want)?;
            if let Some(h11) = &h.h11 {
                jac.add_block((s - 1) * d, (s - 1) * d, h11, 1.0);
            }
            if let Some(h22) = &h.h22 {
                jac.add_block(s * d, s * d, h22, 1.0);
            }
            if let Some(h12) = &h.h12 {
                jac.add_block((s - 1) * d, s * d, h12, 1.0);
                jac.add_block_transposed(s * d, (s - 1) * d, h12, 1.0);
            }
        }
        Ok(jac)
    }
}

fn solve_bvp<M: EnergyModel + ?Sized>(
    model: &M,
    ya: &Point,
    yb: &Point,
    init: Vec<Point>,
    label: &str,
    config: &NewtonConfig,
) -> Result<DiscretePath> {
    let k = init.len() - 1;
    if k == 1 {
        let energy = path_energy(model, &init)?;
        let report = SolveReport { converged: true, initialization: label.into(), ..Default::default() };
        return Ok(DiscretePath { points: init, k, energy, report });
    }
    let system = BvpSystem { model, ya, yb, k };
    let gauge = model_gauge(model, ya, k - 1);
    let x0 = stack(&init[1..k]);
    let (x, report) = newton(&system, x0, gauge.as_ref(), config, label)?;
    let points = system.unpack(&x);
    let energy = path_energy(model, &points)?;
    Ok(DiscretePath { points, k, energy, report })
}

/// Discrete geodesic of `K` segments joining `y_A` and `y_B`.
///
/// All interior points are solved for simultaneously with a block Newton
/// method. Without `init` the solve starts from [`linear_path`]; if it does
/// not converge, the problem is first solved with `2K` segments and every
/// other point of that path is used as a new starting guess.
pub fn geodesic_bvp<M: EnergyModel + ?Sized>(
    model: &M,
    ya: &Point,
    yb: &Point,
    k: usize,
    init: Option<&DiscretePath>,
    config: &NewtonConfig,
) -> Result<DiscretePath> {
    model.check_point(ya)?;
    model.check_point(yb)?;
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let (start, label) = match init {
        Some(p) => {
            if p.points.len() != k + 1 {
                return Err(Error::InvalidInput(format!(
                    "initial path has {} points, expected {}",
                    p.points.len(),
                    k + 1
                )));
            }
            for q in &p.points {
                check_dim(model.dim(), q.len())?;
            }
            let mut pts = p.points.clone();
            pts[0] = ya.clone();
            pts[k] = yb.clone();
            (pts, "caller supplied path")
        }
        None => (linear_path(ya, yb, k), "linear interpolation"),
    };
    bvp_with_fallback(model, ya, yb, start, label, config, 0)
}

fn bvp_with_fallback<M: EnergyModel + ?Sized>(
    model: &M,
    ya: &Point,
    yb: &Point,
    start: Vec<Point>,
    label: &str,
    config: &NewtonConfig,
    depth: usize,
) -> Result<DiscretePath> {
    let k = start.len() - 1;
    let first = solve_bvp(model, ya, yb, start, label, config);
    match first {
        Err(Error::NonConvergence(_)) | Err(Error::SingularSystem { .. }) if depth < MAX_UPSAMPLING => {
            let fine = bvp_with_fallback(
                model,
                ya,
                yb,
                linear_path(ya, yb, 2 * k),
                "linear interpolation",
                config,
                depth + 1,
            );
            match fine {
                Ok(fine) => {
                    let sub: Vec<Point> = fine.points.iter().step_by(2).cloned().collect();
                    let label = format!("subsampled {}-segment geodesic", 2 * k);
                    solve_bvp(model, ya, yb, sub, &label, config).or(first)
                }
                Err(_) => first,
            }
        }
        other => other,
    }
}

/// Point `c` with `W_{,2}[a, c] + W_{,1}[c, b] = 0`, the middle of a
/// discrete 2-geodesic `(a, c, b)`.
pub fn midpoint<M: EnergyModel + ?Sized>(
    model: &M,
    a: &Point,
    b: &Point,
    init: Option<&Point>,
    config: &NewtonConfig,
) -> Result<(Point, SolveReport)> {
    model.check_point(a)?;
    model.check_point(b)?;
    let (c0, label) = match init {
        Some(c) => {
            check_dim(model.dim(), c.len())?;
            (c.clone(), "caller supplied")
        }
        None => ((a + b) * 0.5, "coordinate mean"),
    };
    let system = FnSystem {
        residual: |c: &DVector<f64>| Ok(model.grad2(a, c)? + model.grad1(c, b)?),
        jacobian: |c: &DVector<f64>| {
            let mut j = model.hess22(a, c)?;
            j.add_block(0, 0, &model.hess11(c, b)?, 1.0);
            Ok(j)
        },
    };
    let gauge = model_gauge(model, a, 1);
    newton(&system, c0, gauge.as_ref(), config, label)
}

/// Point `z` such that `(y₀, c, z)` is a discrete 2-geodesic, i.e.
/// `W_{,2}[y₀, c] + W_{,1}[c, z] = 0`.
pub fn extend<M: EnergyModel + ?Sized>(
    model: &M,
    y0: &Point,
    c: &Point,
    init: Option<&Point>,
    config: &NewtonConfig,
) -> Result<(Point, SolveReport)> {
    model.check_point(y0)?;
    model.check_point(c)?;
    let (z0, label) = match init {
        Some(z) => {
            check_dim(model.dim(), z.len())?;
            (z.clone(), "caller supplied")
        }
        None => (c * 2.0 - y0, "linear extrapolation"),
    };
    let fixed = model.grad2(y0, c)?;
    let system = FnSystem {
        residual: |z: &DVector<f64>| Ok(&fixed + model.grad1(c, z)?),
        jacobian: |z: &DVector<f64>| model.hess12(c, z),
    };
    let gauge = model_gauge(model, y0, 1);
    newton(&system, z0, gauge.as_ref(), config, label)
}

/// `K (y₁ − y₀)` for the discrete geodesic from `y_A` to `y_B`.
pub fn discrete_log<M: EnergyModel + ?Sized>(
    model: &M,
    ya: &Point,
    yb: &Point,
    k: usize,
    config: &NewtonConfig,
) -> Result<Tangent> {
    let path = geodesic_bvp(model, ya, yb, k, None, config)?;
    Ok((&path.points[1] - &path.points[0]) * k as f64)
}

/// The discrete geodesic shot from `y₀` with initial velocity `v`:
/// `y₁ = y₀ + v/K`, then `K − 1` extension steps.
pub fn discrete_exp_path<M: EnergyModel + ?Sized>(
    model: &M,
    y0: &Point,
    v: &Tangent,
    k: usize,
    config: &NewtonConfig,
) -> Result<DiscretePath> {
    model.check_point(y0)?;
    check_dim(model.dim(), v.len())?;
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let mut points = vec![y0.clone(), y0 + v / k as f64];
    let mut reports = Vec::new();
    for step in 1..k {
        let (z, rep) = extend(model, &points[step - 1], &points[step], None, config)
            .stage(|| format!("exponential step {step}"))?;
        points.push(z);
        reports.push(rep);
    }
    let energy = path_energy(model, &points)?;
    let mut report = SolveReport::merge(&reports.iter().collect::<Vec<_>>());
    report.converged = true;
    report.initialization = "linear extrapolation".into();
    Ok(DiscretePath { points, k, energy, report })
}

/// Endpoint `y_K` of [`discrete_exp_path`].
pub fn discrete_exp<M: EnergyModel + ?Sized>(
    model: &M,
    y0: &Point,
    v: &Tangent,
    k: usize,
    config: &NewtonConfig,
) -> Result<Point> {
    let mut path = discrete_exp_path(model, y0, v, k, config)?;
    Ok(path.points.pop().expect("path has K + 1 points"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{make_embedded_model, make_flat_model, TorusChart};

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn torus() -> crate::energy::EmbeddedModel {
        make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap()
    }

    #[test]
    fn flat_path_energy_is_squared_distance() {
        let m = make_flat_model(2);
        let b = v2(3.0, 4.0);
        let pts = linear_path(&v2(0.0, 0.0), &b, 2);
        assert!((path_energy(&m, &pts).unwrap() - 25.0).abs() < 1e-12);
        let constant = vec![b.clone(); 4];
        assert_eq!(path_energy(&m, &constant).unwrap(), 0.0);
    }

    #[test]
    fn flat_two_path_is_minimized_at_the_midpoint() {
        let m = make_flat_model(2);
        let b = v2(2.0, -1.0);
        let at = |c: DVector<f64>| path_energy(&m, &[v2(0.0, 0.0), c, b.clone()]).unwrap();
        let best = at(&b * 0.5);
        for d in [v2(1e-3, 0.0), v2(0.0, -1e-3), v2(0.2, 0.1)] {
            assert!(at(&b * 0.5 + d) > best);
        }
    }

    #[test]
    fn flat_geodesic_is_straight_and_reversible() {
        let m = make_flat_model(3);
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![-1.0, 0.5, 4.0]);
        let cfg = NewtonConfig::for_model(&m);
        let fwd = geodesic_bvp(&m, &a, &b, 5, None, &cfg).unwrap();
        let lin = linear_path(&a, &b, 5);
        for (p, q) in fwd.points.iter().zip(&lin) {
            assert!((p - q).norm() < 1e-14);
        }
        let bwd = geodesic_bvp(&m, &b, &a, 5, None, &cfg).unwrap();
        for (p, q) in fwd.points.iter().zip(bwd.points.iter().rev()) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn torus_equator_geodesic_is_equispaced() {
        let m = torus();
        let cfg = NewtonConfig::for_model(&m);
        let path = geodesic_bvp(&m, &v2(0.0, 0.0), &v2(0.4, 0.0), 4, None, &cfg).unwrap();
        for (i, p) in path.points.iter().enumerate() {
            assert!((p[0] - 0.1 * i as f64).abs() < 1e-10);
            assert!(p[1].abs() < 1e-10);
        }
        let res = el_residuals(&m, &path.points, None).unwrap();
        assert!(res.iter().all(|&r| r <= path.report.tolerance));
    }

    #[test]
    fn torus_geodesic_lowers_energy() {
        let m = torus();
        let cfg = NewtonConfig::for_model(&m);
        let (a, b) = (v2(0.1, 0.3), v2(0.6, 1.2));
        let path = geodesic_bvp(&m, &a, &b, 6, None, &cfg).unwrap();
        let lin = path_energy(&m, &linear_path(&a, &b, 6)).unwrap();
        assert!(path.energy <= lin);
        assert!(path.report.converged);
    }

    #[test]
    fn midpoint_and_extend_are_inverse() {
        let m = torus();
        let cfg = NewtonConfig::for_model(&m);
        let (a, b) = (v2(0.2, 0.5), v2(0.35, 0.3));
        let (c, _) = midpoint(&m, &a, &b, None, &cfg).unwrap();
        let (z, _) = extend(&m, &a, &c, None, &cfg).unwrap();
        assert!((z - &b).norm() < 1e-10);
        let (same, _) = midpoint(&m, &a, &a, None, &cfg).unwrap();
        assert_eq!(same, a);
    }

    #[test]
    fn flat_closed_forms() {
        let m = make_flat_model(2);
        let cfg = NewtonConfig::for_model(&m);
        let (a, b) = (v2(1.0, 1.0), v2(3.0, -1.0));
        assert!((midpoint(&m, &a, &b, None, &cfg).unwrap().0 - v2(2.0, 0.0)).norm() < 1e-15);
        assert!((extend(&m, &a, &b, None, &cfg).unwrap().0 - v2(5.0, -3.0)).norm() < 1e-15);
        for k in [1, 2, 7] {
            assert!((discrete_log(&m, &a, &b, k, &cfg).unwrap() - (&b - &a)).norm() < 1e-14);
            assert!((discrete_exp(&m, &a, &(&b - &a), k, &cfg).unwrap() - &b).norm() < 1e-14);
        }
    }

    #[test]
    fn torus_equator_log_and_extension() {
        let m = torus();
        let cfg = NewtonConfig::for_model(&m);
        let log = discrete_log(&m, &v2(0.0, 0.0), &v2(0.3, 0.0), 8, &cfg).unwrap();
        assert!((log - v2(0.3, 0.0)).norm() < 1e-8);
        let (z, _) = extend(&m, &v2(0.0, 0.0), &v2(0.1, 0.0), None, &cfg).unwrap();
        assert!((z - v2(0.2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn torus_exp_log_round_trip() {
        let m = torus();
        let cfg = NewtonConfig::for_model(&m);
        let y0 = v2(0.3, 0.8);
        let v = v2(0.12, -0.16);
        let y1 = discrete_exp(&m, &y0, &v, 4, &cfg).unwrap();
        let back = discrete_log(&m, &y0, &y1, 4, &cfg).unwrap();
        assert!((back - v).norm() < 1e-8);
    }

    #[test]
    fn path_json_lists_points() {
        let m = make_flat_model(2);
        let cfg = NewtonConfig::for_model(&m);
        let p = geodesic_bvp(&m, &v2(0.0, 0.0), &v2(1.0, 0.0), 2, None, &cfg).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(doc["points"][1], serde_json::json!([0.5, 0.0]));
        assert_eq!(doc["k"], 2);
    }
}
