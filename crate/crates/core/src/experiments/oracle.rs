//! Closed-form geometry of the chart surfaces, used only to check the
//! discrete constructions.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surface {
    /// `(u, v) ↦ ((R + r cos v) cos u, (R + r cos v) sin u, r sin v)`.
    Torus { major: f64, minor: f64 },
    /// Unit sphere in colatitude/longitude `(θ, φ)`.
    Sphere,
}

/// Christoffel symbols `Γ[k][i][j] = Γ^k_{ij}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticOracle {
    pub surface: Surface,
}

impl AnalyticOracle {
    pub fn torus(major: f64, minor: f64) -> Self {
        AnalyticOracle { surface: Surface::Torus { major, minor } }
    }

    pub fn sphere() -> Self {
        AnalyticOracle { surface: Surface::Sphere }
    }

    pub fn metric(&self, p: [f64; 2]) -> Matrix2<f64> {
        match self.surface {
            Surface::Torus { major, minor } => {
                let rho = major + minor * p[1].cos();
                Matrix2::new(rho * rho, 0.0, 0.0, minor * minor)
            }
            Surface::Sphere => Matrix2::new(1.0, 0.0, 0.0, p[0].sin().powi(2)),
        }
    }

    pub fn gaussian_curvature(&self, p: [f64; 2]) -> f64 {
        match self.surface {
            Surface::Torus { major, minor } => p[1].cos() / (minor * (major + minor * p[1].cos())),
            Surface::Sphere => 1.0,
        }
    }

    pub fn christoffel(&self, p: [f64; 2]) -> Christoffel {
        let mut g = [[[0.0; 2]; 2]; 2];
        match self.surface {
            Surface::Torus { major, minor } => {
                let (s, c) = p[1].sin_cos();
                let rho = major + minor * c;
                g[0][0][1] = -minor * s / rho;
                g[0][1][0] = g[0][0][1];
                g[1][0][0] = rho * s / minor;
            }
            Surface::Sphere => {
                let (s, c) = p[0].sin_cos();
                g[0][1][1] = -s * c;
                g[1][0][1] = c / s;
                g[1][1][0] = g[1][0][1];
            }
        }
        g
    }

    /// Parallel transport of `w0` along `path(t)`, `t ∈ [0, 1]`, by RK4 on
    /// `ẇ^k = −Γ^k_{ij} ṗ^i w^j`. `path` returns position and velocity.
    pub fn transport<P>(&self, path: P, w0: [f64; 2], steps: usize) -> [f64; 2]
    where
        P: Fn(f64) -> ([f64; 2], [f64; 2]),
    {
        let rhs = |t: f64, w: Vector2<f64>| {
            let (p, dp) = path(t);
            let gam = self.christoffel(p);
            Vector2::from_fn(|k, _| {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s -= gam[k][i][j] * dp[i] * w[j];
                    }
                }
                s
            })
        };
        let h = 1.0 / steps as f64;
        let mut w = Vector2::from(w0);
        for n in 0..steps {
            let t = n as f64 * h;
            let k1 = rhs(t, w);
            let k2 = rhs(t + h / 2.0, w + k1 * (h / 2.0));
            let k3 = rhs(t + h / 2.0, w + k2 * (h / 2.0));
            let k4 = rhs(t + h, w + k3 * h);
            w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        [w[0], w[1]]
    }

    /// Gaussian curvature from the Christoffel symbols by central
    /// differences: `K = g(R(e₀,e₁)e₁, e₀) / det g`.
    fn curvature_from_connection(&self, p: [f64; 2]) -> f64 {
        let h = 1e-5;
        let d = |i: usize| -> Christoffel {
            let (mut a, mut b) = (p, p);
            a[i] += h;
            b[i] -= h;
            let (ga, gb) = (self.christoffel(a), self.christoffel(b));
            let mut out = [[[0.0; 2]; 2]; 2];
            for k in 0..2 {
                for i2 in 0..2 {
                    for j in 0..2 {
                        out[k][i2][j] = (ga[k][i2][j] - gb[k][i2][j]) / (2.0 * h);
                    }
                }
            }
            out
        };
        let (d0, d1) = (d(0), d(1));
        let gam = self.christoffel(p);
        // R^k_{1 0 1} = ∂₀Γ^k_{11} − ∂₁Γ^k_{01} + Γ^k_{0m}Γ^m_{11} − Γ^k_{1m}Γ^m_{01}
        let mut r = [0.0; 2];
        for (k, rk) in r.iter_mut().enumerate() {
            *rk = d0[k][1][1] - d1[k][0][1];
            for m in 0..2 {
                *rk += gam[k][0][m] * gam[m][1][1] - gam[k][1][m] * gam[m][0][1];
            }
        }
        let g = self.metric(p);
        (g[(0, 0)] * r[0] + g[(0, 1)] * r[1]) / g.determinant()
    }

    /// Checks the closed forms against each other and against textbook
    /// values. Run before every experiment.
    pub fn self_test(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(format!("oracle self-test failed: {m}")));
        if let Surface::Torus { major, minor } = self.surface {
            let k0 = self.gaussian_curvature([0.0, 0.0]);
            if (k0 - 1.0 / (minor * (major + minor))).abs() > 1e-14 {
                return fail(format!("torus K(v=0) = {k0}"));
            }
        }
        let points: &[[f64; 2]] = match self.surface {
            Surface::Torus { .. } => &[[0.0, 0.0], [0.3, 0.7], [1.0, 2.0], [-2.0, 3.5]],
            Surface::Sphere => &[[0.4, 0.0], [1.2, 1.0], [2.5, -2.0]],
        };
        for &p in points {
            let (a, b) = (self.gaussian_curvature(p), self.curvature_from_connection(p));
            if (a - b).abs() > 1e-7 * (1.0 + a.abs()) {
                return fail(format!("K = {a} but connection gives {b} at {p:?}"));
            }
        }
        // Transport keeps the metric norm; once around a parallel of the
        // sphere it turns by −2π cos θ₀ against the orthonormal chart frame.
        let theta = 1.0;
        let sphere = AnalyticOracle::sphere();
        let w = sphere.transport(|t| ([theta, 2.0 * PI * t], [0.0, 2.0 * PI]), [1.0, 0.0], 400);
        let angle = (w[1] * theta.sin()).atan2(w[0]);
        let turn = -2.0 * PI * theta.cos();
        let expect = turn.sin().atan2(turn.cos());
        if (angle - expect).abs() > 1e-8 {
            return fail(format!("sphere holonomy {angle}, expected {expect}"));
        }
        let path = |t: f64| ([0.2 + t, 0.5 + 2.0 * t], [1.0, 2.0]);
        let w0 = [0.3, -0.8];
        let w1 = self.transport(path, w0, 400);
        let norm = |p: [f64; 2], w: [f64; 2]| {
            let v = Vector2::from(w);
            v.dot(&(self.metric(p) * v))
        };
        let (n0, n1) = (norm(path(0.0).0, w0), norm(path(1.0).0, w1));
        if (n0 - n1).abs() > 1e-9 * n0 {
            return fail(format!("transport changed |w|² from {n0} to {n1}"));
        }
        Ok(())
    }
}
