//! Discrete shells energy: a membrane term comparing first fundamental forms
//! per triangle and a bending term comparing dihedral angles per interior
//! edge. Derivatives are assembled element by element; the small nonlinear
//! kernels are differentiated with dual numbers and composed with the exact
//! derivatives of the quadratic edge-vector maps.

use nalgebra::{DVector, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::dual::{Dual1, Dual2, Real, V3};
use super::mesh::{vertex, Flap, MeshTopology, ShellMesh};
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShellParams {
    pub mu_mem: f64,
    pub lambda_mem: f64,
    /// Squared thickness multiplying the bending term.
    pub bending_weight: f64,
}

impl Default for ShellParams {
    fn default() -> Self {
        ShellParams { mu_mem: 1.0, lambda_mem: 1.0, bending_weight: 1e-2 }
    }
}

impl ShellParams {
    pub fn with_bending(bending_weight: f64) -> Self {
        ShellParams { bending_weight, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.mu_mem) && ok(self.lambda_mem) && ok(self.bending_weight) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("shell parameters must be finite and non-negative: {self:?}")))
        }
    }
}

/// Reference area weighted membrane density as a function of the reference
/// and deformed first fundamental forms `(g₁₁, g₁₂, g₂₂)`, `(h₁₁, h₁₂, h₂₂)`.
fn membrane_kernel<T: Real>(g: [T; 3], h: [T; 3], p: &ShellParams) -> T {
    let det_g = g[0] * g[2] - g[1] * g[1];
    let det_h = h[0] * h[2] - h[1] * h[1];
    let tr = (g[2] * h[0] - g[1] * h[1].scale(2.0) + g[0] * h[2]) / det_g;
    let det = det_h / det_g;
    let (mu, la) = (p.mu_mem, p.lambda_mem);
    let w = tr.scale(mu / 2.0) + det.scale(la / 4.0) - det.ln().scale(mu / 2.0 + la / 4.0) - T::cst(mu + la / 4.0);
    det_g.sqrt().scale(0.5) * w
}

fn flap_vectors<T: Real>(x: &[T; 12]) -> [V3<T>; 4] {
    [
        V3([x[0], x[1], x[2]]),
        V3([x[3], x[4], x[5]]),
        V3([x[6], x[7], x[8]]),
        V3([x[9], x[10], x[11]]),
    ]
}

/// Signed dihedral angle of a flap `(x_i, x_j, x_k, x_l)`.
fn theta_kernel<T: Real>(x: &[T; 12]) -> T {
    let [xi, xj, xk, xl] = flap_vectors(x);
    let e = xj.sub(xi);
    let n1 = e.cross(xk.sub(xi));
    let n2 = xi.sub(xj).cross(xl.sub(xj));
    (e.dot(n1.cross(n2)) / e.norm()).atan2(n1.dot(n2))
}

/// `l_e² / d_e = 6 |e|² / (|n₁| + |n₂|)`.
fn weight_kernel<T: Real>(x: &[T; 12]) -> T {
    let [xi, xj, xk, xl] = flap_vectors(x);
    let e = xj.sub(xi);
    let n1 = e.cross(xk.sub(xi));
    let n2 = xi.sub(xj).cross(xl.sub(xj));
    e.dot(e).scale(6.0) / (n1.norm() + n2.norm())
}

/// Which quantities an assembly pass produces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct Want {
    pub energy: bool,
    pub g1: bool,
    pub g2: bool,
    pub h11: bool,
    pub h12: bool,
    pub h22: bool,
}

impl Want {
    fn hessian(&self) -> bool {
        self.h11 || self.h12 || self.h22
    }
    fn gradient(&self) -> bool {
        self.g1 || self.g2 || self.hessian()
    }
}

#[derive(Debug, Default)]
pub(crate) struct Assembled {
    pub energy: f64,
    pub g1: Option<DVector<f64>>,
    pub g2: Option<DVector<f64>>,
    pub h11: Option<SparseMatrix>,
    pub h12: Option<SparseMatrix>,
    pub h22: Option<SparseMatrix>,
}

type V9 = SVector<f64, 9>;
type M9 = SMatrix<f64, 9, 9>;
type V12 = SVector<f64, 12>;
type M12 = SMatrix<f64, 12, 12>;

/// First fundamental form entries and their Jacobian w.r.t. the 9 triangle
/// coordinates.
fn form_and_jacobian(x: &DVector<f64>, tri: &[usize; 3]) -> ([f64; 3], SMatrix<f64, 3, 9>) {
    let x0 = vertex(x, tri[0]);
    let e1 = vertex(x, tri[1]) - x0;
    let e2 = vertex(x, tri[2]) - x0;
    let mut j = SMatrix::<f64, 3, 9>::zeros();
    let put = |j: &mut SMatrix<f64, 3, 9>, row: usize, slot: usize, v: Vector3<f64>| {
        for c in 0..3 {
            j[(row, 3 * slot + c)] = v[c];
        }
    };
    put(&mut j, 0, 0, -2.0 * e1);
    put(&mut j, 0, 1, 2.0 * e1);
    put(&mut j, 1, 0, -(e1 + e2));
    put(&mut j, 1, 1, e2);
    put(&mut j, 1, 2, e1);
    put(&mut j, 2, 0, -2.0 * e2);
    put(&mut j, 2, 2, 2.0 * e2);
    ([e1.dot(&e1), e1.dot(&e2), e2.dot(&e2)], j)
}

/// `Σ_k c_k ∇²G_k` for the three fundamental form entries.
fn form_curvature(c: [f64; 3]) -> M9 {
    let d1d1 = [[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
    let d2d2 = [[1.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 1.0]];
    let sym = [[2.0, -1.0, -1.0], [-1.0, 0.0, 1.0], [-1.0, 1.0, 0.0]];
    let mut out = M9::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let s = 2.0 * c[0] * d1d1[a][b] + c[1] * sym[a][b] + 2.0 * c[2] * d2d2[a][b];
            if s != 0.0 {
                for k in 0..3 {
                    out[(3 * a + k, 3 * b + k)] = s;
                }
            }
        }
    }
    out
}

fn flap_coords(x: &DVector<f64>, f: &Flap) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (s, &v) in f.vertices().iter().enumerate() {
        for c in 0..3 {
            out[3 * s + c] = x[3 * v + c];
        }
    }
    out
}

/// Value, gradient and (optionally) Hessian of a 12-variable kernel.
struct Diff12 {
    v: f64,
    g: V12,
    h: Option<M12>,
}

fn diff12(x: &[f64; 12], second: bool, f2: fn(&[Dual2<12>; 12]) -> Dual2<12>, f1: fn(&[Dual1<12>; 12]) -> Dual1<12>) -> Diff12 {
    if second {
        let vars: [Dual2<12>; 12] = std::array::from_fn(|i| Dual2::var(x[i], i));
        let r = f2(&vars);
        Diff12 { v: r.v, g: V12::from_column_slice(&r.g), h: Some(M12::from_fn(|i, j| r.h[i][j])) }
    } else {
        let vars: [Dual1<12>; 12] = std::array::from_fn(|i| Dual1::var(x[i], i));
        let r = f1(&vars);
        Diff12 { v: r.v, g: V12::from_column_slice(&r.g), h: None }
    }
}

fn scatter_vec<const N: usize>(out: &mut DVector<f64>, verts: &[usize], g: &SVector<f64, N>) {
    for (s, &v) in verts.iter().enumerate() {
        for c in 0..3 {
            out[3 * v + c] += g[3 * s + c];
        }
    }
}

fn scatter_mat<const N: usize>(out: &mut SparseMatrix, verts: &[usize], h: &SMatrix<f64, N, N>) {
    for (sa, &va) in verts.iter().enumerate() {
        for (sb, &vb) in verts.iter().enumerate() {
            for ca in 0..3 {
                for cb in 0..3 {
                    let x = h[(3 * sa + ca, 3 * sb + cb)];
                    if x != 0.0 {
                        out.push(3 * va + ca, 3 * vb + cb, x);
                    }
                }
            }
        }
    }
}

fn check_area(det: f64, eps: f64, t: usize) -> Result<()> {
    let area = 0.5 * det.max(0.0).sqrt();
    if !(area > eps) {
        return Err(Error::DegenerateTriangle { index: t, area });
    }
    Ok(())
}

/// One pass over all elements producing the requested quantities of
/// `W[a, b]`. Triangles with area at most `area_eps` in either argument are
/// rejected.
pub(crate) fn assemble(
    topo: &MeshTopology,
    params: &ShellParams,
    a: &DVector<f64>,
    b: &DVector<f64>,
    area_eps: f64,
    want: Want,
) -> Result<Assembled> {
    let n = topo.dim();
    let mut out = Assembled::default();
    let mut g1 = want.g1.then(|| DVector::zeros(n));
    let mut g2 = want.g2.then(|| DVector::zeros(n));
    let cap = |on: bool| if on { 81 * topo.triangles().len() + 144 * topo.flaps().len() } else { 0 };
    let mut h11 = want.h11.then(|| SparseMatrix::with_capacity(n, n, cap(true)));
    let mut h12 = want.h12.then(|| SparseMatrix::with_capacity(n, n, cap(true)));
    let mut h22 = want.h22.then(|| SparseMatrix::with_capacity(n, n, cap(true)));

    for (t, tri) in topo.triangles().iter().enumerate() {
        let (g, ja) = form_and_jacobian(a, tri);
        let (h, jb) = form_and_jacobian(b, tri);
        check_area(g[0] * g[2] - g[1] * g[1], area_eps, t)?;
        check_area(h[0] * h[2] - h[1] * h[1], area_eps, t)?;
        if params.mu_mem == 0.0 && params.lambda_mem == 0.0 {
            continue;
        }
        if want.hessian() {
            let v: [Dual2<6>; 6] = std::array::from_fn(|i| Dual2::var(if i < 3 { g[i] } else { h[i - 3] }, i));
            let f = membrane_kernel([v[0], v[1], v[2]], [v[3], v[4], v[5]], params);
            out.energy += f.v;
            let fg = [f.g[0], f.g[1], f.g[2]];
            let fh = [f.g[3], f.g[4], f.g[5]];
            let block = |r0: usize, c0: usize| SMatrix::<f64, 3, 3>::from_fn(|i, j| f.h[r0 + i][c0 + j]);
            if let Some(o) = g1.as_mut() {
                scatter_vec(o, tri, &(ja.transpose() * SVector::<f64, 3>::from(fg)));
            }
            if let Some(o) = g2.as_mut() {
                scatter_vec(o, tri, &(jb.transpose() * SVector::<f64, 3>::from(fh)));
            }
            if let Some(o) = h11.as_mut() {
                let m: M9 = ja.transpose() * block(0, 0) * ja + form_curvature(fg);
                scatter_mat(o, tri, &m);
            }
            if let Some(o) = h12.as_mut() {
                let m: M9 = ja.transpose() * block(0, 3) * jb;
                scatter_mat(o, tri, &m);
            }
            if let Some(o) = h22.as_mut() {
                let m: M9 = jb.transpose() * block(3, 3) * jb + form_curvature(fh);
                scatter_mat(o, tri, &m);
            }
        } else if want.gradient() {
            let v: [Dual1<6>; 6] = std::array::from_fn(|i| Dual1::var(if i < 3 { g[i] } else { h[i - 3] }, i));
            let f = membrane_kernel([v[0], v[1], v[2]], [v[3], v[4], v[5]], params);
            out.energy += f.v;
            if let Some(o) = g1.as_mut() {
                let fg: V9 = ja.transpose() * SVector::<f64, 3>::new(f.g[0], f.g[1], f.g[2]);
                scatter_vec(o, tri, &fg);
            }
            if let Some(o) = g2.as_mut() {
                let fh: V9 = jb.transpose() * SVector::<f64, 3>::new(f.g[3], f.g[4], f.g[5]);
                scatter_vec(o, tri, &fh);
            }
        } else {
            out.energy += membrane_kernel(g, h, params);
        }
    }

    let mu = params.bending_weight;
    if mu > 0.0 {
        for f in topo.flaps() {
            let verts = f.vertices();
            let xa = flap_coords(a, f);
            let xb = flap_coords(b, f);
            if !want.gradient() {
                let d = theta_kernel(&xa) - theta_kernel(&xb);
                out.energy += mu * d * d * weight_kernel(&xa);
                continue;
            }
            let second = want.hessian();
            let ta = diff12(&xa, second, theta_kernel, theta_kernel);
            let tb = diff12(&xb, second, theta_kernel, theta_kernel);
            let q = diff12(&xa, second, weight_kernel, weight_kernel);
            let d = ta.v - tb.v;
            out.energy += mu * d * d * q.v;
            if let Some(o) = g1.as_mut() {
                scatter_vec(o, &verts, &((ta.g * (2.0 * d * q.v) + q.g * (d * d)) * mu));
            }
            if let Some(o) = g2.as_mut() {
                scatter_vec(o, &verts, &(tb.g * (-2.0 * mu * d * q.v)));
            }
            if let Some(o) = h11.as_mut() {
                let (hta, hq) = (ta.h.as_ref().expect("second order"), q.h.as_ref().expect("second order"));
                let m: M12 = (ta.g * ta.g.transpose() * (2.0 * q.v)
                    + (ta.g * q.g.transpose() + q.g * ta.g.transpose()) * (2.0 * d)
                    + hta * (2.0 * d * q.v)
                    + hq * (d * d))
                    * mu;
                scatter_mat(o, &verts, &m);
            }
            if let Some(o) = h12.as_mut() {
                let m: M12 = (ta.g * tb.g.transpose() * (-2.0 * q.v) + q.g * tb.g.transpose() * (-2.0 * d)) * mu;
                scatter_mat(o, &verts, &m);
            }
            if let Some(o) = h22.as_mut() {
                let htb = tb.h.as_ref().expect("second order");
                let m: M12 = (tb.g * tb.g.transpose() * (2.0 * q.v) - htb * (2.0 * d * q.v)) * mu;
                scatter_mat(o, &verts, &m);
            }
        }
    }
    out.g1 = g1;
    out.g2 = g2;
    out.h11 = h11;
    out.h12 = h12;
    out.h22 = h22;
    Ok(out)
}

/// Energy of deforming `reference` into `deformed` (stacked vertex
/// positions with the reference's connectivity).
pub fn shell_energy(reference: &ShellMesh, deformed: &DVector<f64>, params: &ShellParams) -> Result<f64> {
    params.validate()?;
    if deformed.len() != reference.topology.dim() {
        return Err(Error::DimensionMismatch { expected: reference.topology.dim(), found: deformed.len() });
    }
    let eps = 1e-12 * reference.mean_area();
    let want = Want { energy: true, ..Default::default() };
    Ok(assemble(&reference.topology, params, &reference.positions, deformed, eps, want)?.energy)
}
