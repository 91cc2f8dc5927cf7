//! Procedural meshes: subdivided icosahedra, flat sheets, the two-bump
//! plate, and a three-branched closed surface.

use std::collections::HashMap;

use nalgebra::{DVector, Vector3};

use super::mesh::{MeshTopology, ShellMesh};
use crate::error::{Error, Result};

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let v = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ];
    let f = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v.iter().map(|&(x, y, z)| Vector3::new(x, y, z).normalize()).collect(), f)
}

fn stack(points: &[Vector3<f64>]) -> DVector<f64> {
    DVector::from_iterator(3 * points.len(), points.iter().flat_map(|p| [p[0], p[1], p[2]]))
}

/// Unit sphere triangulated by `level` rounds of 1-to-4 subdivision of an
/// icosahedron: `10·4^level + 2` vertices.
pub fn make_sphere_shell(level: usize) -> Result<ShellMesh> {
    let (mut verts, mut faces) = icosahedron();
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(4 * faces.len());
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    ShellMesh::new(MeshTopology::new(verts.len(), faces)?, stack(&verts))
}

/// Regular grid on `[x₀, x₀+lx] × [y₀, y₀+ly]` in the plane `z = 0` with
/// `nx × ny` cells. Cell diagonals are mirrored across the vertical center
/// line, so the triangulation is symmetric under `x ↦ 2x₀ + lx − x` when
/// `nx` is even.
pub fn make_flat_sheet(nx: usize, ny: usize, origin: (f64, f64), lx: f64, ly: f64) -> Result<ShellMesh> {
    if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::InvalidInput("sheet needs positive cell counts and extents".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut pts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            pts.push(Vector3::new(origin.0 + lx * i as f64 / nx as f64, origin.1 + ly * j as f64 / ny as f64, 0.0));
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if 2 * i < nx {
                tris.push([v00, v10, v11]);
                tris.push([v00, v11, v01]);
            } else {
                tris.push([v00, v10, v01]);
                tris.push([v10, v11, v01]);
            }
        }
    }
    ShellMesh::new(MeshTopology::new(pts.len(), tris)?, stack(&pts))
}

/// Geometry of the two-bump plate: `x ∈ [−1, 1]`, `y ∈ [−½, ½]`, bumps
/// centered at `(∓½, 0)`.
pub const PLATE_LENGTH: f64 = 2.0;
pub const PLATE_WIDTH: f64 = 1.0;
/// Bump support radius relative to the plate width.
pub const BUMP_RADIUS: f64 = 0.35;
pub const BUMP_CENTERS: [f64; 2] = [-0.5, 0.5];

/// `(1 − (ρ/ρ₀)²)²` inside the support, zero outside.
pub fn bump_profile(rho: f64) -> f64 {
    let r0 = BUMP_RADIUS * PLATE_WIDTH;
    if rho >= r0 {
        0.0
    } else {
        let s = 1.0 - (rho / r0).powi(2);
        s * s
    }
}

/// Vertical displacement field of a unit-height bump (`which` 0 = left,
/// 1 = right) over the vertices of `plate`.
pub fn bump_field(plate: &ShellMesh, which: usize) -> DVector<f64> {
    let cx = BUMP_CENTERS[which];
    let n = plate.vertex_count();
    let mut d = DVector::zeros(3 * n);
    for i in 0..n {
        let (x, y) = (plate.positions[3 * i], plate.positions[3 * i + 1]);
        d[3 * i + 2] = bump_profile(((x - cx).powi(2) + y * y).sqrt());
    }
    d
}

/// Plate with `2·resolution × resolution` cells carrying a left bump of
/// height `ζ` and a right bump of height `η`.
pub fn make_bump_plate(resolution: usize, zeta: f64, eta: f64) -> Result<ShellMesh> {
    if resolution < 4 {
        return Err(Error::InvalidInput("plate resolution must be at least 4".into()));
    }
    let flat = make_flat_sheet(2 * resolution, resolution, (-1.0, -0.5), PLATE_LENGTH, PLATE_WIDTH)?;
    let x = &flat.positions + bump_field(&flat, 0) * zeta + bump_field(&flat, 1) * eta;
    flat.with_positions(x)
}

/// Capsules `(from, to, radius)` making up [`make_three_branch`]: a trunk
/// and two arms that leave it sideways and turn upward.
const CAPSULES: [([f64; 3], [f64; 3], f64); 5] = [
    ([0.0, 0.0, -1.2], [0.0, 0.0, 1.2], 0.32),
    ([0.0, 0.0, -0.1], [0.65, 0.0, 0.0], 0.17),
    ([0.65, 0.0, 0.0], [0.7, 0.05, 0.7], 0.17),
    ([0.0, 0.0, 0.2], [-0.6, 0.0, 0.3], 0.15),
    ([-0.6, 0.0, 0.3], [-0.65, -0.05, 0.85], 0.15),
];
/// Blend width of the smooth union between trunk and arms.
const BLEND: f64 = 0.12;
/// Vertices below this height form the foot.
const FOOT_HEIGHT: f64 = -1.2;
/// Enough non-collinear held vertices to pin every rigid motion.
pub const MIN_FOOT: usize = 4;
const RAY_STEP: f64 = 0.002;
const RAY_LENGTH: f64 = 3.0;

fn capsule(p: Vector3<f64>, (a, b, r): ([f64; 3], [f64; 3], f64)) -> f64 {
    let (a, b) = (Vector3::from(a), Vector3::from(b));
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0);
    (p - a - ab * t).norm() - r
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b * (1.0 - h) + a * h - k * h * (1.0 - h)
}

/// Signed distance bound of the trunk-and-arms solid.
fn branch_distance(p: Vector3<f64>) -> f64 {
    let c = |i: usize| capsule(p, CAPSULES[i]);
    let right = c(1).min(c(2));
    let left = c(3).min(c(4));
    smooth_min(smooth_min(c(0), right, BLEND), left, BLEND)
}

/// Outermost crossing of the solid's boundary along the ray `t·d`.
fn outermost_crossing(d: Vector3<f64>) -> f64 {
    let mut last = 0.0;
    let mut t = 0.0;
    let mut inside = branch_distance(Vector3::zeros()) < 0.0;
    while t < RAY_LENGTH {
        let next = branch_distance(d * (t + RAY_STEP)) < 0.0;
        if inside && !next {
            last = t;
        }
        inside = next;
        t += RAY_STEP;
    }
    let (mut lo, mut hi) = (last, last + RAY_STEP);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if branch_distance(d * mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Cactus-like closed surface: a vertical trunk with two upturned arms,
/// made by projecting the vertices of a subdivided icosahedron radially
/// onto a smooth union of capsules. Returns the mesh and the foot vertices
/// meant to be held fixed: those below the foot height, or the
/// [`MIN_FOOT`] lowest ones on coarse meshes.
pub fn make_three_branch(level: usize) -> Result<(ShellMesh, Vec<usize>)> {
    let sphere = make_sphere_shell(level)?;
    let mut x = sphere.positions.clone();
    let mut foot = Vec::new();
    for i in 0..sphere.vertex_count() {
        let d = Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
        let q = d * outermost_crossing(d);
        x.rows_mut(3 * i, 3).copy_from(&q);
        if q[2] < FOOT_HEIGHT {
            foot.push(i);
        }
    }
    if foot.len() < MIN_FOOT {
        let mut order: Vec<usize> = (0..sphere.vertex_count()).collect();
        order.sort_by(|&a, &b| x[3 * a + 2].total_cmp(&x[3 * b + 2]).then(a.cmp(&b)));
        foot = order[..MIN_FOOT].to_vec();
        foot.sort_unstable();
    }
    Ok((sphere.with_positions(x)?, foot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shells::mesh::vertex;

    #[test]
    fn icosphere_counts() {
        let s0 = make_sphere_shell(0).unwrap();
        assert_eq!((s0.vertex_count(), s0.topology.triangles().len()), (12, 20));
        for i in 0..12 {
            assert!((vertex(&s0.positions, i).norm() - 1.0).abs() < 1e-15);
        }
        let s2 = make_sphere_shell(2).unwrap();
        assert_eq!(s2.vertex_count(), 162);
        assert_eq!(s2.topology.flaps().len(), 480);
        assert!(s2.topology.boundary_vertices().is_empty());
    }

    #[test]
    fn icosphere_is_outward_oriented() {
        let s = make_sphere_shell(1).unwrap();
        for t in s.topology.triangles() {
            let (a, b, c) = (vertex(&s.positions, t[0]), vertex(&s.positions, t[1]), vertex(&s.positions, t[2]));
            assert!((b - a).cross(&(c - a)).dot(&(a + b + c)) > 0.0);
        }
        // Convex and outward: every dihedral fold has the same sign.
        let sign = s.dihedral_angles[0].signum();
        assert!(s.dihedral_angles.iter().all(|a| a.signum() == sign && a.abs() > 0.1));
    }

    #[test]
    fn flat_plate_has_no_folds() {
        let p = make_bump_plate(4, 0.0, 0.0).unwrap();
        assert_eq!(p.vertex_count(), 9 * 5);
        assert!(p.dihedral_angles.iter().all(|&a| a == 0.0));
        assert_eq!(p.topology.boundary_vertices().len(), 2 * 9 + 2 * 3);
    }

    #[test]
    fn plate_is_mirror_symmetric() {
        let p = make_bump_plate(6, 0.15, 0.15).unwrap();
        let key = |x: f64, y: f64| ((x * 1e6).round() as i64, (y * 1e6).round() as i64);
        let mut index = HashMap::new();
        for i in 0..p.vertex_count() {
            index.insert(key(p.positions[3 * i], p.positions[3 * i + 1]), i);
        }
        let mirror: Vec<usize> =
            (0..p.vertex_count()).map(|i| index[&key(-p.positions[3 * i], p.positions[3 * i + 1])]).collect();
        for i in 0..p.vertex_count() {
            assert!((p.positions[3 * i + 2] - p.positions[3 * mirror[i] + 2]).abs() < 1e-15);
        }
        let mut tris: Vec<[usize; 3]> = p.topology.triangles().iter().map(|t| { let mut s = *t; s.sort(); s }).collect();
        tris.sort();
        let mut mirrored: Vec<[usize; 3]> = p
            .topology
            .triangles()
            .iter()
            .map(|t| { let mut s = [mirror[t[0]], mirror[t[1]], mirror[t[2]]]; s.sort(); s })
            .collect();
        mirrored.sort();
        assert_eq!(tris, mirrored);
    }

    #[test]
    fn bump_profile_support() {
        assert_eq!(bump_profile(0.0), 1.0);
        assert_eq!(bump_profile(0.35), 0.0);
        assert!((bump_profile(0.175) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn three_branch_has_a_foot() {
        let (m, foot) = make_three_branch(3).unwrap();
        assert_eq!(m.vertex_count(), 642);
        assert!(!foot.is_empty() && foot.len() < 30);
        assert!(m.areas.iter().all(|&a| a > 0.05 * m.mean_area()));
        // Both arm tips reach well above the junctions.
        let top = |sign: f64| {
            (0..642)
                .filter(|&i| sign * m.positions[3 * i] > 0.55)
                .map(|i| m.positions[3 * i + 2])
                .fold(f64::NEG_INFINITY, f64::max)
        };
        assert!(top(1.0) > 0.75 && top(-1.0) > 0.9);
    }
}
