use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DVector, Matrix2, Vector3};

use crate::error::{Error, Result};

/// Interior edge `(i, j)` with `k` opposite in the triangle containing the
/// directed edge `i → j` and `l` opposite in the one containing `j → i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flap {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    /// Triangles `(…i, j, k…)` and `(…j, i, l…)`.
    pub tris: [usize; 2],
}

impl Flap {
    pub fn vertices(&self) -> [usize; 4] {
        [self.i, self.j, self.k, self.l]
    }
}

/// Fixed connectivity of a consistently oriented triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTopology {
    vertex_count: usize,
    triangles: Vec<[usize; 3]>,
    flaps: Vec<Flap>,
    boundary_vertices: Vec<usize>,
}

impl MeshTopology {
    pub fn new(vertex_count: usize, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertex_count) {
                return Err(Error::InvalidMesh(format!("triangle {t} has an index out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            for c in 0..3 {
                let (a, b, o) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
                if directed.insert((a, b), (t, o)).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge ({a}, {b}) appears twice: inconsistent orientation or non-manifold edge"
                    )));
                }
            }
        }
        let mut keys: Vec<_> = directed.keys().copied().collect();
        keys.sort_unstable();
        let mut flaps = Vec::new();
        let mut on_boundary = vec![false; vertex_count];
        for (a, b) in keys {
            let (t1, k) = directed[&(a, b)];
            match directed.get(&(b, a)) {
                Some(&(t2, l)) => {
                    if a < b {
                        flaps.push(Flap { i: a, j: b, k, l, tris: [t1, t2] });
                    }
                }
                None => {
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
            }
        }
        let boundary_vertices = (0..vertex_count).filter(|&v| on_boundary[v]).collect();
        Ok(MeshTopology { vertex_count, triangles, flaps, boundary_vertices })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Interior edges with their two opposite vertices.
    pub fn flaps(&self) -> &[Flap] {
        &self.flaps
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn dim(&self) -> usize {
        3 * self.vertex_count
    }
}

#[inline]
pub(crate) fn vertex(x: &DVector<f64>, i: usize) -> Vector3<f64> {
    Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])
}

/// Signed dihedral angle of a flap: the angle between the two triangle
/// normals, positive when the fold turns about `x_j − x_i` counterclockwise.
pub fn dihedral_angle(x: &DVector<f64>, f: &Flap) -> f64 {
    let (xi, xj, xk, xl) = (vertex(x, f.i), vertex(x, f.j), vertex(x, f.k), vertex(x, f.l));
    let e = xj - xi;
    let n1 = e.cross(&(xk - xi));
    let n2 = (xi - xj).cross(&(xl - xj));
    (e.normalize().dot(&n1.cross(&n2))).atan2(n1.dot(&n2))
}

/// Triangle mesh with fixed connectivity, positions, and per-element
/// reference quantities.
#[derive(Debug, Clone)]
pub struct ShellMesh {
    pub topology: MeshTopology,
    pub positions: DVector<f64>,
    /// Triangle areas.
    pub areas: Vec<f64>,
    /// First fundamental forms in the edge basis `(x₁ − x₀, x₂ − x₀)`.
    pub first_forms: Vec<Matrix2<f64>>,
    /// Interior edge lengths, in flap order.
    pub edge_lengths: Vec<f64>,
    pub dihedral_angles: Vec<f64>,
    /// `(a_t + a_t') / 3` for the two triangles of each flap.
    pub edge_areas: Vec<f64>,
}

impl ShellMesh {
    pub fn new(topology: MeshTopology, positions: DVector<f64>) -> Result<Self> {
        if positions.len() != topology.dim() {
            return Err(Error::DimensionMismatch { expected: topology.dim(), found: positions.len() });
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex position".into()));
        }
        let mut areas = Vec::with_capacity(topology.triangles.len());
        let mut first_forms = Vec::with_capacity(topology.triangles.len());
        for (t, tri) in topology.triangles.iter().enumerate() {
            let x0 = vertex(&positions, tri[0]);
            let e1 = vertex(&positions, tri[1]) - x0;
            let e2 = vertex(&positions, tri[2]) - x0;
            let a = 0.5 * e1.cross(&e2).norm();
            if !(a > 0.0) {
                return Err(Error::DegenerateTriangle { index: t, area: a });
            }
            areas.push(a);
            first_forms.push(Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2)));
        }
        let mut edge_lengths = Vec::with_capacity(topology.flaps.len());
        let mut dihedral_angles = Vec::with_capacity(topology.flaps.len());
        let mut edge_areas = Vec::with_capacity(topology.flaps.len());
        for f in &topology.flaps {
            edge_lengths.push((vertex(&positions, f.j) - vertex(&positions, f.i)).norm());
            dihedral_angles.push(dihedral_angle(&positions, f));
            edge_areas.push((areas[f.tris[0]] + areas[f.tris[1]]) / 3.0);
        }
        Ok(ShellMesh { topology, positions, areas, first_forms, edge_lengths, dihedral_angles, edge_areas })
    }

    pub fn vertex_count(&self) -> usize {
        self.topology.vertex_count
    }

    pub fn mean_area(&self) -> f64 {
        self.areas.iter().sum::<f64>() / self.areas.len() as f64
    }

    /// Same connectivity with new positions.
    pub fn with_positions(&self, positions: DVector<f64>) -> Result<ShellMesh> {
        ShellMesh::new(self.topology.clone(), positions)
    }

    pub fn from_obj_str(text: &str) -> Result<ShellMesh> {
        let mut coords = Vec::new();
        let mut tris = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let bad = |what: &str| Error::InvalidMesh(format!("line {}: {what}", lineno + 1));
            match it.next() {
                Some("v") => {
                    for _ in 0..3 {
                        let tok = it.next().ok_or_else(|| bad("vertex needs three coordinates"))?;
                        coords.push(tok.parse::<f64>().map_err(|_| bad("bad coordinate"))?);
                    }
                }
                Some("f") => {
                    let idx: Vec<&str> = it.collect();
                    if idx.len() != 3 {
                        return Err(bad("only triangular faces are supported"));
                    }
                    let mut tri = [0usize; 3];
                    for (c, tok) in idx.iter().enumerate() {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: usize = head.parse().map_err(|_| bad("bad face index"))?;
                        if i == 0 {
                            return Err(bad("face indices are 1-based"));
                        }
                        tri[c] = i - 1;
                    }
                    tris.push(tri);
                }
                _ => {}
            }
        }
        let topology = MeshTopology::new(coords.len() / 3, tris)?;
        ShellMesh::new(topology, DVector::from_vec(coords))
    }

    pub fn read_obj(path: &Path) -> Result<ShellMesh> {
        ShellMesh::from_obj_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        write_obj(&self.topology, &self.positions, path)
    }
}

/// OBJ text with 9 significant digits per coordinate.
pub fn obj_string(topology: &MeshTopology, positions: &DVector<f64>) -> String {
    let mut s = String::with_capacity(48 * topology.vertex_count + 24 * topology.triangles.len());
    for i in 0..topology.vertex_count {
        let p = vertex(positions, i);
        let _ = writeln!(s, "v {:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
    }
    for t in &topology.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_obj(topology: &MeshTopology, positions: &DVector<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, obj_string(topology, positions))?;
    Ok(())
}

/// Writes `prefix_000.obj`, `prefix_001.obj`, … for a sequence of shapes.
pub fn write_obj_sequence(
    topology: &MeshTopology,
    shapes: &[DVector<f64>],
    dir: &Path,
    prefix: &str,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (k, x) in shapes.iter().enumerate() {
        let p = dir.join(format!("{prefix}_{k:03}.obj"));
        write_obj(topology, x, &p)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhombus() -> ShellMesh {
        let h = 3f64.sqrt() / 2.0;
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, h, 0.0, 0.5, -h, 0.0]);
        ShellMesh::new(MeshTopology::new(4, vec![[0, 1, 2], [1, 0, 3]]).unwrap(), x).unwrap()
    }

    #[test]
    fn flap_structure() {
        let m = rhombus();
        assert_eq!(m.topology.flaps(), &[Flap { i: 0, j: 1, k: 2, l: 3, tris: [0, 1] }]);
        assert_eq!(m.topology.boundary_vertices(), &[0, 1, 2, 3]);
        assert_eq!(m.dihedral_angles[0], 0.0);
        assert!((m.edge_areas[0] - 2.0 * (3f64.sqrt() / 4.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fold_sign_and_magnitude() {
        let m = rhombus();
        let mut x = m.positions.clone();
        // Rotate vertex 3 about the x axis by 90°.
        let h = 3f64.sqrt() / 2.0;
        x[10] = 0.0;
        x[11] = h;
        let a = dihedral_angle(&x, &m.topology.flaps()[0]);
        assert!((a.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
        x[11] = -h;
        assert!((dihedral_angle(&x, &m.topology.flaps()[0]) + a).abs() < 1e-14);
    }

    #[test]
    fn inconsistent_orientation_is_rejected() {
        assert!(MeshTopology::new(4, vec![[0, 1, 2], [0, 1, 3]]).is_err());
        assert!(MeshTopology::new(3, vec![[0, 1, 5]]).is_err());
    }

    #[test]
    fn obj_round_trip() {
        let m = rhombus();
        let text = obj_string(&m.topology, &m.positions);
        assert!(text.starts_with("v 0.00000000e0 0.00000000e0 0.00000000e0"));
        let back = ShellMesh::from_obj_str(&text).unwrap();
        assert_eq!(back.topology, m.topology);
        assert!((&back.positions - &m.positions).amax() < 1e-9);
        let again = obj_string(&back.topology, &back.positions);
        assert_eq!(again, text);
    }
}
