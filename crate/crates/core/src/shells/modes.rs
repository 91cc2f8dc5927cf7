use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::energy::ShellParams;
use super::mesh::ShellMesh;
use super::model::{rigid_modes, shell_energy_model, GaugeSpec};
use crate::energy::{EnergyModel, Tangent};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_rows;

/// An eigenpair of the shell Hessian.
#[derive(Debug, Clone)]
pub struct Mode {
    pub eigenvalue: f64,
    pub vector: Tangent,
}

/// Scales to Euclidean length `√n` and makes the largest-magnitude entry
/// (first one on ties) positive.
fn normalize(mut v: DVector<f64>, n: usize) -> DVector<f64> {
    v *= (n as f64).sqrt() / v.norm();
    let (mut best, mut idx) = (0.0, 0);
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best + 1e-12 * best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v = -v;
    }
    v
}

fn sorted_pairs(eig: SymmetricEigen<f64, nalgebra::Dyn>) -> Vec<(f64, DVector<f64>)> {
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// The `k` smallest eigenpairs of `W_{,22}[s, s]` on the subspace allowed by
/// the gauge, with the plain Euclidean inner product.
pub fn hessian_eigenmodes(mesh: &ShellMesh, params: &ShellParams, gauge: &GaugeSpec, k: usize) -> Result<Vec<Mode>> {
    let model = shell_energy_model(mesh, *params, gauge.clone())?;
    let x = &mesh.positions;
    let d = model.dim();
    let n = mesh.vertex_count();
    let h = model.hess22(x, x)?.to_dense();
    let h = (&h + h.transpose()) * 0.5;

    let pairs: Vec<(f64, DVector<f64>)> = match gauge {
        GaugeSpec::None => {
            if k > d {
                return Err(Error::InvalidInput(format!("{k} modes requested, {d} available")));
            }
            sorted_pairs(SymmetricEigen::new(h))
        }
        GaugeSpec::FixedVertices(list) => {
            let mut fixed = vec![false; n];
            for &v in list {
                fixed[v] = true;
            }
            let free: Vec<usize> = (0..d).filter(|&i| !fixed[i / 3]).collect();
            if k > free.len() {
                return Err(Error::InvalidInput(format!("{k} modes requested, {} available", free.len())));
            }
            let sub = DMatrix::from_fn(free.len(), free.len(), |i, j| h[(free[i], free[j])]);
            sorted_pairs(SymmetricEigen::new(sub))
                .into_iter()
                .map(|(l, v)| {
                    let mut full = DVector::zeros(d);
                    for (i, &g) in free.iter().enumerate() {
                        full[g] = v[i];
                    }
                    (l, full)
                })
                .collect()
        }
        GaugeSpec::ProjectRigid => {
            let c = orthonormal_rows(&rigid_modes(x));
            if k > d - c.nrows() {
                return Err(Error::InvalidInput(format!("{k} modes requested, {} available", d - c.nrows())));
            }
            let p = DMatrix::identity(d, d) - c.tr_mul(&c);
            // Shift the rigid directions above the spectrum of P H P.
            let shift = 2.0 * h.norm() + model.metric_scale();
            let a = &p * &h * &p + c.tr_mul(&c) * shift;
            let a = (&a + a.transpose()) * 0.5;
            sorted_pairs(SymmetricEigen::new(a))
        }
    };
    let modes: Vec<Mode> = pairs
        .into_iter()
        .take(k)
        .map(|(l, v)| Mode { eigenvalue: l, vector: normalize(v, n) })
        .collect();
    if modes.iter().any(|m| !m.eigenvalue.is_finite() || m.vector.iter().any(|x| !x.is_finite())) {
        return Err(Error::Eigen("non-finite eigenpair".into()));
    }
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shells::generate::{make_flat_sheet, make_sphere_shell};

    #[test]
    fn free_sphere_has_six_rigid_modes() {
        let s = make_sphere_shell(1).unwrap();
        let p = ShellParams::default();
        let modes = hessian_eigenmodes(&s, &p, &GaugeSpec::None, 7).unwrap();
        let scale = shell_energy_model(&s, p, GaugeSpec::None).unwrap().metric_scale();
        for m in &modes[..6] {
            assert!(m.eigenvalue.abs() <= 1e-8 * scale, "{}", m.eigenvalue);
        }
        assert!(modes[6].eigenvalue > 1e-4 * scale);
    }

    #[test]
    fn projected_modes_are_orthogonal_and_normalized() {
        let s = make_sphere_shell(1).unwrap();
        let n = s.vertex_count();
        let modes = hessian_eigenmodes(&s, &ShellParams::default(), &GaugeSpec::ProjectRigid, 5).unwrap();
        let c = rigid_modes(&s.positions);
        for (i, a) in modes.iter().enumerate() {
            assert!((a.vector.norm() - (n as f64).sqrt()).abs() < 1e-10);
            assert!((&c * &a.vector).amax() < 1e-8 * n as f64);
            assert!(a.eigenvalue > 0.0);
            for b in &modes[i + 1..] {
                assert!(a.vector.dot(&b.vector).abs() <= 1e-8 * n as f64);
                assert!(a.eigenvalue <= b.eigenvalue);
            }
        }
    }

    #[test]
    fn clamped_sheet_lowest_mode_is_transverse() {
        let s = make_flat_sheet(6, 6, (0.0, 0.0), 1.0, 1.0).unwrap();
        let edge: Vec<usize> = (0..7).collect();
        let modes = hessian_eigenmodes(&s, &ShellParams::with_bending(1e-3), &GaugeSpec::FixedVertices(edge.clone()), 1)
            .unwrap();
        let v = &modes[0].vector;
        let (mut inplane, mut normal) = (0.0, 0.0);
        for i in 0..s.vertex_count() {
            inplane += v[3 * i].powi(2) + v[3 * i + 1].powi(2);
            normal += v[3 * i + 2].powi(2);
        }
        assert!(normal > 100.0 * inplane);
        for &i in &edge {
            assert_eq!(v.rows(3 * i, 3).amax(), 0.0);
        }
    }
}
