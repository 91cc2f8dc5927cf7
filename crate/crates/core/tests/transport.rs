use geocalc::energy::{make_embedded_model, EnergyModel, SphereChart, TorusChart};
use geocalc::experiments::AnalyticOracle;
use geocalc::solver::NewtonConfig;
use geocalc::transport::transport_polygonal;
use nalgebra::{DVector, Vector2};
use proptest::prelude::*;

/// RK4 transport along the same chart polygon.
fn oracle_polygonal(oracle: &AnalyticOracle, waypoints: &[[f64; 2]], w0: [f64; 2]) -> [f64; 2] {
    waypoints.windows(2).fold(w0, |w, leg| {
        let (a, b) = (leg[0], leg[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        oracle.transport(|t| ([a[0] + t * d[0], a[1] + t * d[1]], d), w, 400)
    })
}

fn ladder_error<M: EnergyModel>(model: &M, oracle: &AnalyticOracle, waypoints: &[[f64; 2]], w0: [f64; 2], n: usize) -> f64 {
    let pts: Vec<DVector<f64>> = waypoints.iter().map(|p| DVector::from_vec(p.to_vec())).collect();
    let cfg = NewtonConfig::for_model(model);
    let w = transport_polygonal(model, &pts, &DVector::from_vec(w0.to_vec()), n, &cfg).unwrap();
    let exact = oracle_polygonal(oracle, waypoints, w0);
    (Vector2::new(w[0], w[1]) - Vector2::from(exact)).norm()
}

#[test]
fn ladder_converges_to_oracle_on_the_torus() {
    let model = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
    let oracle = AnalyticOracle::torus(2f64.sqrt(), 1.0);
    let path = [[0.1, 0.2], [0.9, 0.2], [0.9, 1.4], [0.3, 2.0]];
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&n| ladder_error(&model, &oracle, &path, [0.3, -0.4], n)).collect();
    assert!(errors[2] < 5e-3, "{errors:?}");
    for e in errors.windows(2) {
        let ratio = e[0] / e[1];
        assert!(ratio > 1.7, "{errors:?}");
    }
}

#[test]
fn ladder_converges_to_oracle_on_the_sphere() {
    let model = make_embedded_model(SphereChart).unwrap();
    let oracle = AnalyticOracle::sphere();
    let path = [[0.8, 0.0], [0.8, 1.5], [1.6, 1.5], [0.8, 0.0]];
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&n| ladder_error(&model, &oracle, &path, [0.2, 0.5], n)).collect();
    assert!(errors[2] < 5e-3, "{errors:?}");
    assert!(errors[0] / errors[2] > 3.0, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ladder_step_tracks_oracle(
        u in -3.0..3.0f64, v in -3.0..3.0f64,
        du in -0.5..0.5f64, dv in -0.5..0.5f64,
        w in prop::array::uniform2(-1.0..1.0f64),
    ) {
        let model = make_embedded_model(TorusChart::new(2f64.sqrt(), 1.0)).unwrap();
        let oracle = AnalyticOracle::torus(2f64.sqrt(), 1.0);
        let path = [[u, v], [u + du, v + dv]];
        let e = ladder_error(&model, &oracle, &path, w, 16);
        // First order in the step count, vanishing with leg or payload.
        let (len, size) = (du.hypot(dv), w[0].hypot(w[1]));
        prop_assert!(e <= 1.5 * len * size * (len + size) / 16.0 + 1e-9, "error {e}, leg {len}, payload {size}");
    }
}
