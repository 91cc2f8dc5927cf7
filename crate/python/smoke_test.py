"""Smoke test for the geocalc_py extension.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/geocalc_py-*.whl
"""

import json
import math
import tempfile

import geocalc_py as gc


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    mesh = gc.Mesh.sphere(1)
    assert mesh.vertex_count() == 42 and len(mesh.triangles) == 80
    shell = gc.Model.shell(mesh, bending_weight=1e-2)
    x = mesh.positions
    assert abs(shell.energy(x, x)) < 1e-12
    stretched = [c * (1.1 if i % 3 == 0 else 1.0) for i, c in enumerate(x)]
    e = shell.energy(x, stretched)
    assert e > 0.0, e
    print(f"shell energy of a 10% stretch: {e:.6g}")

    flat = gc.Model.flat(3)
    points, energy = flat.geodesic([0, 0, 0], [1, 2, 2], 4)
    assert close(points[2][1], 1.0, 1e-10)
    assert close(energy, 9.0, 1e-10)  # K times the sum of segment energies
    v = flat.log([0, 0, 0], [1, 2, 2], 4)
    assert all(close(a, b, 1e-10) for a, b in zip(v, [1, 2, 2]))

    torus = gc.Model.torus(math.sqrt(2), 1.0)
    y = [0.3, 0.7]
    kappa = torus.sectional_curvature(y, [1, 0], [0, 1], tau=1e-2)
    exact = gc.torus_gaussian_curvature(math.sqrt(2), 1.0, *y)
    print(f"torus curvature at {y}: discrete {kappa:.8f}, analytic {exact:.8f}")
    assert close(kappa, exact, 1e-3)

    try:
        torus.sectional_curvature(y, [1, 0], [0, 1], variant="sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("bad variant accepted")

    with tempfile.TemporaryDirectory() as out:
        outcome = json.loads(gc.run_experiment(json.dumps({"experiment": "torus-map", "torus": {"grid": 8}}), out))
        assert outcome["invalid_rows"] == 0, outcome
        print(f"torus-map on an 8x8 grid: max error {outcome['summary']['max_abs_error']:.3e}")

    print("ok")


if __name__ == "__main__":
    main()
