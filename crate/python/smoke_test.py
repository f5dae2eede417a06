"""Quick check of the gasket_lab extension module.

Build with `maturin develop -m crates/python/Cargo.toml`, or build
`-p gasket-lab-python --features extension-module` and copy
libgasket_lab_py.so onto the path as gasket_lab.so.
"""

import math
import tempfile

import gasket_lab as gl


def main():
    c = gl.constants(1.0)
    assert abs(c["d_f"] - math.log(3) / math.log(2)) < 1e-12
    assert abs(c["d_w"] - math.log(5) / math.log(2)) < 1e-12

    g = gl.LevelGraph(0, 2)
    assert len(g) == 15
    assert abs(sum(g.weights) - 1.0) < 1e-12
    ev = g.spectrum()
    assert abs(ev[0]) < 1e-10 and all(b >= a - 1e-12 for a, b in zip(ev, ev[1:]))

    cloud = gl.Cloud(1, 2.0, 0.25, 6, seed=7)
    assert gl.Cloud.from_csv(cloud.to_csv()).points() == cloud.points()
    assert len(cloud.thinned(1.0)) <= len(cloud)

    amb = gl.Ambient(1, 3, 1, 1.0)
    ts = [0.5, 1.0, 2.0, 4.0]
    curve = amb.averaged_laplace(1.0, 0.25, 6, ts, 60, 1)
    vals = [v for _, v, _ in curve]
    assert all(a > b for a, b in zip(vals, vals[1:])), vals

    saus = gl.sausage_functional(g, g.index_of(0, 0), [0.5, 1.0], 1.0, 0.5, 4, 1.0, 200, 3)
    assert all(0.0 < m <= 1.0 for _, m, _ in saus)

    fit = gl.fit_stretched_exponential([1, 2, 4, 8, 16, 32], [math.exp(-2 * t ** 0.4) for t in [1, 2, 4, 8, 16, 32]], 0.4)
    assert abs(fit["c_hat"] - 2.0) < 1e-9
    assert gl.m0_scale(8.0, 1.0, 1.0) >= 0
    assert 11.0 < gl.lambda_bm(6) < 11.5

    with tempfile.TemporaryDirectory() as d:
        report = gl.run("spectrum", d, [("M", "0"), ("m", "2")])
        assert "spectrum" in report
        try:
            gl.run("fit", d, [("input", d + "/missing.csv")])
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing input accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
