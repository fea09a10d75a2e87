"""Smoke test for the compiled extension. Run after `pip install`:

    python crates/py/python/smoke_test.py
"""

import math
import os
import tempfile

import spinn_py


def main():
    # closed-form heat solution: a single mode decays exponentially
    v = spinn_py.heat_analytic([1.0], 0.25, 0.5, 0.01)
    assert abs(v - math.exp(-4 * math.pi**2 * 0.01 * 0.5)) < 1e-12, v

    # exact interval model reproduces the closed form
    m = spinn_py.Model.interval("spectral-exact", k=3, samples=11)
    assert m.n_params() == 0
    coeffs = [0.6, -0.3, 0.2]
    grid = [j / 10 for j in range(11)]
    samples = [sum(c * math.sin(2 * math.pi * (k + 1) * x) for k, c in enumerate(coeffs)) for x in grid]
    pred = m.predict(samples, 0.1, [[x] for x in grid])
    for x, p in zip(grid, pred):
        want = spinn_py.heat_analytic(coeffs, x, 0.1, 0.01)
        assert abs(p - want) < 1e-10, (x, p, want)

    # trainable models have parameters and survive a save/load round trip
    s = spinn_py.Model.sphere("sphere-a", degree=2, width=8, seed=1)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ckpt")
        s.save(path)
        back = spinn_py.Model.load(path)
        assert back.n_params() == s.n_params() > 0
        f = [math.cos(0.1 * i) for i in range(400)]
        assert back.predict(f, 0.3, [[1.0, 2.0]]) == s.predict(f, 0.3, [[1.0, 2.0]])

    # sphere transform round trip
    c = [((i * 7) % 5) / 5 - 0.4 for i in range(16)]
    back = spinn_py.sphere_transform(spinn_py.sphere_synthesize(c, 3), 3)
    assert max(abs(a - b) for a, b in zip(c, back)) < 1e-10

    # errors map to Python exceptions
    try:
        spinn_py.Model.interval("no-such-variant")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    # minimal experiment end to end
    assert "table1-desk" in spinn_py.presets()
    with tempfile.TemporaryDirectory() as d:
        rows = spinn_py.run(spinn_py.preset_text("minimal"), d, os.path.join(d, "cache"))
        mse = [r for r in rows if r[1] == "mse"]
        assert len(mse) == 1 and mse[0][3] < 1e-12, mse
        assert os.path.exists(os.path.join(d, "metrics.csv"))

    print("smoke test passed")


if __name__ == "__main__":
    main()
