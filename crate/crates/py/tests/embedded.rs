//! Drives the bindings through an embedded interpreter.

use pyo3::prelude::*;

use spinn_py::spinn_py;

const SCRIPT: &std::ffi::CStr = cr#"
import math, os, tempfile
import spinn_py as s

v = s.heat_analytic([1.0], 0.25, 0.5, 0.01)
assert abs(v - math.exp(-4 * math.pi**2 * 0.01 * 0.5)) < 1e-12

m = s.Model.interval("spectral-exact", k=3, samples=11)
grid = [j / 10 for j in range(11)]
coeffs = [0.6, -0.3, 0.2]
f = [sum(c * math.sin(2 * math.pi * (k + 1) * x) for k, c in enumerate(coeffs)) for x in grid]
pred = m.predict(f, 0.1, [[x] for x in grid])
assert max(abs(p - s.heat_analytic(coeffs, x, 0.1, 0.01)) for p, x in zip(pred, grid)) < 1e-10

c = [0.1 * (i + 1) for i in range(9)]
back = s.sphere_transform(s.sphere_synthesize(c, 2), 2)
assert max(abs(a - b) for a, b in zip(back, c)) < 1e-9

sm = s.Model.sphere("sphere-c", degree=1, width=4, seed=2)
with tempfile.TemporaryDirectory() as d:
    p = os.path.join(d, "m.ckpt")
    sm.save(p)
    again = s.Model.load(p)
    assert again.n_params() == sm.n_params() > 0
    pts = [[1.0, 2.0], [2.5, 0.3]]
    assert again.predict([0.5] * 400, 0.4, pts) == sm.predict([0.5] * 400, 0.4, pts)

assert "table1-desk" in s.presets()
try:
    s.Model.interval("no-such-variant")
    raise SystemExit("expected ValueError")
except ValueError:
    pass
"#;

#[test]
fn bindings_from_python() {
    pyo3::append_to_inittab!(spinn_py);
    Python::initialize();
    Python::attach(|py| {
        if let Err(e) = py.run(SCRIPT, None, None) {
            e.print(py);
            panic!("embedded script failed");
        }
    });
}
