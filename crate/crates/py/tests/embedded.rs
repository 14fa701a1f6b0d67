use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(mgsim::mgsim)(py);
        let globals = PyDict::new(py);
        globals.set_item("mgsim", module).unwrap();
        f(py, &globals);
    });
}

#[test]
fn module_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theta.mgf");
    with_module(|py, g| {
        g.set_item("path", path.to_str().unwrap()).unwrap();
        py.run(
            cr#"
f = mgsim.Field.random([8, 8, 8], 3, 2, 1.5)
assert abs(f.l2_norm() - 1.5) < 1e-12
assert f.hermitian_defect() == 0.0 and f.gauge_violation() == 0.0
u = f.velocity(1e-2)
assert len(u) == 3 and all(c.hermitian_defect() < 1e-14 for c in u)

S = mgsim.Forcing([((1, 1, 1), 0.5 + 0.1j)])
sim = mgsim.Simulator([8, 8, 8], 1.0, 0.0, 0.25, 0.125)
traj = sim.run(mgsim.Field.zeros([8, 8, 8]), S)
assert traj.times == [0.0, 0.125, 0.25]
assert traj.max_relative_residual < 1e-3

mgsim.write_snapshot(path, f, 0.5, 1e-3, 1.0)
g, t, nu, kappa = mgsim.read_snapshot(path)
assert (t, nu, kappa) == (0.5, 1e-3, 1.0)
assert (g - f).max_abs() == 0.0
assert mgsim.weak_distance(f, g) == 0.0

try:
    mgsim.Forcing([((1, 1, 0), 1.0)])
    raise AssertionError("gauge violation accepted")
except ValueError as e:
    assert "gauge violation" in str(e)
"#,
            Some(g),
            None,
        )
        .unwrap();
    });
}
