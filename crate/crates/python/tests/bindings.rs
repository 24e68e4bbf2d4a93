use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(script: &str) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "mec_aoi").unwrap();
        mec_aoi_py::mec_aoi_module(&m).unwrap();
        let locals = PyDict::new(py);
        locals.set_item("m", m).unwrap();
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&locals), None) {
            panic!("{e}\n{script}");
        }
    });
}

#[test]
fn closed_forms() {
    run(r#"
r = m.mec_only()
assert (r.delta, r.p_bar) == (1.5, 1.0)
assert abs(m.local_only(0.5).delta - 3.5) < 1e-12
mom = m.service_moments(0.5, 1)
assert (mom.e_s, mom.e_y, mom.e_s2) == (1.5, 1.0, 2.5)
"#);
}

#[test]
fn policies_and_solver() {
    run(r#"
p = m.Policy.z_threshold([5, 3, 3])
assert p.offloads(5, 0) and not p.offloads(4, 0)
sol = m.rvi_solve(0.5, 0.0, a_max=20)
assert abs(sol.g - 1.5) < 1e-9
assert sol.thresholds == {0: 1}
ev = m.evaluate(m.Policy.service_threshold(1), 0.5, a_max=30)
assert abs(ev.delta - 11 / 6) < 1e-9
"#);
}

#[test]
fn errors_map_to_value_error() {
    run(r#"
for bad in (lambda: m.local_only(1.5), lambda: m.rvi_solve(0.5, -1.0), lambda: m.Policy.age_threshold(0)):
    try:
        bad()
    except ValueError:
        continue
    raise AssertionError("accepted")
"#);
}

#[test]
fn simulation_and_frontier() {
    run(r#"
a = m.simulate(m.Policy.service_threshold(2), 0.4, 50_000, 11)
b = m.simulate(m.Policy.service_threshold(2), 0.4, 50_000, 11)
assert (a.delta_hat, a.p_bar_hat) == (b.delta_hat, b.p_bar_hat)
rows = m.frontier(0.3, a_stars=[1, 2], z_stars=[0], lambdas=[1.0], a_max=40)
assert [r.family for r in rows] == ["local_only", "mec_only", "age_threshold", "age_threshold", "service_threshold", "optimal"]
"#);
}
