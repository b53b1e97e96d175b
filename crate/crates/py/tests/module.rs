use pyo3::ffi::c_str;
use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_drives_core_from_python() {
    Python::attach(|py| {
        let m = PyModule::new(py, "fpm").unwrap();
        fpm::fpm(&m).unwrap();
        let locals = PyDict::new(py);
        locals.set_item("fpm", m).unwrap();
        py.run(
            c_str!(
                r#"
s = fpm.System.from_text("patch_px = 15\nunroll_t = 10\n")
assert (s.num_leds, s.bright_count, s.dark_count) == (89, 21, 68)
assert len(s.leds()) == 89
d = s.heuristic_design(4, seed=1)
y = s.simulate(d, 2)
r = s.reconstruct(d, y)
assert len(r.cost_history) == 11
assert r.cost_history[-1] < r.cost_history[0]
try:
    s.reconstruct(s.single_design(), y)
    raise AssertionError("expected failure")
except fpm.FpmError:
    pass
"#
            ),
            None,
            Some(&locals),
        )
        .unwrap();
    });
}
