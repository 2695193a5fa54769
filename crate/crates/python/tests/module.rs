use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "pygtbo").unwrap();
        pygtbo::pygtbo(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("pygtbo", m).unwrap();
        let code = std::ffi::CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn information_functions() {
    with_module(
        r#"
import math
assert abs(pygtbo.binary_entropy(0.5) - math.log(2)) < 1e-12
mi = pygtbo.mutual_information(0.5, 1.0, 1e4, samples=20000, seed=2)
assert abs(mi - 0.6406) < 0.02, mi
try:
    pygtbo.mutual_information(1.5, 1.0, 2.0)
    raise AssertionError("accepted p > 1")
except ValueError:
    pass
"#,
    );
}

#[test]
fn particles_and_benchmark() {
    with_module(
        r#"
nm = pygtbo.NoiseModel(0.0, 0.01, 1.0)
ps = pygtbo.ParticleSet(2000, [0.1] * 5, seed=1)
ps.update([1], 2.0, nm)
ps.update([0, 2, 3, 4], 0.0, nm)
m = ps.marginals()
assert m[1] > 0.9 and max(m[0], m[2], m[3], m[4]) < 0.1, m

b = pygtbo.Benchmark("branin2", 10, active_indices=[3, 8], noise_std=0.0)
assert b.active_indices == [3, 8]
assert b([0.5] * 10) == b.evaluate_true([0.5] * 10)
assert b.evaluations == 1
try:
    pygtbo.Benchmark("branin2", 10, active_indices=[3, 30])
    raise AssertionError("accepted out-of-range index")
except ValueError:
    pass
"#,
    );
}

#[test]
fn group_testing_finds_branin_dimensions() {
    with_module(
        r#"
b = pygtbo.Benchmark("branin2", 16, noise_std=0.0, seed=7)
r = pygtbo.run_group_testing(b, "particles = 1000\nbudget = 40", seed=7)
assert r.active_set == b.active_indices, (r.active_set, b.active_indices)
assert r.noise_model.sigma_sq >= r.noise_model.sigma_n_sq
try:
    pygtbo.run_group_testing(b, "particles = 0")
    raise AssertionError("accepted zero particles")
except ValueError:
    pass
"#,
    );
}
