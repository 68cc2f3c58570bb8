use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyModule;

fn run(code: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "fembem").unwrap();
        fembem_py::fembem_py(&m).unwrap();
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("fembem", &m).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.display(py);
            panic!("python code failed");
        }
    });
}

#[test]
fn module_exposes_the_main_types() {
    run(r#"
import fembem
for name in ["Mesh", "Coil", "System", "Solution", "Case", "square_torus_cycle", "magnetized_ball_b", "MU0"]:
    assert hasattr(fembem, name), name
assert abs(fembem.MU0 - 4e-7 * 3.141592653589793) < 1e-20
"#);
}

#[test]
fn ball_solve_round_trip() {
    run(r#"
import fembem
mesh = fembem.Mesh.ball(2)
mesh.set_material(1, 1.0, [0.0, 0.0, 1.0])
system = fembem.System(mesh)
assert system.dim == system.n_fem + system.n_bem
sol = system.solve(tol=1e-8)
assert sol.residuals[-1] <= 1e-8
assert len(sol.interior_b()) == mesh.n_tets
assert sol.normal_flux_jump() <= 1e-12
y = system.matvec(sol.x)
r = system.rhs()
assert max(abs(a - b) for a, b in zip(y, r)) <= 1e-6 * max(abs(v) for v in r)
"#);
}

#[test]
fn errors_map_to_python_exceptions() {
    run(r#"
import fembem
mesh = fembem.Mesh.ball(2)
try:
    fembem.System(mesh, cycles=[[0, 1]])
except ValueError as e:
    assert "cycle" in str(e)
else:
    raise AssertionError("open cycle accepted")
try:
    fembem.Mesh.load("/nonexistent/mesh.msh")
except OSError:
    pass
else:
    raise AssertionError("missing file accepted")
try:
    mesh.set_material(1, -2.0)
except ValueError:
    pass
else:
    raise AssertionError("negative permeability accepted")
"#);
}
