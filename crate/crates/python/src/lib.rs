//! Python bindings: meshes, the coupled system, its solution and TOML-driven cases.

use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fembem::bem::MU0;
use fembem::case::{convergence_study, exit_code, run_case};
use fembem::config::CaseConfig;
use fembem::coupling::{apply_motion, augment_system, build_current_sheet, CoupledSystem, RigidMotion, SystemOptions};
use fembem::fem::LoopCoil;
use fembem::mesh::{generate, load_msh, write_msh, Material, Point, TetMesh};
use fembem::post::{self, ExteriorField};
use fembem::solver::{build_preconditioner, solve_augmented, BlockPreconditioner, Solution, SolverConfig};

fn py_err(e: fembem::Error) -> PyErr {
    let msg = e.to_string();
    match exit_code(&e) {
        4 => PyIOError::new_err(msg),
        3 => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn points(v: Vec<[f64; 3]>) -> Vec<Point> {
    v.into_iter().map(Point::from).collect()
}

fn arrays(v: &[Point]) -> Vec<[f64; 3]> {
    v.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Tetrahedral mesh with per-region materials.
#[pyclass(name = "Mesh", module = "fembem", skip_from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: TetMesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    #[pyo3(signature = (n, radius=1.0, center=[0.0, 0.0, 0.0]))]
    fn ball(n: usize, radius: f64, center: [f64; 3]) -> PyResult<Self> {
        if n == 0 || !(radius > 0.0) {
            return Err(PyValueError::new_err("ball needs n >= 1 and a positive radius"));
        }
        Ok(Self { inner: generate::ball(n, radius, Point::from(center)) })
    }

    #[staticmethod]
    fn square_torus(major: f64, half: f64, n_cross: usize, n_around: usize) -> PyResult<Self> {
        if n_cross == 0 || n_around < 3 || !(half > 0.0 && major > half) {
            return Err(PyValueError::new_err("square torus needs major > half > 0, n_cross >= 1, n_around >= 3"));
        }
        Ok(Self { inner: generate::square_torus(major, half, n_cross, n_around) })
    }

    #[staticmethod]
    #[pyo3(signature = (n, size=1.0, origin=[0.0, 0.0, 0.0]))]
    fn kuhn_cube(n: usize, size: f64, origin: [f64; 3]) -> PyResult<Self> {
        if n == 0 || !(size > 0.0) {
            return Err(PyValueError::new_err("cube needs n >= 1 and a positive size"));
        }
        Ok(Self { inner: generate::kuhn_cube(n, Point::from(origin), size) })
    }

    /// Gmsh MSH 2.2 ASCII file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_msh(path).map_err(py_err)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_msh(&self.inner, path).map_err(py_err)
    }

    /// Places `other` in the same mesh; its region tags are kept.
    fn merged(&self, other: &PyMesh) -> PyResult<Self> {
        let merged = generate::merge(&[self.inner.clone(), other.inner.clone()]);
        let region = self.inner.region.iter().chain(&other.inner.region).copied().collect();
        let mut mesh = TetMesh::new(merged.nodes, merged.tets, region).map_err(py_err)?;
        for (tag, m) in self.inner.materials.iter().chain(&other.inner.materials) {
            mesh.set_material(*tag, *m);
        }
        Ok(Self { inner: mesh })
    }

    /// Sets every tet to region `tag`.
    fn with_region(&self, tag: i64) -> PyResult<Self> {
        let region = vec![tag; self.inner.n_tets()];
        let mesh = TetMesh::new(self.inner.nodes.clone(), self.inner.tets.clone(), region).map_err(py_err)?;
        Ok(Self { inner: mesh })
    }

    #[pyo3(signature = (tag, mu_r, magnetization=[0.0, 0.0, 0.0]))]
    fn set_material(&mut self, tag: i64, mu_r: f64, magnetization: [f64; 3]) -> PyResult<()> {
        if !(mu_r > 0.0 && mu_r.is_finite()) {
            return Err(PyValueError::new_err(format!("mu_r must be positive, got {mu_r}")));
        }
        self.inner.set_material(tag, Material { mu_r, magnetization });
        Ok(())
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_tets(&self) -> usize {
        self.inner.n_tets()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    #[getter]
    fn mesh_size(&self) -> f64 {
        self.inner.mesh_size()
    }

    #[getter]
    fn regions(&self) -> Vec<i64> {
        self.inner.region.clone()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(nodes={}, tets={}, edges={})", self.inner.n_nodes(), self.inner.n_tets(), self.inner.n_edges())
    }
}

/// Thick circular coil with uniform azimuthal current density.
#[pyclass(name = "Coil", module = "fembem", frozen, from_py_object)]
#[derive(Clone)]
struct PyCoil {
    inner: LoopCoil,
}

#[pymethods]
impl PyCoil {
    #[new]
    #[pyo3(signature = (inner_radius, outer_radius, height, current, center=[0.0, 0.0, 0.0], axis=[0.0, 0.0, 1.0]))]
    fn new(inner_radius: f64, outer_radius: f64, height: f64, current: f64, center: [f64; 3], axis: [f64; 3]) -> PyResult<Self> {
        let inner = LoopCoil {
            center: Point::from(center),
            axis: Point::from(axis),
            inner_radius,
            outer_radius,
            height,
            current,
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Current density (A/m²) at `x`.
    fn density(&self, x: [f64; 3]) -> [f64; 3] {
        self.inner.density(&Point::from(x)).into()
    }
}

/// Assembled coupled FEM-BEM operator with its current sheets and preconditioner.
#[pyclass(name = "System", module = "fembem", frozen)]
struct PySystem {
    sys: CoupledSystem,
    cycles: Vec<Vec<usize>>,
    precond: Arc<BlockPreconditioner>,
}

#[pymethods]
impl PySystem {
    /// `cycles` are closed boundary node paths, one per current sheet.
    #[new]
    #[pyo3(signature = (mesh, coils=Vec::new(), cycles=Vec::new()))]
    fn new(mesh: &PyMesh, coils: Vec<PyCoil>, cycles: Vec<Vec<usize>>) -> PyResult<Self> {
        let density = |x: &Point| coils.iter().fold(Point::zeros(), |acc, c| acc + c.inner.density(x));
        let current: Option<&(dyn Fn(&Point) -> Point + Sync)> = if coils.is_empty() { None } else { Some(&density) };
        let sys = CoupledSystem::assemble(mesh.inner.clone(), current, SystemOptions::default()).map_err(py_err)?;
        for c in &cycles {
            build_current_sheet(&sys.surface, c).map_err(py_err)?;
        }
        let precond = Arc::new(build_preconditioner(&sys));
        Ok(Self { sys, cycles, precond })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    #[getter]
    fn n_fem(&self) -> usize {
        self.sys.n_fem()
    }

    #[getter]
    fn n_bem(&self) -> usize {
        self.sys.n_bem()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.sys.n_components()
    }

    /// `S x` for the coupled operator without sheets.
    fn matvec(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.sys.dim() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.sys.dim(), x.len())));
        }
        let mut y = vec![0.0; x.len()];
        fembem::solver::Operator::apply(&self.sys, &x, &mut y);
        Ok(y)
    }

    fn rhs(&self) -> Vec<f64> {
        self.sys.rhs()
    }

    /// Rigidly moves component `component`; only the coupling blocks are reassembled and
    /// the preconditioner is shared.
    #[pyo3(signature = (component, translation=[0.0, 0.0, 0.0], axis=[0.0, 0.0, 1.0], angle_deg=0.0))]
    fn moved(&self, component: usize, translation: [f64; 3], axis: [f64; 3], angle_deg: f64) -> PyResult<Self> {
        let rot = generate::rotation_axis(&Point::from(axis), angle_deg.to_radians());
        let motion = RigidMotion::new(component, rot, Point::from(translation)).map_err(py_err)?;
        let sys = apply_motion(&self.sys, &motion).map_err(py_err)?;
        Ok(Self { sys, cycles: self.cycles.clone(), precond: self.precond.clone() })
    }

    #[pyo3(signature = (tol=1e-8, max_iter=2000, initial_guess=None))]
    fn solve(&self, tol: f64, max_iter: usize, initial_guess: Option<&PySolution>) -> PyResult<PySolution> {
        let cfg = SolverConfig { tol, max_iter, ..SolverConfig::default() };
        cfg.validate().map_err(py_err)?;
        let sheets = self
            .cycles
            .iter()
            .map(|c| build_current_sheet(&self.sys.surface, c))
            .collect::<fembem::Result<Vec<_>>>()
            .map_err(py_err)?;
        let aug = augment_system(self.sys.clone(), sheets).map_err(py_err)?;
        let x0 = initial_guess.map(|s| s.solution.x.as_slice());
        if x0.is_some_and(|x| x.len() != self.sys.dim()) {
            return Err(PyValueError::new_err("initial guess belongs to a system of another size"));
        }
        let solution = solve_augmented(&aug, self.precond.as_ref(), &cfg, x0).map_err(py_err)?;
        Ok(PySolution { sys: self.sys.clone(), solution })
    }

    fn __repr__(&self) -> String {
        format!("System(n_fem={}, n_bem={}, sheets={})", self.sys.n_fem(), self.sys.n_bem(), self.cycles.len())
    }
}

/// Solution of a coupled system; fields are in tesla.
#[pyclass(name = "Solution", module = "fembem", frozen)]
struct PySolution {
    sys: CoupledSystem,
    solution: Solution,
}

impl PySolution {
    fn exterior(&self) -> ExteriorField<'_> {
        ExteriorField { surface: &self.sys.surface, trace: &self.solution.trace, lambda: &self.solution.lambda }
    }

    fn cells(&self) -> Vec<Point> {
        post::interior_b(&self.sys.mesh, self.solution.fem_part(&self.sys))
    }
}

#[pymethods]
impl PySolution {
    #[getter]
    fn iterations(&self) -> usize {
        self.solution.report.iterations
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.solution.report.residuals.clone()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.solution.x.clone()
    }

    /// Current-sheet amplitudes.
    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.solution.alpha.clone()
    }

    /// Per-tet constant `B`.
    fn interior_b(&self) -> Vec<[f64; 3]> {
        arrays(&self.cells())
    }

    fn l2_norm(&self) -> f64 {
        post::l2_norm(&self.sys.mesh, &self.cells())
    }

    fn normal_flux_jump(&self) -> f64 {
        post::normal_flux_jump(&self.sys.mesh, &self.cells())
    }

    /// `B` at exterior points; raises for points inside or too close to the body.
    fn exterior_b(&self, points_: Vec<[f64; 3]>) -> PyResult<Vec<[f64; 3]>> {
        Ok(arrays(&self.exterior().b(&points(points_)).map_err(py_err)?))
    }

    /// `∮ H·dl` in amperes over a circle.
    #[pyo3(signature = (center, axis, radius, samples=128))]
    fn ampere_loop(&self, center: [f64; 3], axis: [f64; 3], radius: f64, samples: usize) -> PyResult<f64> {
        let pts = post::circle_loop(&Point::from(center), &Point::from(axis), radius, samples);
        post::ampere_loop(&self.exterior(), &pts).map_err(py_err)
    }

    fn write_vtk(&self, path: &str) -> PyResult<()> {
        post::write_volume_vtk(&self.sys.mesh, &[("B", &self.cells())], path).map_err(py_err)
    }
}

/// TOML case configuration.
#[pyclass(name = "Case", module = "fembem")]
struct PyCase {
    inner: CaseConfig,
}

#[pymethods]
impl PyCase {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CaseConfig::from_toml(text).map_err(py_err)? })
    }

    /// Relative paths in the file resolve against its directory.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: CaseConfig::load(path).map_err(py_err)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn output_directory(&self) -> String {
        self.inner.output_dir().display().to_string()
    }

    #[setter]
    fn set_output_directory(&mut self, dir: &str) {
        self.inner.output.directory = dir.into();
    }

    /// Solves the first mesh level and the motion script; returns the report as a dict.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = run_case(&self.inner).map_err(py_err)?;
        json_to_py(py, &report)
    }

    /// Convergence study over all mesh levels; returns the report as a dict.
    fn study<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = convergence_study(&self.inner).map_err(py_err)?;
        json_to_py(py, &report)
    }
}

/// Closed boundary node path around the tube of a generated square torus.
#[pyfunction]
fn square_torus_cycle(n_cross: usize, n_around: usize) -> Vec<usize> {
    generate::square_torus_cycle(n_cross, n_around)
}

/// Analytic `B` of a uniformly magnetized ball centred at the origin.
#[pyfunction]
fn magnetized_ball_b(radius: f64, magnetization: [f64; 3], x: [f64; 3]) -> [f64; 3] {
    post::magnetized_ball_b(radius, &Point::from(magnetization), &Point::from(x)).into()
}

#[pymodule]
#[pyo3(name = "fembem")]
pub fn fembem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MU0", MU0)?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyCoil>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyCase>()?;
    m.add_function(wrap_pyfunction!(square_torus_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(magnetized_ball_b, m)?)?;
    Ok(())
}
