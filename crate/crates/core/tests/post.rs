mod common;

use common::*;
use fembem::bem::MU0;
use fembem::coupling::{augment_system, build_current_sheet, CoupledSystem, SystemOptions};
use fembem::mesh::{generate, Material, Point};
use fembem::post::{
    self, ampere_loop, circle_loop, convergence_csv, flag_non_monotone, ConvergenceRow, ExteriorField, CSV_HEADER,
};
use fembem::solver::{build_preconditioner, solve_augmented, solve_coupled, Solution, SolverConfig};
use fembem::Error;

fn solved_sphere(n: usize) -> (CoupledSystem, Solution) {
    let sys = sphere_system(n);
    let p = build_preconditioner(&sys);
    let sol = solve_coupled(&sys, &p, &SolverConfig::default(), None).unwrap();
    (sys, sol)
}

fn solved_torus() -> (CoupledSystem, Solution) {
    let (sys, cycle) = torus_system(4, 32);
    let sheet = build_current_sheet(&sys.surface, &cycle).unwrap();
    let p = build_preconditioner(&sys);
    let aug = augment_system(sys.clone(), vec![sheet]).unwrap();
    let sol = solve_augmented(&aug, &p, &SolverConfig::default(), None).unwrap();
    (sys, sol)
}

fn row(level: usize, l2_error: f64) -> ConvergenceRow {
    ConvergenceRow {
        level,
        h: 0.5,
        n_fem: 10,
        n_bem: 4,
        l2_norm: 1.0,
        l2_error,
        iterations: 3,
        seconds: f64::NAN,
        warning: String::new(),
    }
}

#[test]
fn source_free_body_has_zero_field() {
    let mut m = generate::ball(2, 1.0, Point::zeros());
    m.set_material(1, Material { mu_r: 2.0, magnetization: [0.0; 3] });
    let sys = CoupledSystem::assemble(m, None, SystemOptions::default()).unwrap();
    let p = build_preconditioner(&sys);
    let sol = solve_coupled(&sys, &p, &SolverConfig::default(), None).unwrap();
    let cells = post::interior_b(&sys.mesh, sol.fem_part(&sys));
    assert!(cells.iter().all(|b| *b == Point::zeros()));
    assert_eq!(post::l2_norm(&sys.mesh, &cells), 0.0);
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    let b = field.b(&[Point::new(0.0, 0.0, 3.0)]).unwrap();
    assert_eq!(b[0], Point::zeros());
}

#[test]
fn l2_error_of_exact_piecewise_constant_field_is_zero() {
    let mesh = magnetized_ball(2);
    let c = Point::new(0.3, -0.2, 1.1);
    let cells = vec![c; mesh.n_tets()];
    assert_eq!(post::l2_error(&mesh, &cells, |_| c), 0.0);
    let vol: f64 = (0..mesh.n_tets()).map(|t| mesh.tet_volume(t)).sum();
    assert!((post::l2_norm(&mesh, &cells) - c.norm() * vol.sqrt()).abs() <= 1e-12);
    let avg = post::volume_average(&mesh, &cells, |_| true);
    assert!((avg - c).norm() <= 1e-14);
}

#[test]
fn curl_of_edge_field_has_continuous_normal_flux() {
    let (sys, sol) = solved_sphere(3);
    let cells = post::interior_b(&sys.mesh, sol.fem_part(&sys));
    assert!(post::normal_flux_jump(&sys.mesh, &cells) <= 1e-12);
}

#[test]
fn exterior_dipole_decays_with_inverse_cube() {
    let (sys, sol) = solved_sphere(3);
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    let b = field.b(&[Point::new(0.0, 0.0, 4.0), Point::new(0.0, 0.0, 8.0)]).unwrap();
    let ratio = b[0].norm() / b[1].norm();
    assert!((ratio / 8.0 - 1.0).abs() <= 0.1, "ratio {ratio}");
    let vol: f64 = (0..sys.mesh.n_tets()).map(|t| sys.mesh.tet_volume(t)).sum();
    let equivalent_radius = (3.0 * vol / (4.0 * std::f64::consts::PI)).cbrt();
    let dipole = post::magnetized_ball_b(equivalent_radius, &Point::z(), &Point::new(0.0, 0.0, 4.0));
    let err = (b[0] - dipole).norm() / dipole.norm();
    assert!(err <= 0.02, "{err}");
}

#[test]
fn reversed_loop_negates_the_circulation() {
    let (sys, sol) = solved_torus();
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    let path = circle_loop(&Point::new(1.0, 0.0, 0.0), &Point::y(), 0.5, 96);
    let mut reversed = path.clone();
    reversed.reverse();
    let forward = ampere_loop(&field, &path).unwrap();
    assert_eq!(ampere_loop(&field, &reversed).unwrap(), -forward);
}

#[test]
fn homotopic_loops_agree_and_unlinked_loops_vanish() {
    let (sys, sol) = solved_torus();
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    let a = ampere_loop(&field, &circle_loop(&Point::new(1.0, 0.0, 0.0), &Point::y(), 0.5, 128)).unwrap();
    let b = ampere_loop(&field, &circle_loop(&Point::new(0.0, 1.0, 0.0), &-Point::x(), 0.6, 128)).unwrap();
    assert!((a - b).abs() <= 1e-3 * a.abs(), "{a} vs {b}");

    let far = circle_loop(&Point::new(3.0, 0.0, 0.0), &Point::y(), 0.5, 128);
    let h = field.h(&far).unwrap();
    let scale = h.iter().map(|v| v.norm()).fold(0.0, f64::max) * std::f64::consts::PI;
    let c = ampere_loop(&field, &far).unwrap();
    assert!(c.abs() <= 0.02 * scale, "{c} vs scale {scale}");
}

#[test]
fn short_loops_are_rejected() {
    let (sys, sol) = solved_sphere(2);
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    let path = circle_loop(&Point::zeros(), &Point::z(), 3.0, 32);
    assert!(matches!(ampere_loop(&field, &path), Err(Error::Config(_))));
}

#[test]
fn points_near_or_inside_the_body_are_rejected() {
    let (sys, sol) = solved_sphere(2);
    let field = ExteriorField { surface: &sys.surface, trace: &sol.trace, lambda: &sol.lambda };
    assert!(matches!(field.b(&[Point::zeros()]), Err(Error::InteriorPoint(0))));
    assert!(matches!(field.b(&[Point::new(0.0, 0.0, 1.0 + 1e-9)]), Err(Error::NearField { .. })));
}

#[test]
fn vtk_files_have_consistent_counts() {
    let (sys, sol) = solved_sphere(2);
    let dir = tempfile::tempdir().unwrap();
    let cells = post::interior_b(&sys.mesh, sol.fem_part(&sys));
    let vol = dir.path().join("volume.vtk");
    post::write_volume_vtk(&sys.mesh, &[("B", &cells)], &vol).unwrap();
    let text = std::fs::read_to_string(&vol).unwrap();
    let nt = sys.mesh.n_tets();
    assert!(text.contains(&format!("CELL_DATA {nt}\n")));
    assert!(text.contains("VECTORS B double\n"));
    assert_eq!(text.lines().filter(|l| *l == "10").count(), nt);

    let surf = dir.path().join("surface.vtk");
    let nv = sys.surface.n_vertices();
    let phi = vec![1.0; nv];
    post::write_surface_vtk(&sys.surface, &[("phi", &phi)], &surf).unwrap();
    let text = std::fs::read_to_string(&surf).unwrap();
    assert!(text.contains(&format!("POINT_DATA {nv}\nSCALARS phi double 1\n")));

    post::write_surface_vtk(&sys.surface, &[], &surf).unwrap();
    assert!(!std::fs::read_to_string(&surf).unwrap().contains("POINT_DATA"));

    let short = vec![0.0; nv - 1];
    assert!(matches!(
        post::write_surface_vtk(&sys.surface, &[("phi", &short)], &surf),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn csv_leaves_non_finite_values_empty() {
    let rows = vec![row(1, 0.2), row(2, f64::NAN)];
    let csv = convergence_csv(&rows);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let second: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert_eq!(second.len(), 9);
    assert_eq!(second[5], "");
    assert_eq!(second[7], "");
}

#[test]
fn non_monotone_rows_are_flagged() {
    let mut rows = vec![row(1, 0.2), row(2, 0.1), row(3, 0.15)];
    assert!(!flag_non_monotone(&mut rows));
    assert_eq!(rows[1].warning, "");
    assert_eq!(rows[2].warning, "non-monotone error");
    let mut good = vec![row(1, 0.2), row(2, 0.1)];
    assert!(flag_non_monotone(&mut good));
}

#[test]
fn analytic_ball_field_is_uniform_inside() {
    let m = Point::new(0.0, 0.0, 1.0);
    let inside = post::magnetized_ball_b(1.0, &m, &Point::new(0.1, 0.2, -0.3));
    assert!((inside - m * (2.0 * MU0 / 3.0)).norm() == 0.0);
    let pole = post::magnetized_ball_b(1.0, &m, &Point::new(0.0, 0.0, 1.0 + 1e-12));
    assert!((pole - inside).norm() <= 1e-10 * inside.norm());
}
