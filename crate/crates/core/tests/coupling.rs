mod common;

use common::*;
use fembem::bem::{self, BemOptions};
use fembem::coupling::{
    apply_motion, assemble_sector_block, augment_system, build_current_sheet, circulant_matvec, dual_circulation,
    periodic_reduce, CoupledSystem, RigidMotion, SystemOptions,
};
use fembem::mesh::{generate, Material, Point, SurfaceMesh};
use fembem::post;
use fembem::solver::{build_preconditioner, minres, solve_augmented, solve_coupled, Operator, SolverConfig};
use fembem::sparse::{dense_matvec, dot};
use fembem::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn apply(op: &dyn Operator, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; op.dim()];
    op.apply(x, &mut y);
    y
}

/// Poloidal boundary ring of cross-section 0 of the square torus, as volume node ids.
fn poloidal_ring(n: usize) -> Vec<usize> {
    let m = n + 1;
    let mut ij: Vec<(usize, usize)> = (0..=n).map(|i| (i, 0)).collect();
    ij.extend((1..=n).map(|j| (n, j)));
    ij.extend((0..n).rev().map(|i| (i, n)));
    ij.extend((1..n).rev().map(|j| (0, j)));
    ij.into_iter().map(|(i, j)| i * m + j).collect()
}

#[test]
fn single_tet_system_has_edges_plus_vertices() {
    let mut m = generate::reference_tet();
    m.set_material(1, Material { mu_r: 1.0, magnetization: [0.0, 0.0, 1.0] });
    let sys = CoupledSystem::assemble(m, None, SystemOptions::default()).unwrap();
    assert_eq!((sys.n_fem(), sys.n_bem(), sys.dim()), (6, 4, 10));
    assert!(asymmetry(&sys.to_dense()) <= 1e-12);
}

#[test]
fn matvec_matches_dense_matrix() {
    let sys = sphere_system(2);
    let x = random(sys.dim(), 3);
    let y = apply(&sys, &x);
    let dense = dense_matvec(&sys.to_dense(), &x);
    assert!(rel_diff(&y, &dense) <= 1e-13);
}

#[test]
fn potential_block_is_negative_semidefinite() {
    let sys = sphere_system(3);
    for seed in 0..5 {
        let mut x = vec![0.0; sys.dim()];
        x[sys.n_fem()..].copy_from_slice(&random(sys.n_bem(), seed));
        assert!(dot(&x, &apply(&sys, &x)) <= 0.0);
    }
}

#[test]
fn torus_sheets_have_unit_circulation_and_no_divergence() {
    let (sys, toroidal) = torus_system(2, 12);
    let s = &sys.surface;
    let poloidal = poloidal_ring(2);
    let tor = build_current_sheet(s, &toroidal).unwrap();
    let pol = build_current_sheet(s, &poloidal).unwrap();
    let d = bem::surface_divergence(s);
    for sheet in [&tor, &pol] {
        assert!(d.matvec(&sheet.eta).iter().all(|&v| v == 0.0));
    }
    let verts = |nodes: &[usize]| -> Vec<usize> { nodes.iter().map(|&n| s.vertex_of_node(n).unwrap()).collect() };
    assert_eq!(dual_circulation(s, &tor.eta, &verts(&poloidal)).unwrap().abs(), 1.0);
    assert_eq!(dual_circulation(s, &pol.eta, &verts(&toroidal)).unwrap().abs(), 1.0);

    // independent modulo surface curls
    let g = bem::assemble_topological_gradient(s).to_dense();
    let q = g.clone().svd(true, false).u.unwrap();
    let rank_g = g.clone().svd(false, false).singular_values.iter().filter(|v| **v > 1e-10).count();
    let project = |eta: &[f64]| {
        let e = DVector::from_column_slice(eta);
        let basis = q.columns(0, rank_g);
        &e - &basis * (basis.transpose() * &e)
    };
    let (a, b) = (project(&tor.eta), project(&pol.eta));
    let gram = DMatrix::from_row_slice(2, 2, &[a.dot(&a), a.dot(&b), b.dot(&a), b.dot(&b)]);
    let eig = gram.symmetric_eigen().eigenvalues;
    assert!(eig.min() > 1e-8 * eig.max(), "{eig:?}");

    let aug = augment_system(sys.clone(), vec![tor, pol]).unwrap();
    let fhf: DMatrix<f64> = {
        let f = DMatrix::from_columns(&aug.f.iter().map(|c| DVector::from_column_slice(c)).collect::<Vec<_>>());
        &f * aug.h.clone().try_inverse().unwrap() * f.transpose()
    };
    let eig = fhf.symmetric_eigen().eigenvalues;
    let top = eig.amax();
    assert_eq!(eig.iter().filter(|v| v.abs() > 1e-10 * top).count(), 2);
    assert!(asymmetry(&aug.to_dense()) <= 1e-12);
}

#[test]
fn sphere_cycles_are_rejected_as_trivial() {
    let m = generate::ball(2, 1.0, Point::zeros());
    let s = SurfaceMesh::extract(&m).unwrap();
    // equator of the cube-sphere: nodes with z index 1 on the outer shell
    let n = 2;
    let mm = n + 1;
    let idx = |i: usize, j: usize, k: usize| (i * mm + j) * mm + k;
    let ring = vec![idx(0, 0, 1), idx(1, 0, 1), idx(2, 0, 1), idx(2, 1, 1), idx(2, 2, 1), idx(1, 2, 1), idx(0, 2, 1), idx(0, 1, 1)];
    assert!(matches!(build_current_sheet(&s, &ring), Err(Error::TrivialHomology)));
}

#[test]
fn no_sheets_leave_the_system_unchanged() {
    let sys = sphere_system(2);
    let aug = augment_system(sys.clone(), Vec::new()).unwrap();
    let x = random(sys.dim(), 4);
    assert_eq!(apply(&aug, &x), apply(&sys, &x));
    assert_eq!(apply(&aug.schur(), &x), apply(&sys, &x));
}

/// `diag(P, |H|⁻¹)` for the extended system.
struct Extended<'a> {
    p: &'a dyn Operator,
    h_inv: Vec<f64>,
}

impl Operator for Extended<'_> {
    fn dim(&self) -> usize {
        self.p.dim() + self.h_inv.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.p.dim();
        self.p.apply(&x[..n], &mut y[..n]);
        for (k, h) in self.h_inv.iter().enumerate() {
            y[n + k] = h * x[n + k];
        }
    }
}

#[test]
fn extended_and_schur_solves_agree() {
    let (sys, cycle) = torus_system(2, 16);
    let sheet = build_current_sheet(&sys.surface, &cycle).unwrap();
    let p = build_preconditioner(&sys);
    let aug = augment_system(sys.clone(), vec![sheet]).unwrap();
    let cfg = SolverConfig { tol: 1e-10, ..Default::default() };
    let schur = solve_augmented(&aug, &p, &cfg, None).unwrap();
    let pe = Extended { p: &p, h_inv: vec![1.0 / aug.h[(0, 0)].abs()] };
    let (x, _) = minres(&aug, &pe, &aug.rhs(), &cfg, None).unwrap();
    let n = sys.n_fem();
    let b1 = post::interior_b(&sys.mesh, &schur.x[..n]);
    let b2 = post::interior_b(&sys.mesh, &x[..n]);
    let flat = |b: &[Point]| b.iter().flat_map(|v| v.iter().copied()).collect::<Vec<_>>();
    assert!(rel_diff(&flat(&b2), &flat(&b1)) <= 1e-8);
    assert!((x[sys.dim()] - schur.alpha[0]).abs() <= 1e-8 * schur.alpha[0].abs());
}

#[test]
fn identity_motion_is_bit_identical() {
    let sys = two_spheres_system(2);
    let moved = apply_motion(&sys, &RigidMotion::translation(1, Point::zeros())).unwrap();
    assert_eq!(moved.to_dense(), sys.to_dense());
    let p = build_preconditioner(&sys);
    let cfg = SolverConfig::default();
    let a = solve_coupled(&sys, &p, &cfg, None).unwrap();
    let b = solve_coupled(&moved, &build_preconditioner(&moved), &cfg, None).unwrap();
    assert_eq!(a.x, b.x);
}

#[test]
fn translated_component_matches_full_reassembly() {
    let sys = two_spheres_system(2);
    let moved = apply_motion(&sys, &RigidMotion::translation(1, Point::new(0.0, 0.0, 0.1))).unwrap();
    let full = CoupledSystem::assemble(moved.mesh.as_ref().clone(), None, sys.options).unwrap();
    let (dm, df) = (moved.to_dense(), full.to_dense());
    assert!((&dm - &df).amax() <= 1e-12 * df.amax());
}

#[test]
fn rotation_about_own_centre_keeps_the_self_block() {
    let sys = two_spheres_system(2);
    let r = generate::rotation_axis(&Point::new(1.0, 2.0, -0.5), 0.7);
    let c = Point::new(0.0, 0.0, 0.6);
    let moved = apply_motion(&sys, &RigidMotion::new(1, r, c - r * c).unwrap()).unwrap();
    let full = CoupledSystem::assemble(moved.mesh.as_ref().clone(), None, sys.options).unwrap();
    let (a, b) = (sys.block(1, 1), full.block(1, 1));
    for (x, y) in [(&a.v0, &b.v0), (&a.kl, &b.kl), (&a.w, &b.w)] {
        assert!((x - y).amax() <= 1e-10 * x.amax());
    }
}

#[test]
fn overlapping_motion_is_rejected() {
    let sys = two_spheres_system(2);
    let err = apply_motion(&sys, &RigidMotion::translation(1, Point::new(0.0, 0.0, -0.5))).unwrap_err();
    assert!(matches!(err, Error::Contact { moved: 1, other: 0 }));
}

#[test]
fn sector_arrangement_is_block_circulant() {
    let n = 6;
    let axis = Point::z();
    let master_mesh = generate::ball(2, 0.3, Point::new(1.0, 0.0, 0.0));
    let master = SurfaceMesh::extract(&master_mesh).unwrap();
    let copies: Vec<_> = (0..n)
        .map(|k| generate::transformed(&master_mesh, &generate::rotation_axis(&axis, 2.0 * std::f64::consts::PI * k as f64 / n as f64), &Point::zeros()))
        .collect();
    let all = SurfaceMesh::extract(&generate::merge(&copies)).unwrap();
    let opts = BemOptions::default();
    let full = bem::assemble_single_layer(&all, &opts);
    let blocks: Vec<DMatrix<f64>> = (0..n).map(|j| assemble_sector_block(&master, n, 0, j, &axis, &opts)).collect();
    let ne = master.n_edges();
    assert!((full.view((0, 0), (ne, n * ne)) - DMatrix::from_fn(ne, n * ne, |r, c| blocks[c / ne][(r, c % ne)])).amax() <= 1e-12 * full.amax());
    let x = random(n * ne, 5);
    let y = circulant_matvec(&blocks, &x).unwrap();
    assert!(rel_diff(&y, &dense_matvec(&full, &x)) <= 1e-12);
    let periodic: Vec<f64> = x[..ne].iter().cycle().take(n * ne).copied().collect();
    let yp = circulant_matvec(&blocks, &periodic).unwrap();
    let reduced = periodic_reduce(&blocks, &x[..ne]).unwrap();
    for k in 0..n {
        assert!(rel_diff(&yp[k * ne..(k + 1) * ne], &reduced) <= 1e-13);
    }
}

#[test]
fn trivial_circulants() {
    let a = DMatrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 - 4.0);
    let x = random(3, 6);
    assert_eq!(circulant_matvec(&[a.clone()], &x).unwrap(), dense_matvec(&a, &x));
    let id = DMatrix::identity(3, 3);
    let y = periodic_reduce(&[id.clone(), id], &x).unwrap();
    assert_eq!(y, x.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    assert!(matches!(circulant_matvec(&[a], &x[..2]), Err(Error::Dimension(_))));
}
