//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use fembem::coupling::{CoupledSystem, SystemOptions};
use fembem::mesh::{generate, Material, Point, SurfaceMesh, TetMesh};
use fembem::quadrature::TriangleRule;

pub fn magnetized_ball(n: usize) -> TetMesh {
    let mut m = generate::ball(n, 1.0, Point::zeros());
    m.set_material(1, Material { mu_r: 1.0, magnetization: [0.0, 0.0, 1.0] });
    m
}

pub fn sphere_system(n: usize) -> CoupledSystem {
    CoupledSystem::assemble(magnetized_ball(n), None, SystemOptions::default()).unwrap()
}

pub fn sphere_surface(n: usize) -> SurfaceMesh {
    SurfaceMesh::extract(&generate::ball(n, 1.0, Point::zeros())).unwrap()
}

/// Value at `x` of the RT field with coefficients `c` on triangle `t`.
pub fn rt_value(s: &SurfaceMesh, t: usize, c: &[f64], x: &Point) -> Point {
    let p = s.triangle_points(t);
    (0..3).fold(Point::zeros(), |acc, k| {
        acc + (x - p[k]) * (s.triangle_edge_signs[t][k] * c[s.triangle_edges[t][k]] / (2.0 * s.areas[t]))
    })
}

fn subdivide(p: [Point; 3]) -> [[Point; 3]; 4] {
    let m01 = (p[0] + p[1]) * 0.5;
    let m12 = (p[1] + p[2]) * 0.5;
    let m20 = (p[2] + p[0]) * 0.5;
    [[p[0], m01, m20], [m01, p[1], m12], [m20, m12, p[2]], [m01, m12, m20]]
}

/// Quadrature nodes and weights on `p`, refined towards `x` until every piece is at least
/// four of its diameters away.
pub fn adaptive_nodes(p: [Point; 3], x: &Point, rule: &TriangleRule, out: &mut Vec<(Point, f64)>) {
    let c = (p[0] + p[1] + p[2]) / 3.0;
    let diam = (p[0] - p[1]).norm().max((p[1] - p[2]).norm()).max((p[2] - p[0]).norm());
    if (c - x).norm() < 4.0 * diam && diam > 1e-7 {
        for q in subdivide(p) {
            adaptive_nodes(q, x, rule, out);
        }
        return;
    }
    let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
    for (st, w) in rule.points.iter().zip(&rule.weights) {
        out.push((p[0] + (p[1] - p[0]) * st[0] + (p[2] - p[0]) * st[1], w * area));
    }
}

/// Uniformly subdivided quadrature on `p`.
pub fn uniform_nodes(p: [Point; 3], depth: usize, rule: &TriangleRule, out: &mut Vec<(Point, f64)>) {
    if depth > 0 {
        for q in subdivide(p) {
            uniform_nodes(q, depth - 1, rule, out);
        }
        return;
    }
    let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
    for (st, w) in rule.points.iter().zip(&rule.weights) {
        out.push((p[0] + (p[1] - p[0]) * st[0] + (p[2] - p[0]) * st[1], w * area));
    }
}

/// Potential kinds of an RT density `m`, evaluated off the surface.
#[derive(Clone, Copy)]
pub enum Potential {
    /// `∫ U m`.
    Single,
    /// `∫ ∇ₓU × m`.
    Curl,
    /// `∫ ∇ₓ∇ₓU m`, the curl of [`Potential::Curl`] away from the surface.
    CurlCurl,
}

pub fn potential(s: &SurfaceMesh, m: &[f64], x: &Point, kind: Potential) -> Point {
    let rule = TriangleRule::symmetric(5);
    let mut nodes = Vec::new();
    let mut acc = Point::zeros();
    for t in 0..s.n_triangles() {
        nodes.clear();
        adaptive_nodes(s.triangle_points(t), x, &rule, &mut nodes);
        for (y, w) in &nodes {
            let mv = rt_value(s, t, m, y);
            let d = x - y;
            let r = d.norm();
            let v = match kind {
                Potential::Single => mv / (4.0 * PI * r),
                Potential::Curl => (-d / (4.0 * PI * r.powi(3))).cross(&mv),
                Potential::CurlCurl => {
                    (d * (3.0 * d.dot(&mv) / r.powi(5)) - mv / r.powi(3)) / (4.0 * PI)
                }
            };
            acc += v * *w;
        }
    }
    acc
}

/// `∫_Γ test(t, x) · f(x ± ε n)` for every basis function, with `f` extrapolated to `ε → 0`
/// from `ε ∈ {δ, δ/2, δ/4}` and the outer rule extrapolated over two consecutive uniform
/// subdivision depths starting at `depth`.
/// `δ` is capped by the distance to the nearest edge. `test` returns the three local basis
/// values and their dofs.
pub fn extrapolated_pairing(
    s: &SurfaceMesh,
    n_dofs: usize,
    side: f64,
    delta: f64,
    depth: usize,
    field: impl Fn(&Point, &Point) -> Point + Sync,
    test: impl Fn(usize, &Point) -> [(usize, Point); 3] + Sync,
) -> Vec<f64> {
    let coarse = pairing_at_depth(s, n_dofs, side, delta, depth, &field, &test);
    let fine = pairing_at_depth(s, n_dofs, side, delta, depth + 1, &field, &test);
    coarse.iter().zip(&fine).map(|(c, f)| 2.0 * f - c).collect()
}

fn pairing_at_depth(
    s: &SurfaceMesh,
    n_dofs: usize,
    side: f64,
    delta: f64,
    depth: usize,
    field: &(impl Fn(&Point, &Point) -> Point + Sync),
    test: &(impl Fn(usize, &Point) -> [(usize, Point); 3] + Sync),
) -> Vec<f64> {
    use rayon::prelude::*;
    let rule = TriangleRule::symmetric(5);
    let per_tri: Vec<Vec<(usize, f64)>> = (0..s.n_triangles())
        .into_par_iter()
        .map(|t| {
            let n = s.normals[t];
            let p = s.triangle_points(t);
            let mut nodes = Vec::new();
            uniform_nodes(s.triangle_points(t), depth, &rule, &mut nodes);
            let mut out = Vec::new();
            for (x, w) in &nodes {
                let delta = delta.min(edge_distance(&p, x) / 8.0);
                let f: Vec<Point> = [delta, delta / 2.0, delta / 4.0]
                    .iter()
                    .map(|e| field(&(x + n * (side * e)), &n))
                    .collect();
                let f0 = (f[2] * 8.0 - f[1] * 6.0 + f[0]) / 3.0;
                for (dof, b) in test(t, x) {
                    out.push((dof, w * f0.dot(&b)));
                }
            }
            out
        })
        .collect();
    let mut v = vec![0.0; n_dofs];
    for list in per_tri {
        for (d, x) in list {
            v[d] += x;
        }
    }
    v
}

/// Distance from `x` in the plane of `p` to its nearest edge.
pub fn edge_distance(p: &[Point; 3], x: &Point) -> f64 {
    (0..3)
        .map(|k| {
            let (a, b) = (p[k], p[(k + 1) % 3]);
            let e = b - a;
            let t = ((x - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            (x - (a + e * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// RT test basis on triangle `t`.
pub fn rt_test(s: &SurfaceMesh) -> impl Fn(usize, &Point) -> [(usize, Point); 3] + Sync + '_ {
    move |t, x| {
        let p = s.triangle_points(t);
        std::array::from_fn(|k| {
            (
                s.triangle_edges[t][k],
                (x - p[k]) * (s.triangle_edge_signs[t][k] / (2.0 * s.areas[t])),
            )
        })
    }
}

/// Trace test basis `n × φ` on triangle `t`.
pub fn trace_test(s: &SurfaceMesh) -> impl Fn(usize, &Point) -> [(usize, Point); 3] + Sync + '_ {
    let rt = rt_test(s);
    move |t, x| rt(t, x).map(|(d, v)| (d, s.normals[t].cross(&v)))
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Surface edge coefficients `∫_e A · t` (low to high vertex) of a linear field.
pub fn edge_coefficients(s: &SurfaceMesh, a: impl Fn(&Point) -> Point) -> Vec<f64> {
    s.edges
        .iter()
        .map(|&[i, j]| {
            let (p, q) = (s.points[i], s.points[j]);
            a(&((p + q) * 0.5)).dot(&(q - p))
        })
        .collect()
}


/// Smooth trace data: `A(x) = (−y, x, 0)/2 + a0` with unit curl along z.
pub fn smooth_trace(s: &SurfaceMesh) -> Vec<f64> {
    edge_coefficients(s, |x| Point::new(-x.y, x.x, 0.0) * 0.5 + Point::new(0.2, -0.1, 0.3))
}

/// Oracle for the single layer: `∫ φ_ℓ · (∫ U λ)` for every RT function.
pub fn single_layer_oracle(s: &SurfaceMesh, lam: &[f64], depth: usize) -> Vec<f64> {
    extrapolated_pairing(s, s.n_edges(), 1.0, 1e-2, depth, |x, _| potential(s, lam, x, Potential::Single), rt_test(s))
}

/// Oracle for the double layer on one side (`+1` exterior): `∫ φ_ℓ · curl ∫ U (n × w)`.
pub fn double_layer_oracle(s: &SurfaceMesh, u: &[f64], side: f64, depth: usize) -> Vec<f64> {
    // n × (n × φ) = −φ for tangential φ
    let m: Vec<f64> = u.iter().map(|v| -v).collect();
    extrapolated_pairing(s, s.n_edges(), side, 1e-2, depth, |x, _| potential(s, &m, x, Potential::Curl), rt_test(s))
}

/// Oracle for the hypersingular operator: `∫ (n × φ_e) · (curl ψ × n)` with `ψ = curl ∫ U (n × w)`.
pub fn hypersingular_oracle(s: &SurfaceMesh, u: &[f64], depth: usize) -> Vec<f64> {
    let m: Vec<f64> = u.iter().map(|v| -v).collect();
    extrapolated_pairing(
        s,
        s.n_edges(),
        1.0,
        1e-2,
        depth,
        |x, n| potential(s, &m, x, Potential::CurlCurl).cross(n),
        trace_test(s),
    )
}

pub fn unit_coil() -> fembem::fem::LoopCoil {
    fembem::fem::LoopCoil {
        center: Point::zeros(),
        axis: Point::z(),
        inner_radius: 0.75,
        outer_radius: 1.25,
        height: 0.5,
        current: 1.0,
    }
}

/// Square torus (region 1, μr = 1) carrying the unit coil current, with its sheet cycle.
pub fn torus_system(n_cross: usize, n_around: usize) -> (CoupledSystem, Vec<usize>) {
    let mut mesh = generate::square_torus(1.0, 0.25, n_cross, n_around);
    mesh.set_material(1, Material { mu_r: 1.0, magnetization: [0.0; 3] });
    let coil = unit_coil();
    let j = move |x: &Point| coil.density(x);
    let sys = CoupledSystem::assemble(mesh, Some(&j), SystemOptions::default()).unwrap();
    (sys, generate::square_torus_cycle(n_cross, n_around))
}

/// The current-carrying torus around a ball core of radius 0.5 (region 2).
pub fn torus_core_system(n_cross: usize, n_around: usize, n_ball: usize, mu_core: f64) -> (CoupledSystem, Vec<usize>) {
    let torus = generate::square_torus(1.0, 0.25, n_cross, n_around);
    let nt = torus.n_tets();
    let merged = generate::merge(&[torus, generate::ball(n_ball, 0.5, Point::zeros())]);
    let region = (0..merged.n_tets()).map(|t| if t < nt { 1 } else { 2 }).collect();
    let mut mesh = TetMesh::new(merged.nodes, merged.tets, region).unwrap();
    mesh.set_material(1, Material { mu_r: 1.0, magnetization: [0.0; 3] });
    mesh.set_material(2, Material { mu_r: mu_core, magnetization: [0.0; 3] });
    let coil = unit_coil();
    let j = move |x: &Point| coil.density(x);
    let sys = CoupledSystem::assemble(mesh, Some(&j), SystemOptions::default()).unwrap();
    (sys, generate::square_torus_cycle(n_cross, n_around))
}

/// Two balls of radius 0.5 at z = ∓0.6: region 1 magnetized along z, region 2 iron.
pub fn two_spheres_system(n: usize) -> CoupledSystem {
    let a = generate::ball(n, 0.5, Point::new(0.0, 0.0, -0.6));
    let na = a.n_tets();
    let merged = generate::merge(&[a, generate::ball(n, 0.5, Point::new(0.0, 0.0, 0.6))]);
    let region = (0..merged.n_tets()).map(|t| if t < na { 1 } else { 2 }).collect();
    let mut mesh = TetMesh::new(merged.nodes, merged.tets, region).unwrap();
    mesh.set_material(1, Material { mu_r: 1.0, magnetization: [0.0, 0.0, 1.0] });
    mesh.set_material(2, Material { mu_r: 100.0, magnetization: [0.0; 3] });
    CoupledSystem::assemble(mesh, None, SystemOptions::default()).unwrap()
}

/// `max |S − Sᵀ| / max |S|` of a dense matrix.
pub fn asymmetry(m: &nalgebra::DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax() / m.amax()
}

/// Entries of the sparse product `a · b`, exactly as accumulated in floating point.
pub fn sparse_product_max(a: &fembem::sparse::CsrMatrix, b: &fembem::sparse::CsrMatrix) -> f64 {
    let mut worst = 0.0f64;
    let mut acc = std::collections::HashMap::new();
    for r in 0..a.nrows {
        acc.clear();
        let (ia, va) = a.row(r);
        for (&k, &x) in ia.iter().zip(va) {
            let (ib, vb) = b.row(k);
            for (&c, &y) in ib.iter().zip(vb) {
                *acc.entry(c).or_insert(0.0) += x * y;
            }
        }
        worst = acc.values().fold(worst, |w: f64, v: &f64| w.max(v.abs()));
    }
    worst
}
