//! Structured tetrahedral fixtures: cubes, balls and square-section tori.

use std::f64::consts::PI;

use nalgebra::Matrix3;

use super::{Point, TetMesh};

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Six Kuhn tets of a cell whose corner `(a, b, c)` maps to `node(a, b, c)`, offsets in {0,1}.
fn kuhn_cell(node: impl Fn(usize, usize, usize) -> usize) -> [[usize; 4]; 6] {
    let mut out = [[0; 4]; 6];
    for (t, perm) in PERMUTATIONS.iter().enumerate() {
        let mut d = [0usize; 3];
        out[t][0] = node(0, 0, 0);
        for (s, &axis) in perm.iter().enumerate() {
            d[axis] = 1;
            out[t][s + 1] = node(d[0], d[1], d[2]);
        }
    }
    out
}

fn build(nodes: Vec<Point>, tets: Vec<[usize; 4]>, region: i64) -> TetMesh {
    let n = tets.len();
    TetMesh::new(nodes, tets, vec![region; n]).expect("structured fixture is valid")
}

/// The tet with vertices at the origin and the three unit points.
pub fn reference_tet() -> TetMesh {
    let nodes = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
    ];
    build(nodes, vec![[0, 1, 2, 3]], 1)
}

/// Two tets sharing the face (1,2,3); edge (0,4) does not exist, all others lie on the boundary.
pub fn two_tets() -> TetMesh {
    let nodes = vec![
        Point::new(0.0, 0.0, 0.0),
        Point::new(1.0, 0.0, 0.0),
        Point::new(0.0, 1.0, 0.0),
        Point::new(0.0, 0.0, 1.0),
        Point::new(1.0, 1.0, 1.0),
    ];
    build(nodes, vec![[0, 1, 2, 3], [4, 1, 2, 3]], 1)
}

fn grid(n: usize, map: impl Fn(f64, f64, f64) -> Point) -> (Vec<Point>, Vec<[usize; 4]>) {
    let m = n + 1;
    let idx = |i: usize, j: usize, k: usize| (i * m + j) * m + k;
    let mut nodes = Vec::with_capacity(m * m * m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let s = |a: usize| a as f64 / n as f64;
                nodes.push(map(s(i), s(j), s(k)));
            }
        }
    }
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                tets.extend(kuhn_cell(|a, b, c| idx(i + a, j + b, k + c)));
            }
        }
    }
    (nodes, tets)
}

/// Axis-aligned cube of edge `size` with corner `origin`, `n` cells per side.
pub fn kuhn_cube(n: usize, origin: Point, size: f64) -> TetMesh {
    let (nodes, tets) = grid(n, |x, y, z| origin + Point::new(x, y, z) * size);
    build(nodes, tets, 1)
}

/// Ball obtained by an equiangular map of a Kuhn-triangulated cube with `n` cells per side.
pub fn ball(n: usize, radius: f64, center: Point) -> TetMesh {
    let (nodes, tets) = grid(n, |x, y, z| {
        let p = Point::new(2.0 * x - 1.0, 2.0 * y - 1.0, 2.0 * z - 1.0);
        let inf = p.amax();
        if inf == 0.0 {
            return center;
        }
        let q = p.map(|c| (PI * c / 4.0).tan());
        center + q * (radius * inf / q.norm())
    });
    build(nodes, tets, 1)
}

/// Solid torus with square cross-section `[major − half, major + half] × [−half, half]`
/// revolved about the z axis; `n_cross` cells per side and `n_around` sectors.
pub fn square_torus(major: f64, half: f64, n_cross: usize, n_around: usize) -> TetMesh {
    let m = n_cross + 1;
    let idx = |i: usize, j: usize, k: usize| (k % n_around) * m * m + i * m + j;
    let mut nodes = Vec::with_capacity(n_around * m * m);
    for k in 0..n_around {
        let th = 2.0 * PI * k as f64 / n_around as f64;
        for i in 0..m {
            for j in 0..m {
                let r = major - half + 2.0 * half * i as f64 / n_cross as f64;
                let z = -half + 2.0 * half * j as f64 / n_cross as f64;
                nodes.push(Point::new(r * th.cos(), r * th.sin(), z));
            }
        }
    }
    let mut tets = Vec::new();
    for k in 0..n_around {
        for i in 0..n_cross {
            for j in 0..n_cross {
                tets.extend(kuhn_cell(|a, b, c| idx(i + a, j + b, k + c)));
            }
        }
    }
    build(nodes, tets, 1)
}

/// Toroidal cycle of boundary nodes of [`square_torus`] on its outer equator.
pub fn square_torus_cycle(n_cross: usize, n_around: usize) -> Vec<usize> {
    let m = n_cross + 1;
    (0..n_around).map(|k| k * m * m + n_cross * m + n_cross / 2).collect()
}

/// Concatenates meshes; region tags and materials are kept, components renumbered.
pub fn merge(parts: &[TetMesh]) -> TetMesh {
    let mut nodes = Vec::new();
    let mut tets = Vec::new();
    let mut region = Vec::new();
    let mut current = Vec::new();
    let mut any_current = false;
    let mut materials = std::collections::BTreeMap::new();
    for p in parts {
        let off = nodes.len();
        nodes.extend_from_slice(&p.nodes);
        tets.extend(p.tets.iter().map(|t| t.map(|n| n + off)));
        region.extend_from_slice(&p.region);
        match &p.current_density {
            Some(j) => {
                any_current = true;
                current.extend_from_slice(j);
            }
            None => current.extend(std::iter::repeat_n(Point::zeros(), p.n_tets())),
        }
        for (k, v) in &p.materials {
            materials.entry(*k).or_insert(*v);
        }
    }
    let mut m = TetMesh::new(nodes, tets, region).expect("merged parts are valid");
    m.materials = materials;
    if any_current {
        m.current_density = Some(current);
    }
    m
}

/// Copy of `mesh` moved by `x ↦ rotation·x + translation`; vector data rotate along.
pub fn transformed(mesh: &TetMesh, rotation: &Matrix3<f64>, translation: &Point) -> TetMesh {
    let nodes = mesh.nodes.iter().map(|p| rotation * p + translation).collect();
    let mut m = TetMesh::new(nodes, mesh.tets.clone(), mesh.region.clone())
        .expect("rigid motion keeps tets valid");
    m.materials = mesh.materials.clone();
    m.current_density = mesh
        .current_density
        .as_ref()
        .map(|j| j.iter().map(|v| rotation * v).collect());
    m
}

/// Rotation by `angle` about the z axis.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `angle` about a unit `axis`.
pub fn rotation_axis(axis: &Point, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}
