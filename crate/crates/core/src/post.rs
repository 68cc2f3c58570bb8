//! Field recovery, error norms, loop integrals and file export.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bem::{evaluate_exterior_h, MU0};
use crate::error::{Error, Result};
use crate::fem::{element_curls, EdgeSpace};
use crate::mesh::{Point, SurfaceMesh, TetMesh};
use crate::quadrature::tet_degree2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRegion {
    Interior,
    Exterior,
}

/// Flux density `b` (tesla) at `location` (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub location: Point,
    pub b: Point,
    pub region: FieldRegion,
}

/// Per-tet constant `B = μ0 curl a` in tesla.
pub fn interior_b(mesh: &TetMesh, a: &[f64]) -> Vec<Point> {
    let space = EdgeSpace::new(mesh);
    element_curls(mesh, &space, a).into_iter().map(|c| c * MU0).collect()
}

/// `‖B‖_{L2}` of a per-tet constant field.
pub fn l2_norm(mesh: &TetMesh, cells: &[Point]) -> f64 {
    cells
        .iter()
        .enumerate()
        .map(|(t, b)| b.norm_squared() * mesh.tet_volume(t))
        .sum::<f64>()
        .sqrt()
}

/// `‖B_h − B_exact‖_{L2}` with the degree-2 tetrahedral rule.
pub fn l2_error(mesh: &TetMesh, cells: &[Point], exact: impl Fn(&Point) -> Point + Sync) -> f64 {
    let (bary, weights) = tet_degree2();
    (0..mesh.n_tets())
        .into_par_iter()
        .map(|t| {
            let p = mesh.tet_points(t);
            let vol = mesh.tet_volume(t);
            bary.iter()
                .zip(&weights)
                .map(|(l, w)| {
                    let x = p[0] * l[0] + p[1] * l[1] + p[2] * l[2] + p[3] * l[3];
                    (cells[t] - exact(&x)).norm_squared() * w * vol
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Volume average of a per-tet constant field over the tets selected by `filter`.
pub fn volume_average(mesh: &TetMesh, cells: &[Point], filter: impl Fn(usize) -> bool) -> Point {
    let (mut sum, mut vol) = (Point::zeros(), 0.0);
    for t in (0..mesh.n_tets()).filter(|&t| filter(t)) {
        sum += cells[t] * mesh.tet_volume(t);
        vol += mesh.tet_volume(t);
    }
    if vol > 0.0 {
        sum / vol
    } else {
        sum
    }
}

/// Largest jump of the normal component of a per-tet field across interior faces,
/// relative to `max |B|`. Zero to rounding for the curl of an edge function.
pub fn normal_flux_jump(mesh: &TetMesh, cells: &[Point]) -> f64 {
    let mut faces: HashMap<[usize; 3], (usize, Point)> = HashMap::new();
    let scale = cells.iter().map(|b| b.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for (t, tet) in mesh.tets.iter().enumerate() {
        for f in crate::mesh::TET_FACES {
            let mut key = [tet[f[0]], tet[f[1]], tet[f[2]]];
            key.sort_unstable();
            let [a, b, c] = key.map(|n| mesh.nodes[n]);
            let area_normal = (b - a).cross(&(c - a)) * 0.5;
            match faces.remove(&key) {
                Some((s, n)) => {
                    let jump = (cells[t] - cells[s]).dot(&n) / n.norm();
                    worst = worst.max(jump.abs() / scale);
                }
                None => {
                    faces.insert(key, (t, area_normal));
                }
            }
        }
    }
    worst
}

/// Exterior field evaluator from the boundary data of a solution.
#[derive(Debug, Clone, Copy)]
pub struct ExteriorField<'a> {
    pub surface: &'a SurfaceMesh,
    pub trace: &'a [f64],
    pub lambda: &'a [f64],
}

impl ExteriorField<'_> {
    /// `H = B/μ0` in A/m.
    pub fn h(&self, points: &[Point]) -> Result<Vec<Point>> {
        evaluate_exterior_h(self.surface, points, self.trace, self.lambda)
    }

    pub fn b(&self, points: &[Point]) -> Result<Vec<Point>> {
        Ok(self.h(points)?.into_iter().map(|h| h * MU0).collect())
    }

    pub fn samples(&self, points: &[Point]) -> Result<Vec<FieldSample>> {
        Ok(points
            .iter()
            .zip(self.b(points)?)
            .map(|(&location, b)| FieldSample {
                location,
                b,
                region: FieldRegion::Exterior,
            })
            .collect())
    }
}

pub const MIN_LOOP_SAMPLES: usize = 64;

/// `n` points on the circle with the given centre, axis and radius, counter-clockwise about the axis.
pub fn circle_loop(center: &Point, axis: &Point, radius: f64, n: usize) -> Vec<Point> {
    let z = axis.normalize();
    let helper = if z.x.abs() < 0.9 { Point::x() } else { Point::y() };
    let u = z.cross(&helper).normalize();
    let v = z.cross(&u);
    (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            center + (u * t.cos() + v * t.sin()) * radius
        })
        .collect()
}

/// Sum whose value is independent of the order of the terms and changes sign exactly with them.
fn symmetric_sum(terms: &[f64]) -> f64 {
    let mut pos: Vec<f64> = terms.iter().copied().filter(|v| *v > 0.0).collect();
    let mut neg: Vec<f64> = terms.iter().filter(|v| **v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    pos.iter().sum::<f64>() - neg.iter().sum::<f64>()
}

/// `∮ H·dl` over a closed polyline (the last point joins the first) by the composite trapezoid rule.
pub fn ampere_loop(field: &ExteriorField<'_>, points: &[Point]) -> Result<f64> {
    let n = points.len();
    if n < MIN_LOOP_SAMPLES {
        return Err(Error::Config(format!(
            "loop has {n} samples; at least {MIN_LOOP_SAMPLES} are required"
        )));
    }
    let h = field.h(points)?;
    let terms: Vec<f64> = (0..n)
        .map(|k| {
            let m = (k + 1) % n;
            0.5 * (h[k] + h[m]).dot(&(points[m] - points[k]))
        })
        .collect();
    Ok(symmetric_sum(&terms))
}

fn vtk_points(out: &mut String, nodes: &[Point]) {
    let _ = writeln!(out, "POINTS {} double", nodes.len());
    for p in nodes {
        let _ = writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z);
    }
}

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension(format!("{what} has {got} values, expected {expected}")));
    }
    Ok(())
}

/// Legacy ASCII VTK of the tet mesh with per-cell vector fields.
pub fn write_volume_vtk(mesh: &TetMesh, cell_vectors: &[(&str, &[Point])], path: impl AsRef<Path>) -> Result<()> {
    for (name, v) in cell_vectors {
        check_len(name, v.len(), mesh.n_tets())?;
    }
    let mut out = String::from("# vtk DataFile Version 3.0\nfembem volume\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    vtk_points(&mut out, &mesh.nodes);
    let _ = writeln!(out, "CELLS {} {}", mesh.n_tets(), 5 * mesh.n_tets());
    for t in &mesh.tets {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", mesh.n_tets());
    for _ in 0..mesh.n_tets() {
        out.push_str("10\n");
    }
    let _ = writeln!(out, "CELL_DATA {}", mesh.n_tets());
    let _ = writeln!(out, "SCALARS region int 1\nLOOKUP_TABLE default");
    for r in &mesh.region {
        let _ = writeln!(out, "{r}");
    }
    for (name, v) in cell_vectors {
        let _ = writeln!(out, "VECTORS {name} double");
        for b in *v {
            let _ = writeln!(out, "{:e} {:e} {:e}", b.x, b.y, b.z);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Legacy ASCII VTK of the boundary surface with per-vertex scalar fields.
pub fn write_surface_vtk(s: &SurfaceMesh, point_scalars: &[(&str, &[f64])], path: impl AsRef<Path>) -> Result<()> {
    for (name, v) in point_scalars {
        check_len(name, v.len(), s.n_vertices())?;
    }
    let mut out = String::from("# vtk DataFile Version 3.0\nfembem surface\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    vtk_points(&mut out, &s.points);
    let _ = writeln!(out, "CELLS {} {}", s.n_triangles(), 4 * s.n_triangles());
    for t in &s.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", s.n_triangles());
    for _ in 0..s.n_triangles() {
        out.push_str("5\n");
    }
    if !point_scalars.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", s.n_vertices());
        for (name, v) in point_scalars {
            let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in *v {
                let _ = writeln!(out, "{x:e}");
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub n_fem: usize,
    pub n_bem: usize,
    pub l2_norm: f64,
    pub l2_error: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub warning: String,
}

pub const CSV_HEADER: &str = "level,h,N_FEM,N_BEM,l2_norm,l2_error,iterations,seconds,warning";

/// Marks every row whose error does not decrease from the previous one; returns whether all decrease.
pub fn flag_non_monotone(rows: &mut [ConvergenceRow]) -> bool {
    let mut monotone = true;
    for k in 1..rows.len() {
        if rows[k].l2_error >= rows[k - 1].l2_error {
            rows[k].warning = "non-monotone error".into();
            monotone = false;
        }
    }
    monotone
}

fn csv_float(v: f64, precision: usize) -> String {
    if v.is_finite() {
        format!("{v:.precision$e}")
    } else {
        String::new()
    }
}

/// CSV text of a convergence table; non-finite values are left empty.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.level,
            csv_float(r.h, 6),
            r.n_fem,
            r.n_bem,
            csv_float(r.l2_norm, 10),
            csv_float(r.l2_error, 10),
            r.iterations,
            if r.seconds.is_finite() { format!("{:.3}", r.seconds) } else { String::new() },
            r.warning
        );
    }
    out
}

/// Analytic `B` of a ball of the given radius at the origin with uniform magnetization `m`.
pub fn magnetized_ball_b(radius: f64, m: &Point, x: &Point) -> Point {
    let r = x.norm();
    if r <= radius {
        return m * (2.0 * MU0 / 3.0);
    }
    let moment = m * (4.0 * std::f64::consts::PI * radius.powi(3) / 3.0);
    let xh = x / r;
    (xh * (3.0 * moment.dot(&xh)) - moment) * (MU0 / (4.0 * std::f64::consts::PI * r.powi(3)))
}

/// Interior field samples at the tet centroids.
pub fn interior_samples(mesh: &TetMesh, cells: &[Point]) -> Vec<FieldSample> {
    (0..mesh.n_tets())
        .map(|t| FieldSample {
            location: mesh.tet_centroid(t),
            b: cells[t],
            region: FieldRegion::Interior,
        })
        .collect()
}
