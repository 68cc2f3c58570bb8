//! Field evaluation in the exterior domain from the boundary data.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::integrals::solid_angle;
use super::MU0;
use crate::error::{Error, Result};
use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::TriangleRule;

/// Euclidean distance from `x` to the closed triangle `p`.
pub fn point_triangle_distance(p: &[Point; 3], x: &Point) -> f64 {
    let (a, b, c) = (p[0], p[1], p[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = x - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = x - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (x - (a + ab * v)).norm();
    }
    let cp = x - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (x - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (x - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (x - (a + ab * v + ac * w)).norm()
}

/// Signed number of times the closed surface winds around `x`: ±1 inside, 0 outside.
pub fn winding_number(s: &SurfaceMesh, x: &Point) -> f64 {
    (0..s.n_triangles())
        .map(|t| solid_angle(&s.triangle_points(t), x))
        .sum()
}

/// Checks that `x` is exterior and far enough from every panel.
pub fn check_exterior(s: &SurfaceMesh, index: usize, x: &Point) -> Result<()> {
    for t in 0..s.n_triangles() {
        let p = s.triangle_points(t);
        let d = point_triangle_distance(&p, x);
        let size = s.diameter(t);
        if d < 0.5 * size {
            return Err(Error::NearField {
                index,
                distance: d,
                size,
            });
        }
    }
    if winding_number(s, x).abs() > 0.5 {
        return Err(Error::InteriorPoint(index));
    }
    Ok(())
}

/// Sub-triangles of `p` refined until each is at least three diameters away from `x`.
fn refine(p: [Point; 3], x: &Point, depth: usize, out: &mut Vec<[Point; 3]>) {
    let c = (p[0] + p[1] + p[2]) / 3.0;
    let diam = (p[0] - p[1]).norm().max((p[1] - p[2]).norm()).max((p[2] - p[0]).norm());
    if depth == 0 || (c - x).norm() >= 3.0 * diam {
        out.push(p);
        return;
    }
    let m01 = (p[0] + p[1]) * 0.5;
    let m12 = (p[1] + p[2]) * 0.5;
    let m20 = (p[2] + p[0]) * 0.5;
    for q in [[p[0], m01, m20], [m01, p[1], m12], [m20, m12, p[2]], [m01, m12, m20]] {
        refine(q, x, depth - 1, out);
    }
}

/// Exterior `H = b = B/μ0` from the Dirichlet trace `u` (edge coefficients) and the Neumann
/// datum `λ` (RT coefficients):
/// `H(x) = −∫ ∇_x U(x − y) × λ(y) dy − ∫ ∇_x U(x − y) curl_Γ u(y) dy`.
pub fn evaluate_exterior_h(
    s: &SurfaceMesh,
    points: &[Point],
    trace: &[f64],
    lambda: &[f64],
) -> Result<Vec<Point>> {
    for (i, x) in points.iter().enumerate() {
        check_exterior(s, i, x)?;
    }
    let rule = TriangleRule::symmetric(5);
    let sigma: Vec<f64> = (0..s.n_triangles())
        .map(|t| {
            (0..3)
                .map(|k| s.triangle_edge_signs[t][k] * trace[s.triangle_edges[t][k]])
                .sum::<f64>()
                / s.areas[t]
        })
        .collect();
    Ok(points
        .par_iter()
        .map(|x| {
            let mut h = Point::zeros();
            let mut subs = Vec::new();
            for t in 0..s.n_triangles() {
                let p = s.triangle_points(t);
                let coef: [f64; 3] = std::array::from_fn(|k| {
                    s.triangle_edge_signs[t][k] * lambda[s.triangle_edges[t][k]] / (2.0 * s.areas[t])
                });
                subs.clear();
                refine(p, x, 6, &mut subs);
                for q in &subs {
                    let area = 0.5 * (q[1] - q[0]).cross(&(q[2] - q[0])).norm();
                    for (st, w) in rule.points.iter().zip(&rule.weights) {
                        let y = q[0] + (q[1] - q[0]) * st[0] + (q[2] - q[0]) * st[1];
                        let lam = (0..3).fold(Point::zeros(), |acc, k| acc + (y - p[k]) * coef[k]);
                        let d = x - y;
                        let r = d.norm();
                        let grad = -d / (4.0 * PI * r * r * r);
                        h -= (grad.cross(&lam) + grad * sigma[t]) * (w * area);
                    }
                }
            }
            h
        })
        .collect())
}

/// Exterior flux density `B = μ0 H` in tesla.
pub fn evaluate_exterior_b(
    s: &SurfaceMesh,
    points: &[Point],
    trace: &[f64],
    lambda: &[f64],
) -> Result<Vec<Point>> {
    Ok(evaluate_exterior_h(s, points, trace, lambda)?
        .into_iter()
        .map(|h| h * MU0)
        .collect())
}
