//! Rigid motion of one component with partial reassembly of the boundary blocks.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{assemble_pair_block, CoupledSystem};
use crate::bem::Rules;
use crate::error::{Error, Result};
use crate::mesh::{Point, SurfaceMesh};

/// `x ↦ rotation · x + translation` applied to one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub component: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Point,
}

impl RigidMotion {
    pub fn new(component: usize, rotation: Matrix3<f64>, translation: Point) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if orth > 1e-12 {
            return Err(Error::InvalidMotion(format!("rotation is not orthogonal (|RᵀR − I| = {orth:.2e})")));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMotion("rotation has determinant −1".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMotion("translation is not finite".into()));
        }
        Ok(Self {
            component,
            rotation,
            translation,
        })
    }

    pub fn translation(component: usize, t: Point) -> Self {
        Self {
            component,
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Point::zeros()
    }
}

fn segment_hits_triangle(p: &Point, q: &Point, t: &[Point; 3]) -> bool {
    let d = q - p;
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let h = d.cross(&e2);
    let a = e1.dot(&h);
    let scale = e1.norm() * e2.norm() * d.norm();
    if a.abs() <= 1e-14 * scale {
        return false;
    }
    let f = 1.0 / a;
    let s = p - t[0];
    let u = f * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let qv = s.cross(&e1);
    let v = f * d.dot(&qv);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let w = f * e2.dot(&qv);
    (0.0..=1.0).contains(&w)
}

fn triangles_intersect(a: &[Point; 3], b: &[Point; 3]) -> bool {
    (0..3).any(|k| segment_hits_triangle(&a[k], &a[(k + 1) % 3], b))
        || (0..3).any(|k| segment_hits_triangle(&b[k], &b[(k + 1) % 3], a))
}

fn bbox(pts: impl Iterator<Item = Point>) -> (Point, Point) {
    pts.fold(
        (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(&p), hi.sup(&p)),
    )
}

fn overlap(a: &(Point, Point), b: &(Point, Point)) -> bool {
    (0..3).all(|d| a.0[d] <= b.1[d] && b.0[d] <= a.1[d])
}

fn component_winding(s: &SurfaceMesh, c: usize, x: &Point) -> f64 {
    (s.triangle_offsets[c]..s.triangle_offsets[c + 1])
        .map(|t| crate::bem::integrals::solid_angle(&s.triangle_points(t), x))
        .sum()
}

/// Fails if component `k` intersects or is nested inside another component.
pub fn check_contact(s: &SurfaceMesh, k: usize) -> Result<()> {
    let tri_box = |t: usize| bbox(s.triangle_points(t).into_iter());
    let comp_box = |c: usize| bbox((s.vertex_offsets[c]..s.vertex_offsets[c + 1]).map(|v| s.points[v]));
    let bk = comp_box(k);
    for c in (0..s.n_components).filter(|&c| c != k) {
        let bc = comp_box(c);
        if !overlap(&bk, &bc) {
            continue;
        }
        let contact = Error::Contact { moved: k, other: c };
        let other: Vec<usize> = (s.triangle_offsets[c]..s.triangle_offsets[c + 1])
            .filter(|&t| overlap(&tri_box(t), &bk))
            .collect();
        for tk in s.triangle_offsets[k]..s.triangle_offsets[k + 1] {
            let b1 = tri_box(tk);
            if !overlap(&b1, &bc) {
                continue;
            }
            let pk = s.triangle_points(tk);
            for &tc in &other {
                if overlap(&b1, &tri_box(tc)) && triangles_intersect(&pk, &s.triangle_points(tc)) {
                    return Err(contact);
                }
            }
        }
        let vk = s.points[s.vertex_offsets[k]];
        let vc = s.points[s.vertex_offsets[c]];
        if component_winding(s, c, &vk).abs() > 0.5 || component_winding(s, k, &vc).abs() > 0.5 {
            return Err(contact);
        }
    }
    Ok(())
}

/// Moves one component and reassembles only the blocks coupling it to the others.
///
/// The FEM matrix, the source and all diagonal boundary blocks are shared with `sys`;
/// the body-attached magnetization and current rotate with the component.
pub fn apply_motion(sys: &CoupledSystem, motion: &RigidMotion) -> Result<CoupledSystem> {
    let k = motion.component;
    let nc = sys.n_components();
    if k >= nc {
        return Err(Error::InvalidMotion(format!("component {k} does not exist ({nc} components)")));
    }
    RigidMotion::new(k, motion.rotation, motion.translation)?;
    if motion.is_identity() {
        return Ok(sys.clone());
    }
    let (r, t) = (&motion.rotation, &motion.translation);

    let mut surface = sys.surface.as_ref().clone();
    surface.transform_component(k, r, t);
    check_contact(&surface, k)?;

    let mut mesh = sys.mesh.as_ref().clone();
    for node in mesh.component_nodes().swap_remove(k) {
        mesh.nodes[node] = r * mesh.nodes[node] + t;
    }
    let moved_regions: std::collections::BTreeSet<i64> = (0..mesh.n_tets())
        .filter(|&e| mesh.component[e] == k)
        .map(|e| mesh.region[e])
        .collect();
    for tag in moved_regions {
        let exclusive = (0..mesh.n_tets()).all(|e| mesh.region[e] != tag || mesh.component[e] == k);
        if let (true, Some(m)) = (exclusive, mesh.materials.get_mut(&tag)) {
            m.magnetization = (r * Point::from(m.magnetization)).into();
        }
    }
    if let Some(j) = mesh.current_density.as_mut() {
        for (e, v) in j.iter_mut().enumerate() {
            if sys.mesh.component[e] == k {
                *v = r * *v;
            }
        }
    }

    let rules = Rules::new(&sys.options.bem);
    let mut blocks = sys.blocks.clone();
    for i in (0..nc).filter(|&i| i != k) {
        let (a, b) = (i.min(k), i.max(k));
        blocks[a * nc + b] = Some(Arc::new(assemble_pair_block(&surface, a, b, &rules)));
    }
    Ok(CoupledSystem {
        mesh: Arc::new(mesh),
        surface: Arc::new(surface),
        blocks,
        ..sys.clone()
    })
}
