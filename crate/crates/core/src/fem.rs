//! Lowest-order Nédélec (Whitney) edge elements on tetrahedra.
//!
//! The unknown is the scaled potential `a = A/μ0`, so the curl-curl form carries
//! only `μr⁻¹` and the source vector carries no `μ0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Point, SurfaceMesh, TetMesh, TET_EDGES};
use crate::quadrature::tet_degree2;
use crate::sparse::{axpy, dot, norm, CsrMatrix};

/// Edge dofs of a tet mesh with per-tet orientation signs.
#[derive(Debug, Clone)]
pub struct EdgeSpace {
    pub n_dofs: usize,
    pub dofs: Vec<[usize; 6]>,
    pub signs: Vec<[f64; 6]>,
}

impl EdgeSpace {
    pub fn new(mesh: &TetMesh) -> Self {
        Self {
            n_dofs: mesh.n_edges(),
            dofs: (0..mesh.n_tets()).map(|t| *mesh.tet_edges(t)).collect(),
            signs: (0..mesh.n_tets()).map(|t| *mesh.tet_edge_signs(t)).collect(),
        }
    }
}

/// Unsigned curls `2 ∇λa × ∇λb` of the six local Whitney functions.
pub fn whitney_curls(grads: &[Point; 4]) -> [Point; 6] {
    TET_EDGES.map(|(a, b)| 2.0 * grads[a].cross(&grads[b]))
}

/// Unsigned Whitney function values `λa∇λb − λb∇λa` at barycentric point `lambda`.
pub fn whitney_values(grads: &[Point; 4], lambda: &[f64; 4]) -> [Point; 6] {
    TET_EDGES.map(|(a, b)| lambda[a] * grads[b] - lambda[b] * grads[a])
}

pub(crate) fn assemble<F>(mesh: &TetMesh, space: &EdgeSpace, element: F) -> CsrMatrix
where
    F: Fn(usize) -> [[f64; 6]; 6] + Sync + Send,
{
    let blocks: Vec<[[f64; 6]; 6]> = (0..mesh.n_tets()).into_par_iter().map(element).collect();
    let mut t = Vec::with_capacity(36 * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        let (d, s) = (&space.dofs[k], &space.signs[k]);
        for i in 0..6 {
            for j in 0..6 {
                t.push((d[i], d[j], s[i] * s[j] * b[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dofs, space.n_dofs, t)
}

fn check_materials(mesh: &TetMesh) -> Result<()> {
    for &r in &mesh.region {
        match mesh.materials.get(&r) {
            None => return Err(Error::MissingMaterial(r)),
            Some(m) if !(m.mu_r > 0.0 && m.mu_r.is_finite()) => {
                return Err(Error::InvalidMaterial {
                    tag: r,
                    msg: format!("mu_r must be positive, got {}", m.mu_r),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// `⟨μr⁻¹ curl u, curl v⟩`.
pub fn assemble_curl_curl(space: &EdgeSpace, mesh: &TetMesh) -> Result<CsrMatrix> {
    check_materials(mesh)?;
    Ok(assemble(mesh, space, |t| {
        let c = whitney_curls(&mesh.barycentric_gradients(t));
        let w = mesh.tet_volume(t) / mesh.material(t).mu_r;
        let mut k = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                k[i][j] = w * c[i].dot(&c[j]);
            }
        }
        k
    }))
}

/// Element mass matrix `∫ wi·wj` of the unsigned Whitney functions.
pub fn element_mass(grads: &[Point; 4], volume: f64) -> [[f64; 6]; 6] {
    let ll = |p: usize, q: usize| volume * if p == q { 2.0 } else { 1.0 } / 20.0;
    let gg = |p: usize, q: usize| grads[p].dot(&grads[q]);
    let mut m = [[0.0; 6]; 6];
    for (i, &(a, b)) in TET_EDGES.iter().enumerate() {
        for (j, &(c, d)) in TET_EDGES.iter().enumerate() {
            m[i][j] = ll(a, c) * gg(b, d) - ll(a, d) * gg(b, c) - ll(b, c) * gg(a, d)
                + ll(b, d) * gg(a, c);
        }
    }
    m
}

/// `⟨u, v⟩` on edge functions.
pub fn assemble_edge_mass(space: &EdgeSpace, mesh: &TetMesh) -> CsrMatrix {
    assemble(mesh, space, |t| {
        element_mass(&mesh.barycentric_gradients(t), mesh.tet_volume(t))
    })
}

/// Current density given as a function of position.
pub type CurrentFn<'a> = &'a (dyn Fn(&Point) -> Point + Sync);

/// Circular coil of rectangular cross-section `[inner, outer] × [−height/2, height/2]`
/// about `axis` through `center`, carrying total `current` counter-clockwise about `axis`.
/// The density `c e_θ / ρ` is divergence free inside and zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCoil {
    pub center: Point,
    pub axis: Point,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub height: f64,
    pub current: f64,
}

impl LoopCoil {
    pub fn validate(&self) -> Result<()> {
        let ok = self.axis.norm() > 0.0
            && self.inner_radius > 0.0
            && self.outer_radius > self.inner_radius
            && self.height > 0.0
            && self.current.is_finite()
            && self.center.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid loop coil {self:?}")))
        }
    }

    pub fn density(&self, x: &Point) -> Point {
        let z = self.axis.normalize();
        let d = x - self.center;
        let h = d.dot(&z);
        let radial = d - z * h;
        let rho = radial.norm();
        let tol = 1e-9 * self.outer_radius;
        if h.abs() > 0.5 * self.height + tol || rho < self.inner_radius - tol || rho > self.outer_radius + tol {
            return Point::zeros();
        }
        let c = self.current / (self.height * (self.outer_radius / self.inner_radius).ln());
        z.cross(&radial) * (c / (rho * rho))
    }
}

/// `⟨j, w⟩ + ⟨M, curl w⟩` with per-tet `j` from the mesh, an optional callable `j`
/// sampled by a degree-2 rule, and per-region magnetization.
pub fn assemble_source(
    space: &EdgeSpace,
    mesh: &TetMesh,
    current: Option<CurrentFn<'_>>,
) -> Vec<f64> {
    let rule = tet_degree2();
    let local: Vec<[f64; 6]> = (0..mesh.n_tets())
        .into_par_iter()
        .map(|t| {
            let g = mesh.barycentric_gradients(t);
            let vol = mesh.tet_volume(t);
            let mut f = [0.0; 6];
            let m = Point::from(mesh.material(t).magnetization);
            if m != Point::zeros() {
                for (fi, c) in f.iter_mut().zip(whitney_curls(&g)) {
                    *fi += vol * m.dot(&c);
                }
            }
            if let Some(j) = mesh.current_density.as_ref().map(|j| j[t]) {
                if j != Point::zeros() {
                    // ∫ w = |K| (∇λb − ∇λa) / 4
                    for (i, &(a, b)) in TET_EDGES.iter().enumerate() {
                        f[i] += vol * 0.25 * j.dot(&(g[b] - g[a]));
                    }
                }
            }
            if let Some(jf) = current {
                let p = mesh.tet_points(t);
                for (l, w) in rule.0.iter().zip(&rule.1) {
                    let x = p[0] * l[0] + p[1] * l[1] + p[2] * l[2] + p[3] * l[3];
                    let jv = jf(&x);
                    for (fi, wv) in f.iter_mut().zip(whitney_values(&g, l)) {
                        *fi += vol * w * jv.dot(&wv);
                    }
                }
            }
            f
        })
        .collect();
    let mut out = vec![0.0; space.n_dofs];
    for (t, f) in local.iter().enumerate() {
        for i in 0..6 {
            out[space.dofs[t][i]] += space.signs[t][i] * f[i];
        }
    }
    out
}

/// Signed edge–node incidence: column `b` of edge `(a, b)` holds +1, column `a` holds −1.
pub fn discrete_gradient(mesh: &TetMesh) -> CsrMatrix {
    let t = mesh
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(e, &[a, b])| [(e, a, -1.0), (e, b, 1.0)])
        .collect();
    CsrMatrix::from_triplets(mesh.n_edges(), mesh.n_nodes(), t)
}

/// P1 stiffness matrix `∫ ∇u·∇v`, which equals `Gᵀ M G` for the edge mass `M`.
pub fn nodal_stiffness(mesh: &TetMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(16 * mesh.n_tets());
    for k in 0..mesh.n_tets() {
        let g = mesh.barycentric_gradients(k);
        let v = mesh.tet_volume(k);
        let n = mesh.tets[k];
        for i in 0..4 {
            for j in 0..4 {
                t.push((n[i], n[j], v * g[i].dot(&g[j])));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), mesh.n_nodes(), t)
}

/// Removes the discrete gradient part of `f`: returns `f − M G y` with `(GᵀMG) y = Gᵀf`,
/// so that `Gᵀ f_new = 0` and the singular curl-curl system is consistent.
pub fn project_source(mesh: &TetMesh, space: &EdgeSpace, f: &[f64]) -> Vec<f64> {
    let g = discrete_gradient(mesh);
    let mass = assemble_edge_mass(space, mesh);
    let lap = nodal_stiffness(mesh);
    let mut out = f.to_vec();
    // A second pass removes what the first leaves at the solver tolerance.
    for _ in 0..2 {
        let mut rhs = g.tr_matvec(&out);
        if norm(&rhs) <= 1e-14 * norm(&out) {
            break;
        }
        remove_component_means(mesh, &mut rhs);
        let y = pcg(&lap, &rhs, 1e-14, 10 * mesh.n_nodes() + 100);
        axpy(-1.0, &mass.matvec(&g.matvec(&y)), &mut out);
    }
    out
}

/// Euclidean projection of edge coefficients onto the complement of discrete gradients.
pub(crate) fn remove_gradients(mesh: &TetMesh, g: &CsrMatrix, lap: &CsrMatrix, v: &mut [f64]) {
    for _ in 0..2 {
        let mut gt = g.tr_matvec(v);
        if norm(&gt) <= 1e-14 * norm(v) {
            break;
        }
        remove_component_means(mesh, &mut gt);
        let y = pcg(lap, &gt, 1e-14, 10 * mesh.n_nodes() + 100);
        axpy(-1.0, &g.matvec(&y), v);
    }
}

/// Makes a nodal vector sum to zero over each connected component, the kernel of the
/// nodal Laplacian.
pub(crate) fn remove_component_means(mesh: &TetMesh, v: &mut [f64]) {
    for nodes in mesh.component_nodes() {
        let mean = nodes.iter().map(|&n| v[n]).sum::<f64>() / nodes.len() as f64;
        nodes.iter().for_each(|&n| v[n] -= mean);
    }
}

/// Jacobi-preconditioned conjugate gradients for a consistent semidefinite system.
pub(crate) fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let d: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 })
        .collect();
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let b_norm = norm(b);
    for _ in 0..max_iter {
        if norm(&r) <= tol * b_norm {
            break;
        }
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        z = r.iter().zip(&d).map(|(a, b)| a * b).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pv, zv) in p.iter_mut().zip(&z) {
            *pv = zv + beta * *pv;
        }
    }
    x
}

/// Boundary restriction: entry `s` holds the volume edge of surface edge `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRestriction {
    pub volume_edge: Vec<usize>,
    pub n_volume: usize,
}

impl TraceRestriction {
    pub fn n_rows(&self) -> usize {
        self.volume_edge.len()
    }

    /// `R x`: surface coefficients from volume coefficients.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.volume_edge.iter().map(|&e| x[e]).collect()
    }

    /// `y += Rᵀ u`.
    pub fn extend_add(&self, u: &[f64], y: &mut [f64]) {
        for (&e, &v) in self.volume_edge.iter().zip(u) {
            y[e] += v;
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let t = self
            .volume_edge
            .iter()
            .enumerate()
            .map(|(s, &e)| (s, e, 1.0))
            .collect();
        CsrMatrix::from_triplets(self.n_rows(), self.n_volume, t)
    }
}

pub fn trace_restriction(mesh: &TetMesh, surf: &SurfaceMesh) -> Result<TraceRestriction> {
    let volume_edge = surf
        .edges
        .iter()
        .map(|&[a, b]| {
            let (na, nb) = (surf.vertex_nodes[a], surf.vertex_nodes[b]);
            mesh.edge_index(na, nb)
                .filter(|_| na < nb)
                .ok_or(Error::MissingVolumeEdge(na, nb))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceRestriction {
        volume_edge,
        n_volume: mesh.n_edges(),
    })
}

/// Per-tet constant `curl a` of an edge coefficient vector.
pub fn element_curls(mesh: &TetMesh, space: &EdgeSpace, a: &[f64]) -> Vec<Point> {
    (0..mesh.n_tets())
        .into_par_iter()
        .map(|t| {
            let c = whitney_curls(&mesh.barycentric_gradients(t));
            (0..6).fold(Point::zeros(), |acc, i| {
                acc + c[i] * (space.signs[t][i] * a[space.dofs[t][i]])
            })
        })
        .collect()
}

/// Edge coefficients of a field: `∫_e u·t ds` by Simpson's rule along each edge.
pub fn interpolate(mesh: &TetMesh, u: impl Fn(&Point) -> Point) -> Vec<f64> {
    mesh.edges()
        .iter()
        .map(|&[a, b]| {
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            let t = pb - pa;
            (u(&pa).dot(&t) + 4.0 * u(&((pa + pb) * 0.5)).dot(&t) + u(&pb).dot(&t)) / 6.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn reference_tet_curls_match_hand_values() {
        // ∇λ = (−1,−1,−1), e1, e2, e3 on the reference tet.
        let m = generate::reference_tet();
        let c = whitney_curls(&m.barycentric_gradients(0));
        let expect = [
            Point::new(0.0, -2.0, 2.0),
            Point::new(2.0, 0.0, -2.0),
            Point::new(-2.0, 2.0, 0.0),
            Point::new(0.0, 0.0, 2.0),
            Point::new(0.0, -2.0, 0.0),
            Point::new(2.0, 0.0, 0.0),
        ];
        for i in 0..6 {
            assert!((c[i] - expect[i]).norm() < 1e-14, "edge {i}: {}", c[i]);
        }
    }

    #[test]
    fn mass_matches_quadrature() {
        let m = generate::ball(1, 1.0, Point::zeros());
        let rule = crate::quadrature::tet_degree2();
        for t in 0..m.n_tets() {
            let g = m.barycentric_gradients(t);
            let v = m.tet_volume(t);
            let exact = element_mass(&g, v);
            let mut q = [[0.0; 6]; 6];
            for (l, w) in rule.0.iter().zip(&rule.1) {
                let wv = whitney_values(&g, l);
                for i in 0..6 {
                    for j in 0..6 {
                        q[i][j] += v * w * wv[i].dot(&wv[j]);
                    }
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    assert!((exact[i][j] - q[i][j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn projection_removes_gradient_part() {
        let mut m = generate::kuhn_cube(2, Point::zeros(), 1.0);
        m.current_density = Some(vec![Point::new(1.0, 0.5, -0.2); m.n_tets()]);
        let s = EdgeSpace::new(&m);
        let f = assemble_source(&s, &m, None);
        let g = discrete_gradient(&m);
        assert!(norm(&g.tr_matvec(&f)) > 1e-3);
        let p = project_source(&m, &s, &f);
        assert!(norm(&g.tr_matvec(&p)) < 1e-12 * norm(&f));
    }
}
