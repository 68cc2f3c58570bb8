//! Boundary element spaces and Galerkin operators on the closed boundary surface.
//!
//! Surface conventions:
//! * Raviart–Thomas function of local edge `k`: `φ_k = s_k (x − p_k) / (2|T|)`.
//! * Dirichlet trace basis of the edge elements: `n × φ_k`.
//! * Surface curl of a scalar: `curl_Γ φ = ∇_Γ φ × n`.
//! * Topological gradient: `G[ℓ, b] = +1`, `G[ℓ, a] = −1` for the edge `ℓ = (a, b)`, `a < b`.

pub mod exterior;
pub mod integrals;

use nalgebra::DMatrix;

use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::TriangleRule;
use crate::sparse::CsrMatrix;

pub use exterior::{evaluate_exterior_b, evaluate_exterior_h, point_triangle_distance, winding_number};
pub use integrals::{
    for_each_pair, pair_integrals, scalar_blocks, BemOptions, Panel, PanelSet, PairIntegrals, Rules,
    ScalarBlocks, Wanted,
};

/// Vacuum permeability in H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Lowest-order Raviart–Thomas space: one dof per surface edge.
#[derive(Debug, Clone)]
pub struct RTSpace {
    pub n_dofs: usize,
    pub dofs: Vec<[usize; 3]>,
    pub signs: Vec<[f64; 3]>,
}

impl RTSpace {
    pub fn new(s: &SurfaceMesh) -> Self {
        Self {
            n_dofs: s.n_edges(),
            dofs: s.triangle_edges.clone(),
            signs: s.triangle_edge_signs.clone(),
        }
    }

    /// Value at `x` in triangle `t` of the field with coefficients `c`.
    pub fn eval(&self, s: &SurfaceMesh, t: usize, c: &[f64], x: &Point) -> Point {
        let p = s.triangle_points(t);
        (0..3).fold(Point::zeros(), |acc, k| {
            acc + (x - p[k]) * (self.signs[t][k] * c[self.dofs[t][k]] / (2.0 * s.areas[t]))
        })
    }

    /// Dof functional `∫_E (n × v)·t ds` along edge `e` oriented low to high, by Gauss rule.
    pub fn functional(&self, s: &SurfaceMesh, e: usize, v: impl Fn(usize, &Point) -> Point) -> f64 {
        let (t, _) = s.edge_triangles[e][0];
        let [a, b] = s.edges[e];
        let (pa, pb) = (s.points[a], s.points[b]);
        let (g, w) = crate::quadrature::gauss_legendre(4);
        let n = s.normals[t];
        g.iter()
            .zip(&w)
            .map(|(&u, &wu)| {
                let x = pa + (pb - pa) * u;
                wu * n.cross(&v(t, &x)).dot(&(pb - pa))
            })
            .sum()
    }
}

/// Continuous piecewise linear functions on the surface: one dof per vertex.
#[derive(Debug, Clone, Copy)]
pub struct P1Space {
    pub n_dofs: usize,
}

impl P1Space {
    pub fn new(s: &SurfaceMesh) -> Self {
        Self { n_dofs: s.n_vertices() }
    }
}

/// Signed edge–vertex incidence, the RT coefficients of `curl_Γ` of the hat functions.
pub fn assemble_topological_gradient(s: &SurfaceMesh) -> CsrMatrix {
    let t = s
        .edges
        .iter()
        .enumerate()
        .flat_map(|(e, &[a, b])| [(e, a, -1.0), (e, b, 1.0)])
        .collect();
    CsrMatrix::from_triplets(s.n_edges(), s.n_vertices(), t)
}

/// Integer surface divergence: `D[T, e] = s_e(T)`, so `div φ = D c / |T|` per triangle.
pub fn surface_divergence(s: &SurfaceMesh) -> CsrMatrix {
    let mut t = Vec::with_capacity(3 * s.n_triangles());
    for (i, (e, sg)) in s.triangle_edges.iter().zip(&s.triangle_edge_signs).enumerate() {
        for k in 0..3 {
            t.push((i, e[k], sg[k]));
        }
    }
    CsrMatrix::from_triplets(s.n_triangles(), s.n_edges(), t)
}

/// Scalar surface curl of the trace basis, constant per triangle: `s_e(T) / |T|`.
pub fn surface_curl(s: &SurfaceMesh) -> CsrMatrix {
    let mut d = surface_divergence(s);
    for i in 0..s.n_triangles() {
        for v in &mut d.values[d.indptr[i]..d.indptr[i + 1]] {
            *v /= s.areas[i];
        }
    }
    d
}

/// Surface curls `∇_Γ λ_v × n` of the hat functions, one matrix per Cartesian direction
/// (`nT × nV`).
pub fn hat_curls(s: &SurfaceMesh) -> [CsrMatrix; 3] {
    let mut t: [Vec<(usize, usize, f64)>; 3] = Default::default();
    for i in 0..s.n_triangles() {
        let n = s.normals[i];
        let g = s.barycentric_gradients(i).map(|g| g.cross(&n));
        for k in 0..3 {
            for (d, td) in t.iter_mut().enumerate() {
                td.push((i, s.triangles[i][k], g[k][d]));
            }
        }
    }
    t.map(|td| CsrMatrix::from_triplets(s.n_triangles(), s.n_vertices(), td))
}

/// `I[ℓ, e] = ∫ φ_ℓ · (n × φ_e)`: RT test functions against the trace basis.
pub fn trace_pairing(s: &SurfaceMesh) -> CsrMatrix {
    let rule = TriangleRule::symmetric(2);
    let mut t = Vec::with_capacity(9 * s.n_triangles());
    for i in 0..s.n_triangles() {
        let panel = Panel::from_surface(s, i);
        let mut m = [[0.0; 3]; 3];
        for (st, w) in rule.points.iter().zip(&rule.weights) {
            let x = panel.p[0] + (panel.p[1] - panel.p[0]) * st[0] + (panel.p[2] - panel.p[0]) * st[1];
            for k in 0..3 {
                for l in 0..3 {
                    m[k][l] += w * panel.area * panel.rt(k, &x).dot(&panel.normal.cross(&panel.rt(l, &x)));
                }
            }
        }
        for k in 0..3 {
            for l in 0..3 {
                t.push((s.triangle_edges[i][k], s.triangle_edges[i][l], m[k][l]));
            }
        }
    }
    CsrMatrix::from_triplets(s.n_edges(), s.n_edges(), t)
}

fn scatter_rt(s: &SurfaceMesh, opts: &BemOptions, want: Wanted, pick: fn(&PairIntegrals) -> [[f64; 3]; 3]) -> DMatrix<f64> {
    let set = PanelSet::whole(s);
    let rules = Rules::new(opts);
    let n = s.n_edges();
    let mut m = DMatrix::zeros(n, n);
    for_each_pair(&set, &set, true, &rules, want, |i, j, p| {
        let v = pick(p);
        let (ei, ej) = (&s.triangle_edges[i], &s.triangle_edges[j]);
        for k in 0..3 {
            for l in 0..3 {
                m[(ei[k], ej[l])] += v[k][l];
                if i != j {
                    m[(ej[l], ei[k])] += v[k][l];
                }
            }
        }
    });
    m
}

/// Maxwell single layer on RT functions: `V[ℓ, m] = ∫∫ U φ_ℓ(x) · φ_m(y)`.
pub fn assemble_single_layer(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    scatter_rt(s, opts, Wanted { rt: true, ..Default::default() }, |p| p.vrt)
}

/// Principal-value part `∫∫ ∇_x U(x − y) · (φ_ℓ(x) × φ_e(y))`, symmetric in `ℓ, e`.
pub fn assemble_double_layer_pv(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    scatter_rt(s, opts, Wanted { kpv: true, ..Default::default() }, |p| p.kpv)
}

/// Maxwell double layer `⟨K w_e, φ_ℓ⟩` for the exterior trace: principal value plus `½ I`.
/// The coupled form uses `K − Id`, i.e. the principal value minus `½ I`.
pub fn assemble_double_layer(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    let mut k = assemble_double_layer_pv(s, opts);
    let id = trace_pairing(s);
    for r in 0..id.nrows {
        let (idx, val) = id.row(r);
        for (&c, &v) in idx.iter().zip(val) {
            k[(r, c)] += 0.5 * v;
        }
    }
    k
}

/// Piecewise constant single layer `V0[T, T'] = ∫∫ U`.
pub fn assemble_p0_single_layer(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    let set = PanelSet::whole(s);
    scalar_blocks(&set, &set, true, &Rules::new(opts)).v0
}

/// Scalar double layer between P0 test and P1 trial functions.
pub fn assemble_scalar_double_layer(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    let set = PanelSet::whole(s);
    scalar_blocks(&set, &set, true, &Rules::new(opts)).kl
}

/// Hypersingular operator on the trace space, `N = −Dcᵀ V0 Dc` with the scalar surface curl
/// `Dc`; symmetric negative semidefinite.
pub fn assemble_hypersingular(s: &SurfaceMesh, opts: &BemOptions) -> DMatrix<f64> {
    let v0 = assemble_p0_single_layer(s, opts);
    let dc = surface_curl(s).to_dense();
    let n = -(dc.transpose() * v0 * &dc);
    (&n + n.transpose()) * 0.5
}

/// `Gᵀ V G` through the scalar identity `Σ_d Γ_dᵀ V0 Γ_d` with hat curls `Γ_d`.
pub fn scalar_hypersingular(v0: &DMatrix<f64>, grads: &[DMatrix<f64>; 3]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(grads[0].ncols(), grads[0].ncols());
    for g in grads {
        w += g.transpose() * (v0 * g);
    }
    w
}

/// Cross-component form of [`scalar_hypersingular`]: `Σ_d Γ_{i,d}ᵀ V0_ij Γ_{j,d}`.
pub fn scalar_hypersingular_block(
    v0: &DMatrix<f64>,
    gi: &[DMatrix<f64>; 3],
    gj: &[DMatrix<f64>; 3],
) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(gi[0].ncols(), gj[0].ncols());
    for d in 0..3 {
        w += gi[d].transpose() * (v0 * &gj[d]);
    }
    w
}

/// Matrix-free `V η` and `K_pvᵀ η` for a few RT coefficient vectors.
pub fn apply_rt_operators(
    s: &SurfaceMesh,
    opts: &BemOptions,
    vecs: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let set = PanelSet::whole(s);
    let rules = Rules::new(opts);
    let n = s.n_edges();
    let mut v = vec![vec![0.0; n]; vecs.len()];
    let mut k = vec![vec![0.0; n]; vecs.len()];
    let want = Wanted { rt: true, kl: false, kpv: true };
    for_each_pair(&set, &set, true, &rules, want, |i, j, p| {
        let (ei, ej) = (&s.triangle_edges[i], &s.triangle_edges[j]);
        for (m, x) in vecs.iter().enumerate() {
            for a in 0..3 {
                for b in 0..3 {
                    v[m][ei[a]] += p.vrt[a][b] * x[ej[b]];
                    k[m][ej[b]] += p.kpv[a][b] * x[ei[a]];
                    if i != j {
                        v[m][ej[b]] += p.vrt[a][b] * x[ei[a]];
                        k[m][ei[a]] += p.kpv[a][b] * x[ej[b]];
                    }
                }
            }
        }
    });
    (v, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    fn sphere() -> SurfaceMesh {
        SurfaceMesh::extract(&generate::ball(2, 1.0, Point::zeros())).unwrap()
    }

    #[test]
    fn rt_functional_is_dual_to_basis() {
        let s = sphere();
        let rt = RTSpace::new(&s);
        for e in 0..s.n_edges() {
            for k in [e, (e + 7) % s.n_edges()] {
                let mut c = vec![0.0; s.n_edges()];
                c[k] = 1.0;
                let val = rt.functional(&s, e, |t, x| rt.eval(&s, t, &c, x));
                let expect = if k == e { 1.0 } else { 0.0 };
                assert!((val - expect).abs() < 1e-10, "edge {e} basis {k}: {val}");
            }
        }
    }

    #[test]
    fn gradient_entries_follow_the_edge_functional() {
        // π_ℓ(curl_Γ λ_k) computed by quadrature equals G[ℓ, k].
        let s = sphere();
        let g = assemble_topological_gradient(&s);
        let rt = RTSpace::new(&s);
        for e in (0..s.n_edges()).step_by(5) {
            let [a, b] = s.edges[e];
            for v in [a, b] {
                let val = rt.functional(&s, e, |t, _| {
                    let tri = s.triangles[t];
                    let k = tri.iter().position(|&q| q == v).unwrap();
                    s.barycentric_gradients(t)[k].cross(&s.normals[t])
                });
                assert!((val - g.get(e, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_annihilates_gradient_exactly() {
        let s = sphere();
        let d = surface_divergence(&s).to_dense();
        let g = assemble_topological_gradient(&s).to_dense();
        assert_eq!((d * g).amax(), 0.0);
    }

    #[test]
    fn scalar_identity_matches_rt_single_layer() {
        let s = sphere();
        let o = BemOptions::default();
        let v = assemble_single_layer(&s, &o);
        let g = assemble_topological_gradient(&s).to_dense();
        let w1 = g.transpose() * v * &g;
        let v0 = assemble_p0_single_layer(&s, &o);
        let grads = hat_curls(&s).map(|m| m.to_dense());
        let w2 = scalar_hypersingular(&v0, &grads);
        let err = (&w1 - &w2).amax();
        assert!(err < 1e-10 * w2.amax(), "{err} {} {}", w1.amax(), w2.amax());
    }
}
