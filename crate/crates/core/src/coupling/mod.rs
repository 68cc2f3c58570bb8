//! The symmetric FEM-BEM block system and its extensions.
//!
//! Unknowns are `x = (a, φ)`: edge coefficients of the scaled vector potential and
//! P1 coefficients of the surface potential. The operator is
//!
//! ```text
//! S = [ A + Nmat   Cᵀ ]
//!     [ C         −W  ]
//! ```
//!
//! with `A` the curl-curl matrix, `Nmat = Rᵀ Dcᵀ V0 Dc R = −Rᵀ N R`, `W = Gᵀ V G`
//! and `C = Gᵀ (K − Id) R`. `C` and `W` are evaluated through scalar identities on
//! the P0 single layer `V0` and the P0×P1 double layer `KL`, which keeps `C G_vol = 0`
//! and `Cᵀ 1 = 0` exact.

mod motion;
mod periodic;
mod sheet;

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bem::{self, hat_curls, scalar_blocks, BemOptions, PanelSet, Rules};
use crate::error::{Error, Result};
use crate::fem::{self, CurrentFn, EdgeSpace, TraceRestriction};
use crate::mesh::{SurfaceMesh, TetMesh};
use crate::solver::Operator;
use crate::sparse::{dense_matvec_add, dense_tr_matvec_add, CsrMatrix};

pub use motion::{apply_motion, check_contact, RigidMotion};
pub use periodic::{assemble_sector_block, circulant_matvec, materialize_circulant, periodic_reduce, sector_copy};
pub use sheet::{build_current_sheet, dual_circulation, homology_residual, CurrentSheet};

/// Options for assembling a [`CoupledSystem`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemOptions {
    pub bem: BemOptions,
    /// Remove the discrete gradient part of the source so that the singular system is consistent.
    pub project_source: bool,
    /// Refuse boundary surfaces with more edges than this.
    pub max_surface_edges: usize,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self {
            bem: BemOptions::default(),
            project_source: true,
            max_surface_edges: 20_000,
        }
    }
}

/// Dense boundary blocks between components `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlock {
    pub i: usize,
    pub j: usize,
    /// P0 single layer, triangles of `i` × triangles of `j`.
    pub v0: DMatrix<f64>,
    /// Double layer, triangles of `i` × vertices of `j`.
    pub kl: DMatrix<f64>,
    /// Double layer, triangles of `j` × vertices of `i`; empty when `i == j`.
    pub kl_rev: DMatrix<f64>,
    /// `Gᵀ V G`, vertices of `i` × vertices of `j`.
    pub w: DMatrix<f64>,
}

/// Symmetric FEM-BEM operator partitioned by solid component.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub mesh: Arc<TetMesh>,
    pub surface: Arc<SurfaceMesh>,
    pub space: Arc<EdgeSpace>,
    pub restriction: Arc<TraceRestriction>,
    /// Curl-curl matrix with `μr⁻¹`.
    pub a: Arc<CsrMatrix>,
    /// Scalar surface curl of the trace basis (`nT × nE_surface`).
    pub dc: Arc<CsrMatrix>,
    /// Per-triangle jump coefficient, nominally ½.
    pub jump: Arc<Vec<f64>>,
    /// Blocks for `i <= j`, indexed by `i * n_components + j`.
    pub blocks: Vec<Option<Arc<PairBlock>>>,
    /// FEM part of the right-hand side.
    pub rhs_fem: Arc<Vec<f64>>,
    pub options: SystemOptions,
}

fn dense_times_sparse(d: &DMatrix<f64>, s: &CsrMatrix, col_offset: usize, ncols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d.nrows(), ncols);
    for t in 0..s.nrows {
        let (idx, val) = s.row(t);
        for (&v, &x) in idx.iter().zip(val) {
            let src = d.column(t).clone_owned();
            let mut dst = out.column_mut(v - col_offset);
            dst.axpy(x, &src, 1.0);
        }
    }
    out
}

fn sparse_tr_times_dense(s: &CsrMatrix, row_offset: usize, nrows: usize, d: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..d.ncols())
        .into_par_iter()
        .map(|c| {
            let mut out = vec![0.0; nrows];
            let col = d.column(c);
            for t in 0..s.nrows {
                let (idx, val) = s.row(t);
                for (&v, &x) in idx.iter().zip(val) {
                    out[v - row_offset] += x * col[t];
                }
            }
            out
        })
        .collect();
    DMatrix::from_fn(nrows, d.ncols(), |r, c| cols[c][r])
}

/// Rows of `c` restricted to the triangles of one component.
fn component_rows(s: &SurfaceMesh, m: &CsrMatrix, comp: usize) -> CsrMatrix {
    let r = s.triangle_offsets[comp]..s.triangle_offsets[comp + 1];
    let t = r
        .clone()
        .flat_map(|row| {
            let (idx, val) = m.row(row);
            idx.iter().zip(val).map(move |(&c, &v)| (row - r.start, c, v)).collect::<Vec<_>>()
        })
        .collect();
    CsrMatrix::from_triplets(r.len(), m.ncols, t)
}

/// Assembles the dense blocks between components `i <= j` of `surface`.
pub(crate) fn assemble_pair_block(surface: &SurfaceMesh, i: usize, j: usize, rules: &Rules) -> PairBlock {
    let si = PanelSet::component(surface, i);
    let sj = PanelSet::component(surface, j);
    let same = i == j;
    let sb = scalar_blocks(&si, &sj, same, rules);
    let curls = hat_curls(surface);
    let (vi, vj) = (surface.vertex_offsets[i], surface.vertex_offsets[j]);
    let (ni, nj) = (si.n_vertices, sj.n_vertices);
    let mut w = DMatrix::zeros(ni, nj);
    for c in &curls {
        let gi = component_rows(surface, c, i);
        let gj = component_rows(surface, c, j);
        let x = dense_times_sparse(&sb.v0, &gj, vj, nj);
        w += sparse_tr_times_dense(&gi, vi, ni, &x);
    }
    if same {
        w = (&w + w.transpose()) * 0.5;
    }
    let mut kl = sb.kl;
    let mut kl_rev = if same { DMatrix::zeros(0, 0) } else { sb.kl_rev };
    if !same {
        // A closed surface subtends no solid angle at an exterior point: rows sum to zero.
        remove_row_sums(&mut kl, &vertex_weights(surface, j));
        remove_row_sums(&mut kl_rev, &vertex_weights(surface, i));
    }
    PairBlock {
        i,
        j,
        v0: sb.v0,
        kl,
        kl_rev,
        w,
    }
}

/// Lumped vertex areas of one component, normalised to sum to one.
fn vertex_weights(s: &SurfaceMesh, c: usize) -> Vec<f64> {
    let off = s.vertex_offsets[c];
    let mut w = vec![0.0; s.vertex_offsets[c + 1] - off];
    for t in s.triangle_offsets[c]..s.triangle_offsets[c + 1] {
        for &v in &s.triangles[t] {
            w[v - off] += s.areas[t] / 3.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn remove_row_sums(m: &mut DMatrix<f64>, weights: &[f64]) {
    for r in 0..m.nrows() {
        let s: f64 = m.row(r).iter().sum();
        for (c, w) in weights.iter().enumerate() {
            m[(r, c)] -= s * w;
        }
    }
}

impl CoupledSystem {
    /// Builds the full system for a mesh whose material table is complete.
    pub fn assemble(mesh: TetMesh, current: Option<CurrentFn<'_>>, options: SystemOptions) -> Result<Self> {
        let surface = SurfaceMesh::extract(&mesh)?;
        if surface.n_edges() > options.max_surface_edges {
            return Err(Error::TooLarge(surface.n_edges(), options.max_surface_edges));
        }
        let space = EdgeSpace::new(&mesh);
        let a = fem::assemble_curl_curl(&space, &mesh)?;
        let restriction = fem::trace_restriction(&mesh, &surface)?;
        let mut rhs = fem::assemble_source(&space, &mesh, current);
        if options.project_source {
            rhs = fem::project_source(&mesh, &space, &rhs);
        }
        let dc = bem::surface_curl(&surface);
        let rules = Rules::new(&options.bem);
        let nc = surface.n_components;
        let mut blocks = vec![None; nc * nc];
        for i in 0..nc {
            for j in i..nc {
                blocks[i * nc + j] = Some(Arc::new(assemble_pair_block(&surface, i, j, &rules)));
            }
        }
        let mut jump = vec![0.0; surface.n_triangles()];
        for c in 0..nc {
            let b = blocks[c * nc + c].as_ref().unwrap();
            let off = surface.triangle_offsets[c];
            for r in 0..b.kl.nrows() {
                jump[off + r] = -b.kl.row(r).iter().sum::<f64>() / surface.areas[off + r];
            }
        }
        Ok(Self {
            mesh: Arc::new(mesh),
            surface: Arc::new(surface),
            space: Arc::new(space),
            restriction: Arc::new(restriction),
            a: Arc::new(a),
            dc: Arc::new(dc),
            jump: Arc::new(jump),
            blocks,
            rhs_fem: Arc::new(rhs),
            options,
        })
    }

    pub fn n_components(&self) -> usize {
        self.surface.n_components
    }

    pub fn n_fem(&self) -> usize {
        self.space.n_dofs
    }

    pub fn n_bem(&self) -> usize {
        self.surface.n_vertices()
    }

    pub fn dim(&self) -> usize {
        self.n_fem() + self.n_bem()
    }

    pub fn block(&self, i: usize, j: usize) -> &Arc<PairBlock> {
        let (i, j) = (i.min(j), i.max(j));
        self.blocks[i * self.n_components() + j]
            .as_ref()
            .expect("all blocks i <= j are assembled")
    }

    /// Right-hand side `(f, 0)`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut g = self.rhs_fem.as_ref().clone();
        g.resize(self.dim(), 0.0);
        g
    }

    /// Surface-level products shared by the matvec: returns `(y_surface_edges, y_bem)`
    /// for the boundary part of `S` applied to trace `u` and potential `phi`.
    pub fn boundary_apply(&self, u: &[f64], phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = &self.surface;
        let nc = self.n_components();
        let z = self.dc.matvec(u);
        let mut vz = vec![0.0; s.n_triangles()];
        let mut kphi = vec![0.0; s.n_triangles()];
        let mut yb = vec![0.0; s.n_vertices()];
        let to = &s.triangle_offsets;
        let vo = &s.vertex_offsets;
        for i in 0..nc {
            for j in i..nc {
                let b = self.block(i, j);
                let (ti, tj) = (to[i]..to[i + 1], to[j]..to[j + 1]);
                let (vi, vj) = (vo[i]..vo[i + 1], vo[j]..vo[j + 1]);
                dense_matvec_add(&b.v0, 1.0, &z[tj.clone()], &mut vz[ti.clone()]);
                dense_matvec_add(&b.kl, 1.0, &phi[vj.clone()], &mut kphi[ti.clone()]);
                dense_tr_matvec_add(&b.kl, -1.0, &z[ti.clone()], &mut yb[vj.clone()]);
                dense_matvec_add(&b.w, -1.0, &phi[vj.clone()], &mut yb[vi.clone()]);
                if i != j {
                    dense_tr_matvec_add(&b.v0, 1.0, &z[ti.clone()], &mut vz[tj.clone()]);
                    dense_matvec_add(&b.kl_rev, 1.0, &phi[vi.clone()], &mut kphi[tj.clone()]);
                    dense_tr_matvec_add(&b.kl_rev, -1.0, &z[tj.clone()], &mut yb[vi.clone()]);
                    dense_tr_matvec_add(&b.w, -1.0, &phi[vi.clone()], &mut yb[vj.clone()]);
                }
            }
        }
        for t in 0..s.n_triangles() {
            let m = self.jump[t] * s.areas[t] / 3.0;
            for &v in &s.triangles[t] {
                kphi[t] += m * phi[v];
                yb[v] -= m * z[t];
            }
        }
        let diff: Vec<f64> = vz.iter().zip(&kphi).map(|(a, b)| a - b).collect();
        (self.dc.tr_matvec(&diff), yb)
    }

    /// Dense copy of `S`, for small fixtures.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                let mut y = vec![0.0; n];
                self.apply(&e, &mut y);
                y
            })
            .collect();
        DMatrix::from_fn(n, n, |r, c| cols[c][r])
    }

    /// Splits a solution into the trace `R a` and the potential `φ`.
    pub fn boundary_data(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (xf, xb) = x.split_at(self.n_fem());
        (self.restriction.restrict(xf), xb[..self.n_bem()].to_vec())
    }

    /// Component of each unknown of `S`: FEM dofs by edge, BEM dofs by vertex.
    /// Removes from `x` its components along the gradient kernel `(G ψ, 0)` and the
    /// per-component constants `(0, 1)`.
    pub fn remove_trivial_kernel(&self, x: &mut [f64]) {
        let n = self.n_fem();
        let g = fem::discrete_gradient(&self.mesh);
        fem::remove_gradients(&self.mesh, &g, &g.gram(None), &mut x[..n]);
        let s = &self.surface;
        for c in 0..s.n_components {
            let phi = &mut x[n + s.vertex_offsets[c]..n + s.vertex_offsets[c + 1]];
            let mean = phi.iter().sum::<f64>() / phi.len() as f64;
            phi.iter_mut().for_each(|v| *v -= mean);
        }
    }

    pub fn partition(&self) -> Vec<usize> {
        let mut edge_comp = vec![0usize; self.n_fem()];
        for (t, d) in self.space.dofs.iter().enumerate() {
            for &e in d {
                edge_comp[e] = self.mesh.component[t];
            }
        }
        let s = &self.surface;
        edge_comp.extend((0..s.n_vertices()).map(|v| s.vertex_component(v)));
        edge_comp
    }
}

impl Operator for CoupledSystem {
    fn dim(&self) -> usize {
        CoupledSystem::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nf = self.n_fem();
        let (xf, xb) = x.split_at(nf);
        let u = self.restriction.restrict(xf);
        let (ys, yb) = self.boundary_apply(&u, xb);
        let (yf, ybo) = y.split_at_mut(nf);
        yf.copy_from_slice(&self.a.matvec(xf));
        self.restriction.extend_add(&ys, yf);
        ybo.copy_from_slice(&yb);
    }
}

/// `S` extended by cohomology columns `F` and the block `H`:
/// `[[S, F], [Fᵀ, H]]`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub base: CoupledSystem,
    pub sheets: Vec<CurrentSheet>,
    /// Columns of `F`, each of length `dim(S)`.
    pub f: Vec<Vec<f64>>,
    pub h: DMatrix<f64>,
    h_inv: DMatrix<f64>,
}

/// Adds current-sheet unknowns. With no sheets the base system is returned unchanged inside.
pub fn augment_system(base: CoupledSystem, sheets: Vec<CurrentSheet>) -> Result<AugmentedSystem> {
    let s = base.surface.clone();
    let m = sheets.len();
    let etas: Vec<Vec<f64>> = sheets.iter().map(|sh| sh.eta.clone()).collect();
    let (v_eta, k_eta) = if m > 0 {
        bem::apply_rt_operators(&s, &base.options.bem, &etas)
    } else {
        (Vec::new(), Vec::new())
    };
    let ident = bem::trace_pairing(&s);
    let g = bem::assemble_topological_gradient(&s);
    let gvol = fem::discrete_gradient(&base.mesh);
    let lap = gvol.gram(None);
    let mut f = Vec::with_capacity(m);
    for k in 0..m {
        // (K − Id)ᵀ η with the symmetric principal value and the exterior jump ½.
        let i_eta = ident.tr_matvec(&etas[k]);
        let trace: Vec<f64> = k_eta[k].iter().zip(&i_eta).map(|(a, b)| a - 0.5 * b).collect();
        let mut col = vec![0.0; base.n_fem()];
        base.restriction.extend_add(&trace, &mut col);
        // Orthogonal to ker S.
        fem::remove_gradients(&base.mesh, &gvol, &lap, &mut col);
        col.extend(g.tr_matvec(&v_eta[k]).into_iter().map(|v| -v));
        f.push(col);
    }
    let h = DMatrix::from_fn(m, m, |a, b| {
        let x: f64 = etas[a].iter().zip(&v_eta[b]).map(|(p, q)| p * q).sum();
        let y: f64 = etas[b].iter().zip(&v_eta[a]).map(|(p, q)| p * q).sum();
        -0.5 * (x + y)
    });
    let h_inv = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let svd = h.clone().svd(false, false);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            return Err(Error::SingularSheets);
        }
        h.clone().try_inverse().ok_or(Error::SingularSheets)?
    };
    Ok(AugmentedSystem {
        base,
        sheets,
        f,
        h,
        h_inv,
    })
}

impl AugmentedSystem {
    pub fn n_sheets(&self) -> usize {
        self.sheets.len()
    }

    /// Right-hand side `(f, 0, 0)` of the extended system.
    pub fn rhs(&self) -> Vec<f64> {
        let mut g = self.base.rhs();
        g.resize(self.base.dim() + self.n_sheets(), 0.0);
        g
    }

    /// Sheet amplitudes `α = −H⁻¹ Fᵀ x` recovered from a Schur-form solution.
    pub fn sheet_amplitudes(&self, x: &[f64]) -> Vec<f64> {
        let ftx = nalgebra::DVector::from_iterator(
            self.n_sheets(),
            self.f.iter().map(|c| crate::sparse::dot(c, &x[..c.len()])),
        );
        (-(&self.h_inv * ftx)).iter().copied().collect()
    }

    /// Full Neumann datum `λ = G φ + Σ α_m η_m` in RT coefficients.
    pub fn neumann_datum(&self, phi: &[f64], alpha: &[f64]) -> Vec<f64> {
        let g = bem::assemble_topological_gradient(&self.base.surface);
        let mut lambda = g.matvec(phi);
        for (sh, a) in self.sheets.iter().zip(alpha) {
            crate::sparse::axpy(*a, &sh.eta, &mut lambda);
        }
        lambda
    }

    /// The Schur-complement operator `Ŝ = S − F H⁻¹ Fᵀ`, applied without materializing it.
    pub fn schur(&self) -> SchurOperator<'_> {
        SchurOperator { sys: self }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = Operator::dim(self);
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|c| {
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                let mut y = vec![0.0; n];
                self.apply(&e, &mut y);
                y
            })
            .collect();
        DMatrix::from_fn(n, n, |r, c| cols[c][r])
    }
}

impl Operator for AugmentedSystem {
    fn dim(&self) -> usize {
        self.base.dim() + self.n_sheets()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.base.dim();
        let (xs, xa) = x.split_at(n);
        let (ys, ya) = y.split_at_mut(n);
        self.base.apply(xs, ys);
        for (k, col) in self.f.iter().enumerate() {
            crate::sparse::axpy(xa[k], col, ys);
            ya[k] = crate::sparse::dot(col, xs);
            for l in 0..self.n_sheets() {
                ya[k] += self.h[(k, l)] * xa[l];
            }
        }
    }
}

/// Rank-`M` corrected operator of the Schur form.
#[derive(Debug, Clone, Copy)]
pub struct SchurOperator<'a> {
    sys: &'a AugmentedSystem,
}

impl Operator for SchurOperator<'_> {
    fn dim(&self) -> usize {
        self.sys.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.sys.base.apply(x, y);
        let alpha = self.sys.sheet_amplitudes(x);
        for (col, a) in self.sys.f.iter().zip(alpha) {
            crate::sparse::axpy(a, col, y);
        }
    }
}
