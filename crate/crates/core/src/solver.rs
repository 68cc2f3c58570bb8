//! Preconditioned MINRES and the block-diagonal preconditioner of the coupled system.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bem::assemble_topological_gradient;
use crate::coupling::{AugmentedSystem, CoupledSystem};
use crate::error::{Error, Result};
use crate::fem::{self, element_mass};
use crate::sparse::{axpy, dense_matvec, dot, norm, CsrMatrix};

/// Linear map `y = A x` on vectors of length `dim`.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl Operator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.matvec(x));
    }
}

impl Operator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&dense_matvec(self, x));
    }
}

/// The identity on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Identity(pub usize);

impl Operator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Start vector policy for sequences of solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Reuse the previous solution.
    Warm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative residual in the preconditioned norm, `0 < tol < 1`.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 2000,
            initial_guess: InitialGuess::Zero,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("solver tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual in the preconditioned norm, starting with the initial guess.
    pub residuals: Vec<f64>,
    /// Wall time in seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

/// MINRES for symmetric `op` with symmetric positive definite `precond`.
///
/// Residuals are relative to the preconditioned norm of `rhs`. On non-convergence the
/// error carries the last iterate.
pub fn minres(
    op: &dyn Operator,
    precond: &dyn Operator,
    rhs: &[f64],
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    let n = op.dim();
    if rhs.len() != n || precond.dim() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::Dimension(format!("MINRES on a system of size {n}")));
    }
    let start = Instant::now();
    let mut report = SolveReport::default();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);

    let mut y = vec![0.0; n];
    precond.apply(rhs, &mut y);
    let bnorm = dot(rhs, &y).sqrt();
    if bnorm == 0.0 {
        report.residuals.push(0.0);
        report.timings.insert("solve".into(), start.elapsed().as_secs_f64());
        return Ok((vec![0.0; n], report));
    }
    if !bnorm.is_finite() {
        return Err(Error::Breakdown(0, "preconditioned right-hand side is not finite".into()));
    }

    let mut r1 = rhs.to_vec();
    if x0.is_some() {
        op.apply(&x, &mut y);
        r1.iter_mut().zip(&y).for_each(|(r, a)| *r -= a);
    }
    precond.apply(&r1, &mut y);
    let mut beta = dot(&r1, &y);
    if beta < 0.0 {
        return Err(Error::NotPositiveDefinite("preconditioner gave a negative inner product".into()));
    }
    beta = beta.sqrt();
    let mut phibar = beta;
    report.residuals.push(phibar / bnorm);
    if phibar / bnorm <= cfg.tol {
        report.timings.insert("solve".into(), start.elapsed().as_secs_f64());
        return Ok((x, report));
    }

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let (mut dbar, mut epsln) = (0.0, 0.0);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];

    for itn in 1..=cfg.max_iter {
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(v, y)| *v = s * y);
        op.apply(&v, &mut av);
        if itn >= 2 {
            let f = beta / oldb;
            av.iter_mut().zip(&r1).for_each(|(a, r)| *a -= f * r);
        }
        let alfa = dot(&v, &av);
        let f = alfa / beta;
        av.iter_mut().zip(&r2).for_each(|(a, r)| *a -= f * r);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        precond.apply(&r2, &mut y);
        oldb = beta;
        let b2 = dot(&r2, &y);
        if b2 < 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "preconditioner gave a negative inner product at iteration {itn}"
            )));
        }
        beta = b2.sqrt();
        if !(alfa.is_finite() && beta.is_finite()) {
            return Err(Error::Breakdown(itn, "non-finite Lanczos coefficient".into()));
        }

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        // w ← (v − oldeps·w1 − delta·w2) / gamma with (w1, w2) the two previous directions.
        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v
            .par_iter()
            .zip(&w1)
            .zip(&w2)
            .map(|((v, a), b)| (v - oldeps * a - delta * b) / gamma)
            .collect();
        x.par_iter_mut().zip(&w).for_each(|(x, w)| *x += phi * w);

        report.iterations = itn;
        let rel = phibar / bnorm;
        report.residuals.push(rel);
        if !rel.is_finite() {
            return Err(Error::Breakdown(itn, "non-finite residual".into()));
        }
        if rel <= cfg.tol || beta == 0.0 {
            report.timings.insert("solve".into(), start.elapsed().as_secs_f64());
            return Ok((x, report));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual: phibar / bnorm,
        best: x,
    })
}

/// Solution of the (possibly sheet-augmented) coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Full unknown vector `(a, φ)`.
    pub x: Vec<f64>,
    /// Sheet amplitudes `α`.
    pub alpha: Vec<f64>,
    /// Dirichlet trace `R a` on surface edges.
    pub trace: Vec<f64>,
    /// Neumann datum `λ = G φ + Σ α η` in RT coefficients.
    pub lambda: Vec<f64>,
    pub report: SolveReport,
}

impl Solution {
    pub fn fem_part<'a>(&'a self, sys: &CoupledSystem) -> &'a [f64] {
        &self.x[..sys.n_fem()]
    }

    pub fn phi<'a>(&'a self, sys: &CoupledSystem) -> &'a [f64] {
        &self.x[sys.n_fem()..]
    }
}

/// Solves `S x = g` with MINRES.
pub fn solve_coupled(
    sys: &CoupledSystem,
    precond: &dyn Operator,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    let (x, report) = minres(sys, precond, &sys.rhs(), cfg, x0)?;
    let (trace, phi) = sys.boundary_data(&x);
    let lambda = assemble_topological_gradient(&sys.surface).matvec(&phi);
    Ok(Solution {
        x,
        alpha: Vec::new(),
        trace,
        lambda,
        report,
    })
}

/// Solves the sheet-augmented system in Schur form `Ŝ x = g` and recovers `α`.
pub fn solve_augmented(
    aug: &AugmentedSystem,
    precond: &dyn Operator,
    cfg: &SolverConfig,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    let (x, report) = minres(&aug.schur(), precond, &aug.base.rhs(), cfg, x0)?;
    let alpha = aug.sheet_amplitudes(&x);
    let (trace, phi) = aug.base.boundary_data(&x);
    let lambda = aug.neumann_datum(&phi, &alpha);
    Ok(Solution {
        x,
        alpha,
        trace,
        lambda,
        report,
    })
}

/// Orthonormal basis of the kernel of `S` beyond gradients and constants: the span of
/// `Ŝ⁻¹ F_m`, one vector per current sheet.
pub fn harmonic_kernel(aug: &AugmentedSystem, precond: &dyn Operator, cfg: &SolverConfig) -> Result<Vec<Vec<f64>>> {
    let tight = SolverConfig {
        tol: 1e-13,
        ..cfg.clone()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in &aug.f {
        let (mut y, _) = minres(&aug.schur(), precond, col, &tight, None)?;
        aug.base.remove_trivial_kernel(&mut y);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &y);
                axpy(-c, b, &mut y);
            }
        }
        let n = norm(&y);
        if n == 0.0 {
            return Err(Error::SingularSheets);
        }
        y.iter_mut().for_each(|v| *v /= n);
        basis.push(y);
    }
    Ok(basis)
}

/// Solves `S x = g` without sheet unknowns. The part of `g` along the harmonic kernel, which
/// the scalar exterior potential cannot carry, is dropped; Ampère's law then fails on
/// loops linking the conductor.
pub fn solve_without_sheets(aug: &AugmentedSystem, precond: &dyn Operator, cfg: &SolverConfig) -> Result<Solution> {
    let mut g = aug.base.rhs();
    for b in harmonic_kernel(aug, precond, cfg)? {
        let c = dot(&b, &g);
        axpy(-c, &b, &mut g);
    }
    let (x, report) = minres(&aug.base, precond, &g, cfg, None)?;
    let (trace, phi) = aug.base.boundary_data(&x);
    let lambda = assemble_topological_gradient(&aug.base.surface).matvec(&phi);
    Ok(Solution {
        x,
        alpha: Vec::new(),
        trace,
        lambda,
        report,
    })
}

/// Zero-fill incomplete Cholesky factor `L Lᵀ ≈ A`, stored by rows including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteCholesky {
    l: CsrMatrix,
}

impl IncompleteCholesky {
    /// Fails on a non-positive pivot.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for i in 0..n {
            let (idx, val) = a.row(i);
            let row_start = indices.len();
            for (&k, &aik) in idx.iter().zip(val) {
                if k > i {
                    break;
                }
                // Σ_{j<k} L[i,j] L[k,j] over the common pattern; row i so far holds columns < k.
                let sum: f64 = if k == i {
                    values[row_start..].iter().map(|v| v * v).sum()
                } else {
                    let (mut q, qend) = (indptr[k], indptr[k + 1] - 1);
                    let mut acc = 0.0;
                    for p in row_start..indices.len() {
                        let j = indices[p];
                        while q < qend && indices[q] < j {
                            q += 1;
                        }
                        if q < qend && indices[q] == j {
                            acc += values[p] * values[q];
                        }
                    }
                    acc
                };
                if k == i {
                    let pivot = aik - sum;
                    if !(pivot > 0.0) || !pivot.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!("pivot {pivot:.3e} in row {i}")));
                    }
                    indices.push(i);
                    values.push(pivot.sqrt());
                } else {
                    let lkk = values[indptr[k + 1] - 1];
                    indices.push(k);
                    values.push((aik - sum) / lkk);
                }
            }
            if indices.last() != Some(&i) {
                return Err(Error::NotPositiveDefinite(format!("missing diagonal in row {i}")));
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            l: CsrMatrix {
                nrows: n,
                ncols: n,
                indptr,
                indices,
                values,
            },
        })
    }

    /// `z = (L Lᵀ)⁻¹ r`.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let mut y = r.to_vec();
        for i in 0..l.nrows {
            let (idx, val) = l.row(i);
            let m = idx.len() - 1;
            let s: f64 = idx[..m].iter().zip(&val[..m]).map(|(&j, v)| v * y[j]).sum();
            y[i] = (y[i] - s) / val[m];
        }
        for i in (0..l.nrows).rev() {
            let (idx, val) = l.row(i);
            let m = idx.len() - 1;
            y[i] /= val[m];
            let yi = y[i];
            for (&j, v) in idx[..m].iter().zip(&val[..m]) {
                y[j] -= v * yi;
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    Cholesky(IncompleteCholesky),
    /// Inverse absolute diagonal.
    Jacobi(Vec<f64>),
}

impl Factor {
    /// IC(0) of `A + α diag(A)`, with `α` raised from 0 until the factorization succeeds.
    fn new(a: &CsrMatrix) -> Self {
        let diag = a.diagonal();
        let mut alpha = 0.0;
        loop {
            let shifted = if alpha == 0.0 { a.clone() } else { add_diagonal(a, &diag, alpha) };
            match IncompleteCholesky::new(&shifted) {
                Ok(f) => return Factor::Cholesky(f),
                Err(e) if alpha >= 1.0 => {
                    log::warn!("{e}; falling back to the absolute diagonal");
                    return Factor::Jacobi(diag.iter().map(|d| inverse_abs(*d)).collect());
                }
                Err(_) => alpha = if alpha == 0.0 { 1e-3 } else { 2.0 * alpha },
            }
        }
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Factor::Cholesky(f) => f.solve(r),
            Factor::Jacobi(d) => r.iter().zip(d).map(|(r, d)| r * d).collect(),
        }
    }
}

fn add_diagonal(a: &CsrMatrix, diag: &[f64], alpha: f64) -> CsrMatrix {
    let mut m = a.clone();
    for r in 0..m.nrows {
        for p in m.indptr[r]..m.indptr[r + 1] {
            if m.indices[p] == r {
                m.values[p] += alpha * diag[r];
            }
        }
    }
    m
}

fn inverse_abs(d: f64) -> f64 {
    if d.abs() > 0.0 {
        1.0 / d.abs()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreconditionerOptions {
    /// Scale of the `μr⁻¹ h⁻²` mass shift that regularises the curl-curl kernel.
    pub shift: f64,
}

impl Default for PreconditionerOptions {
    fn default() -> Self {
        Self { shift: 0.1 }
    }
}

/// `diag(P_1, …, P_n, D_W⁻¹)` with one incomplete factorization per component.
///
/// Built from the FEM matrix and the diagonal boundary blocks only, so rigid motions of
/// components leave it valid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPreconditioner {
    n_fem: usize,
    blocks: Vec<(Vec<usize>, Factor)>,
    bem_inv_diag: Vec<f64>,
}

impl BlockPreconditioner {
    /// True if any FEM block fell back to the absolute diagonal.
    pub fn has_fallback(&self) -> bool {
        self.blocks.iter().any(|(_, f)| matches!(f, Factor::Jacobi(_)))
    }
}

impl Operator for BlockPreconditioner {
    fn dim(&self) -> usize {
        self.n_fem + self.bem_inv_diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let parts: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .map(|(dofs, f)| f.solve(&dofs.iter().map(|&d| x[d]).collect::<Vec<_>>()))
            .collect();
        for ((dofs, _), z) in self.blocks.iter().zip(parts) {
            for (&d, v) in dofs.iter().zip(z) {
                y[d] = v;
            }
        }
        for (k, d) in self.bem_inv_diag.iter().enumerate() {
            y[self.n_fem + k] = d * x[self.n_fem + k];
        }
    }
}

pub fn build_preconditioner(sys: &CoupledSystem) -> BlockPreconditioner {
    build_preconditioner_with(sys, &PreconditionerOptions::default())
}

/// FEM blocks: `A + Rᵀ Dcᵀ diag(V0) Dc R + δ Σ_T μr⁻¹ h_T⁻² M_T`. BEM block: `diag(W)`.
pub fn build_preconditioner_with(sys: &CoupledSystem, opts: &PreconditionerOptions) -> BlockPreconditioner {
    let mesh = &sys.mesh;
    let s = &sys.surface;
    let nc = sys.n_components();
    let nf = sys.n_fem();

    let shift = fem::assemble(mesh, &sys.space, |t| {
        let h = mesh.tet_diameter(t);
        let w = opts.shift / (mesh.material(t).mu_r * h * h);
        element_mass(&mesh.barycentric_gradients(t), mesh.tet_volume(t)).map(|r| r.map(|v| w * v))
    });

    let mut v0_diag = vec![0.0; s.n_triangles()];
    let mut w_diag = vec![0.0; s.n_vertices()];
    for c in 0..nc {
        let b = sys.block(c, c);
        let (to, vo) = (s.triangle_offsets[c], s.vertex_offsets[c]);
        for k in 0..b.v0.nrows() {
            v0_diag[to + k] = b.v0[(k, k)];
        }
        for k in 0..b.w.nrows() {
            w_diag[vo + k] = b.w[(k, k)];
        }
    }
    let mut trip = Vec::new();
    for t in 0..s.n_triangles() {
        let (idx, val) = sys.dc.row(t);
        for (&p, &a) in idx.iter().zip(val) {
            for (&q, &b) in idx.iter().zip(val) {
                let (ep, eq) = (sys.restriction.volume_edge[p], sys.restriction.volume_edge[q]);
                trip.push((ep, eq, a * v0_diag[t] * b));
            }
        }
    }
    for m in [&*sys.a, &shift] {
        for r in 0..m.nrows {
            let (idx, val) = m.row(r);
            trip.extend(idx.iter().zip(val).map(|(&c, &v)| (r, c, v)));
        }
    }
    let full = CsrMatrix::from_triplets(nf, nf, trip);

    let part = sys.partition();
    let mut comp_dofs = vec![Vec::new(); nc];
    for (d, &c) in part[..nf].iter().enumerate() {
        comp_dofs[c].push(d);
    }
    let blocks = comp_dofs
        .into_par_iter()
        .map(|dofs| {
            let dofs = reverse_cuthill_mckee(&full, &dofs);
            let sub = submatrix(&full, &dofs, nf);
            let f = Factor::new(&sub);
            (dofs, f)
        })
        .collect();
    BlockPreconditioner {
        n_fem: nf,
        blocks,
        bem_inv_diag: w_diag.into_iter().map(inverse_abs).collect(),
    }
}

/// Reverse Cuthill–McKee order of `dofs` in the graph of `m`.
fn reverse_cuthill_mckee(m: &CsrMatrix, dofs: &[usize]) -> Vec<usize> {
    let n = m.nrows;
    let mut member = vec![false; n];
    dofs.iter().for_each(|&d| member[d] = true);
    let degree = |d: usize| m.row(d).0.iter().filter(|&&c| member[c]).count();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(dofs.len());
    let mut seeds: Vec<usize> = dofs.to_vec();
    seeds.sort_by_key(|&d| (degree(d), d));
    for &seed in &seeds {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut head = order.len();
        order.push(seed);
        while head < order.len() {
            let d = order[head];
            head += 1;
            let mut nb: Vec<usize> = m.row(d).0.iter().copied().filter(|&c| member[c] && !visited[c]).collect();
            nb.sort_by_key(|&c| (degree(c), c));
            for c in nb {
                visited[c] = true;
                order.push(c);
            }
        }
    }
    order.reverse();
    order
}

fn submatrix(m: &CsrMatrix, dofs: &[usize], n: usize) -> CsrMatrix {
    let mut local = vec![usize::MAX; n];
    for (k, &d) in dofs.iter().enumerate() {
        local[d] = k;
    }
    let mut t = Vec::new();
    for (k, &d) in dofs.iter().enumerate() {
        let (idx, val) = m.row(d);
        for (&c, &v) in idx.iter().zip(val) {
            if local[c] != usize::MAX {
                t.push((k, local[c], v));
            }
        }
    }
    CsrMatrix::from_triplets(dofs.len(), dofs.len(), t)
}
