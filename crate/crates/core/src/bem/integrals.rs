//! Galerkin pair integrals of the Laplace kernel `U(z) = 1/(4π|z|)` over flat triangles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::{PairKind, PairRule, TriangleRule};

const FOUR_PI: f64 = 4.0 * PI;

/// A surface triangle with the data needed by the kernels.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub p: [Point; 3],
    pub normal: Point,
    pub area: f64,
    /// Surface vertex ids; shared ids select the singular rules.
    pub verts: [usize; 3],
    /// Raviart–Thomas orientation signs of the local edges.
    pub signs: [f64; 3],
    pub centroid: Point,
    pub diam: f64,
}

impl Panel {
    pub fn from_surface(s: &SurfaceMesh, t: usize) -> Self {
        let p = s.triangle_points(t);
        Self {
            p,
            normal: s.normals[t],
            area: s.areas[t],
            verts: s.triangles[t],
            signs: s.triangle_edge_signs[t],
            centroid: (p[0] + p[1] + p[2]) / 3.0,
            diam: s.diameter(t),
        }
    }

    /// Local Raviart–Thomas function `s_k (x − p_k) / (2|T|)`.
    #[inline]
    pub fn rt(&self, k: usize, x: &Point) -> Point {
        (x - self.p[k]) * (self.signs[k] / (2.0 * self.area))
    }

    #[inline]
    fn at(&self, l: &[f64; 3]) -> Point {
        self.p[0] * l[0] + self.p[1] * l[1] + self.p[2] * l[2]
    }
}

/// Panels of one component, possibly in moved coordinates.
#[derive(Debug, Clone)]
pub struct PanelSet {
    pub panels: Vec<Panel>,
    /// First surface vertex id of the owning component; vertex columns are local to it.
    pub vertex_offset: usize,
    pub n_vertices: usize,
}

impl PanelSet {
    pub fn component(s: &SurfaceMesh, c: usize) -> Self {
        Self {
            panels: (s.triangle_offsets[c]..s.triangle_offsets[c + 1])
                .map(|t| Panel::from_surface(s, t))
                .collect(),
            vertex_offset: s.vertex_offsets[c],
            n_vertices: s.vertex_offsets[c + 1] - s.vertex_offsets[c],
        }
    }

    pub fn whole(s: &SurfaceMesh) -> Self {
        Self {
            panels: (0..s.n_triangles()).map(|t| Panel::from_surface(s, t)).collect(),
            vertex_offset: 0,
            n_vertices: s.n_vertices(),
        }
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }
}

/// Quadrature orders of the pair integrals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BemOptions {
    /// Gauss points per direction in the Sauter–Schwab transforms.
    pub singular_order: usize,
    /// Gauss points per direction of the conical rule used for close pairs.
    pub near_order: usize,
    /// Polynomial degree of the symmetric rule used for distant pairs.
    pub far_degree: usize,
    /// Pairs with centroid distance below `near_ratio` times the larger diameter are close.
    pub near_ratio: f64,
}

impl Default for BemOptions {
    fn default() -> Self {
        Self {
            singular_order: 4,
            near_order: 4,
            far_degree: 4,
            near_ratio: 2.0,
        }
    }
}

/// Pre-built pair rules for one set of options.
#[derive(Debug, Clone)]
pub struct Rules {
    identical: PairRule,
    edge: PairRule,
    vertex: PairRule,
    near: PairRule,
    far: PairRule,
    near_ratio: f64,
}

impl Rules {
    pub fn new(o: &BemOptions) -> Self {
        let n = TriangleRule::conical(o.near_order);
        let f = TriangleRule::symmetric(o.far_degree);
        Self {
            identical: PairRule::sauter_schwab(PairKind::Identical, o.singular_order),
            edge: PairRule::sauter_schwab(PairKind::CommonEdge, o.singular_order),
            vertex: PairRule::sauter_schwab(PairKind::CommonVertex, o.singular_order),
            near: PairRule::product(&n, &n),
            far: PairRule::product(&f, &f),
            near_ratio: o.near_ratio,
        }
    }
}

/// Which kernels to integrate.
#[derive(Debug, Clone, Copy, Default)]
pub struct Wanted {
    pub rt: bool,
    pub kl: bool,
    pub kpv: bool,
}

/// Local integrals of one ordered pair (test panel `a`, trial panel `b`).
#[derive(Debug, Clone, Copy, Default)]
pub struct PairIntegrals {
    /// `∫∫ U`.
    pub v0: f64,
    /// `∫∫ U φa_k · φb_l`.
    pub vrt: [[f64; 3]; 3],
    /// `∫_a ∫_b ∂_{n_y} U(x − y) λ_l(y)`.
    pub kl_ab: [f64; 3],
    /// `∫_b ∫_a ∂_{n_y} U(x − y) λ_k(y)` with `x` on `b`.
    pub kl_ba: [f64; 3],
    /// `∫∫ ∇_x U(x − y) · (φa_k(x) × φb_l(y))`.
    pub kpv: [[f64; 3]; 3],
}

fn classify(a: &Panel, b: &Panel) -> (PairKind, [usize; 3], [usize; 3]) {
    let mut shared = [(0usize, 0usize); 3];
    let mut n = 0;
    for i in 0..3 {
        for j in 0..3 {
            if a.verts[i] == b.verts[j] {
                shared[n] = (i, j);
                n += 1;
            }
        }
    }
    let rest = |used: &[usize]| -> Vec<usize> { (0..3).filter(|k| !used.contains(k)).collect() };
    match n {
        3 => {
            // Same vertex order on both panels.
            let pb = [shared.iter().find(|s| s.0 == 0).unwrap().1,
                shared.iter().find(|s| s.0 == 1).unwrap().1,
                shared.iter().find(|s| s.0 == 2).unwrap().1];
            (PairKind::Identical, [0, 1, 2], pb)
        }
        2 => {
            let (i0, j0) = shared[0];
            let (i1, j1) = shared[1];
            let ra = rest(&[i0, i1])[0];
            let rb = rest(&[j0, j1])[0];
            (PairKind::CommonEdge, [i0, i1, ra], [j0, j1, rb])
        }
        1 => {
            let (i0, j0) = shared[0];
            let ra = rest(&[i0]);
            let rb = rest(&[j0]);
            (PairKind::CommonVertex, [i0, ra[0], ra[1]], [j0, rb[0], rb[1]])
        }
        _ => (PairKind::Far, [0, 1, 2], [0, 1, 2]),
    }
}

#[inline]
fn bary(perm: &[usize; 3], st: &[f64; 2]) -> [f64; 3] {
    let mut l = [0.0; 3];
    l[perm[0]] = 1.0 - st[0] - st[1];
    l[perm[1]] = st[0];
    l[perm[2]] = st[1];
    l
}

/// Integrates the requested kernels over one pair of panels.
pub fn pair_integrals(a: &Panel, b: &Panel, rules: &Rules, want: Wanted) -> PairIntegrals {
    let (mut kind, pa, pb) = classify(a, b);
    if kind == PairKind::Far {
        let d = (a.centroid - b.centroid).norm();
        if d < rules.near_ratio * a.diam.max(b.diam) {
            kind = PairKind::Near;
        }
    }
    let rule = match kind {
        PairKind::Identical => &rules.identical,
        PairKind::CommonEdge => &rules.edge,
        PairKind::CommonVertex => &rules.vertex,
        PairKind::Near => &rules.near,
        PairKind::Far => &rules.far,
    };
    let scale = a.area * b.area;
    let mut out = PairIntegrals::default();
    // Flat panels in one plane contribute nothing to the normal-derivative kernels.
    let coplanar = kind == PairKind::Identical
        || (a.normal.dot(&b.normal) > 1.0 - 1e-14 && (b.centroid - a.centroid).dot(&a.normal).abs() < 1e-14 * a.diam);
    let want_kl = want.kl && !coplanar;
    let want_kpv = want.kpv && !coplanar;
    for q in 0..rule.len() {
        let la = bary(&pa, &rule.test[q]);
        let lb = bary(&pb, &rule.trial[q]);
        let x = a.at(&la);
        let y = b.at(&lb);
        let d = x - y;
        let r2 = d.norm_squared();
        let r = r2.sqrt();
        let w = rule.weights[q] * scale;
        let u = 1.0 / (FOUR_PI * r);
        out.v0 += w * u;
        if want.rt {
            let fa = [a.rt(0, &x), a.rt(1, &x), a.rt(2, &x)];
            let fb = [b.rt(0, &y), b.rt(1, &y), b.rt(2, &y)];
            for k in 0..3 {
                for l in 0..3 {
                    out.vrt[k][l] += w * u * fa[k].dot(&fb[l]);
                }
            }
        }
        if want_kl || want_kpv {
            // (x − y) / (4π r³)
            let g = d * (u / r2);
            if want_kl {
                let gb = w * b.normal.dot(&g);
                let ga = -w * a.normal.dot(&g);
                for k in 0..3 {
                    out.kl_ab[k] += gb * lb[k];
                    out.kl_ba[k] += ga * la[k];
                }
            }
            if want_kpv {
                let fa = [a.rt(0, &x), a.rt(1, &x), a.rt(2, &x)];
                let fb = [b.rt(0, &y), b.rt(1, &y), b.rt(2, &y)];
                for k in 0..3 {
                    for l in 0..3 {
                        out.kpv[k][l] -= w * g.dot(&fa[k].cross(&fb[l]));
                    }
                }
            }
        }
    }
    out
}

/// Visits all pairs `(i, j)` of a block, calling `f` in a fixed order per row chunk.
///
/// With `symmetric`, only `j >= i` is integrated and both sets must be the same.
pub fn for_each_pair<F>(
    test: &PanelSet,
    trial: &PanelSet,
    symmetric: bool,
    rules: &Rules,
    want: Wanted,
    mut f: F,
) where
    F: FnMut(usize, usize, &PairIntegrals),
{
    const CHUNK: usize = 32;
    let n = test.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK * rayon::current_num_threads()).min(n);
        let rows: Vec<Vec<PairIntegrals>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let j0 = if symmetric { i } else { 0 };
                (j0..trial.len())
                    .map(|j| pair_integrals(&test.panels[i], &trial.panels[j], rules, want))
                    .collect()
            })
            .collect();
        for (r, row) in rows.iter().enumerate() {
            let i = start + r;
            let j0 = if symmetric { i } else { 0 };
            for (k, p) in row.iter().enumerate() {
                f(i, j0 + k, p);
            }
        }
        start = end;
    }
}

/// Dense blocks between two panel sets: P0 single layer and the P0×P1 double layer.
#[derive(Debug, Clone)]
pub struct ScalarBlocks {
    /// `V0[i, j] = ∫∫ U` over test panel `i` and trial panel `j`.
    pub v0: DMatrix<f64>,
    /// `KL[i, v] = ∫_i ∫ ∂_{n_y} U λ_v` with `v` a vertex of the trial set.
    pub kl: DMatrix<f64>,
    /// The same with roles swapped: test panels of the trial set, vertices of the test set.
    pub kl_rev: DMatrix<f64>,
}

pub fn scalar_blocks(test: &PanelSet, trial: &PanelSet, same: bool, rules: &Rules) -> ScalarBlocks {
    let (m, n) = (test.len(), trial.len());
    let mut v0 = DMatrix::zeros(m, n);
    let mut kl = DMatrix::zeros(m, trial.n_vertices);
    let mut kl_rev = DMatrix::zeros(n, test.n_vertices);
    let want = Wanted { rt: false, kl: true, kpv: false };
    for_each_pair(test, trial, same, rules, want, |i, j, p| {
        v0[(i, j)] = p.v0;
        let (a, b) = (&test.panels[i], &trial.panels[j]);
        for k in 0..3 {
            kl[(i, b.verts[k] - trial.vertex_offset)] += p.kl_ab[k];
        }
        if same {
            v0[(j, i)] = p.v0;
            if i != j {
                for k in 0..3 {
                    kl[(j, a.verts[k] - test.vertex_offset)] += p.kl_ba[k];
                }
            }
        } else {
            for k in 0..3 {
                kl_rev[(j, a.verts[k] - test.vertex_offset)] += p.kl_ba[k];
            }
        }
    });
    if same {
        kl_rev = kl.clone();
    }
    ScalarBlocks { v0, kl, kl_rev }
}

/// Laplace solid angle subtended by a triangle at `x`, divided by 4π (Van Oosterom–Strackee).
pub fn solid_angle(p: &[Point; 3], x: &Point) -> f64 {
    let a = p[0] - x;
    let b = p[1] - x;
    let c = p[2] - x;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den) / FOUR_PI
}
