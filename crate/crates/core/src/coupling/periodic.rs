//! Block-circulant structure of rotationally periodic arrangements.

use nalgebra::DMatrix;

use crate::bem::{for_each_pair, BemOptions, PanelSet, Rules, Wanted};
use crate::error::{Error, Result};
use crate::mesh::{generate, Point, SurfaceMesh};
use crate::sparse::dense_matvec_add;

/// `y = C x` for the block-circulant `C` with first block row `blocks`:
/// block `(k, j)` is `blocks[(j − k) mod n]`.
pub fn circulant_matvec(blocks: &[DMatrix<f64>], x: &[f64]) -> Result<Vec<f64>> {
    let n = blocks.len();
    if n == 0 {
        return Err(Error::Dimension("no circulant blocks".into()));
    }
    let (r, c) = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != (r, c)) {
        return Err(Error::Dimension("circulant blocks differ in shape".into()));
    }
    if x.len() != n * c {
        return Err(Error::Dimension(format!(
            "vector of length {} does not split into {n} segments of {c}",
            x.len()
        )));
    }
    let mut y = vec![0.0; n * r];
    for k in 0..n {
        for j in 0..n {
            dense_matvec_add(&blocks[(j + n - k) % n], 1.0, &x[j * c..(j + 1) * c], &mut y[k * r..(k + 1) * r]);
        }
    }
    Ok(y)
}

/// Explicit block-circulant matrix, for checks.
pub fn materialize_circulant(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.len();
    let (r, c) = blocks[0].shape();
    let mut m = DMatrix::zeros(n * r, n * c);
    for k in 0..n {
        for j in 0..n {
            m.view_mut((k * r, j * c), (r, c)).copy_from(&blocks[(j + n - k) % n]);
        }
    }
    m
}

/// Single-sector product `(Σ_i V_{1,i}) x` under periodic excitation.
pub fn periodic_reduce(blocks: &[DMatrix<f64>], x_master: &[f64]) -> Result<Vec<f64>> {
    let (r, c) = blocks
        .first()
        .map(|b| b.shape())
        .ok_or_else(|| Error::Dimension("no circulant blocks".into()))?;
    if x_master.len() != c {
        return Err(Error::Dimension(format!("master vector has length {}, expected {c}", x_master.len())));
    }
    let mut y = vec![0.0; r];
    for b in blocks {
        dense_matvec_add(b, 1.0, x_master, &mut y);
    }
    Ok(y)
}

/// Copy `k` of `n` sectors: the master surface rotated by `2πk/n` about `axis` through the origin.
pub fn sector_copy(master: &SurfaceMesh, n: usize, k: usize, axis: &Point) -> SurfaceMesh {
    let rot = generate::rotation_axis(axis, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
    let mut s = master.clone();
    for c in 0..s.n_components {
        s.transform_component(c, &rot, &Point::zeros());
    }
    s
}

fn panels_with_offset(s: &SurfaceMesh, offset: usize) -> PanelSet {
    let mut set = PanelSet::whole(s);
    for p in &mut set.panels {
        p.verts = p.verts.map(|v| v + offset);
    }
    set.vertex_offset += offset;
    set
}

/// Maxwell single layer between sector copies `i` (test) and `j` (trial) of `n`.
pub fn assemble_sector_block(
    master: &SurfaceMesh,
    n: usize,
    i: usize,
    j: usize,
    axis: &Point,
    opts: &BemOptions,
) -> DMatrix<f64> {
    let si = sector_copy(master, n, i, axis);
    let sj = sector_copy(master, n, j, axis);
    let nv = master.n_vertices();
    let a = panels_with_offset(&si, i * nv);
    let b = panels_with_offset(&sj, j * nv);
    let rules = Rules::new(opts);
    let ne = master.n_edges();
    let mut m = DMatrix::zeros(ne, ne);
    let want = Wanted { rt: true, ..Default::default() };
    for_each_pair(&a, &b, i == j, &rules, want, |p, q, r| {
        let (ep, eq) = (&master.triangle_edges[p], &master.triangle_edges[q]);
        for k in 0..3 {
            for l in 0..3 {
                m[(ep[k], eq[l])] += r.vrt[k][l];
                if i == j && p != q {
                    m[(eq[l], ep[k])] += r.vrt[k][l];
                }
            }
        }
    });
    m
}
