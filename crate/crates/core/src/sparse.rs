//! Compressed sparse row storage with order-independent triplet assembly.

use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries in insertion order after a stable sort, so the result
    /// only depends on the triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let s = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[s.clone()], &self.values[s])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (idx, val) = self.row(r);
        idx.binary_search(&c).map(|k| val[k]).unwrap_or(0.0)
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .into_par_iter()
            .with_min_len(256)
            .map(|r| {
                let (idx, val) = self.row(r);
                idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `y += alpha · self · x`.
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(y.len(), self.nrows);
        y.par_iter_mut()
            .with_min_len(256)
            .enumerate()
            .for_each(|(r, yr)| {
                let (idx, val) = self.row(r);
                let s: f64 = idx.iter().zip(val).map(|(&c, &v)| v * x[c]).sum();
                *yr += alpha * s;
            });
    }

    /// `y = selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            t.extend(idx.iter().zip(val).map(|(&c, &v)| (c, r, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// `selfᵀ · diag(d) · self` for a diagonal `d` of length `nrows`.
    pub fn gram(&self, d: Option<&[f64]>) -> Self {
        let mut t = Vec::new();
        for r in 0..self.nrows {
            let w = d.map_or(1.0, |d| d[r]);
            let (idx, val) = self.row(r);
            for (&a, &va) in idx.iter().zip(val) {
                for (&b, &vb) in idx.iter().zip(val) {
                    t.push((a, b, w * va * vb));
                }
            }
        }
        Self::from_triplets(self.ncols, self.ncols, t)
    }
}

/// `y = m · x` for a dense matrix, parallel over rows.
pub fn dense_matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    let mut y = vec![0.0; m.nrows()];
    dense_matvec_add(m, 1.0, x, &mut y);
    y
}

/// `y += alpha · m · x`.
pub fn dense_matvec_add(m: &DMatrix<f64>, alpha: f64, x: &[f64], y: &mut [f64]) {
    let nr = m.nrows();
    const CHUNK: usize = 64;
    y.par_chunks_mut(CHUNK).enumerate().for_each(|(k, yc)| {
        let r0 = k * CHUNK;
        let mut acc = vec![0.0; yc.len()];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            let col = &m.as_slice()[c * nr + r0..c * nr + r0 + yc.len()];
            for (a, &v) in acc.iter_mut().zip(col) {
                *a += v * xc;
            }
        }
        for (yv, a) in yc.iter_mut().zip(acc) {
            *yv += alpha * a;
        }
    });
}

/// `y += alpha · mᵀ · x`, parallel over columns.
pub fn dense_tr_matvec_add(m: &DMatrix<f64>, alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(m.nrows(), x.len());
    let nr = m.nrows();
    y.par_iter_mut()
        .with_min_len(16)
        .enumerate()
        .for_each(|(c, yc)| {
            let col = &m.as_slice()[c * nr..(c + 1) * nr];
            *yc += alpha * col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        });
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(1, 0, 2.0), (0, 1, 1.0), (1, 0, 3.0)]);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn products_match_dense() {
        let t = vec![(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0), (2, 0, 4.0), (2, 2, 0.5)];
        let m = CsrMatrix::from_triplets(3, 3, t);
        let d = m.to_dense();
        let x = [1.0, -1.0, 2.0];
        let y = m.matvec(&x);
        let yd = &d * nalgebra::DVector::from_column_slice(&x);
        let yt = m.tr_matvec(&x);
        let ytd = d.transpose() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..3 {
            assert_eq!(y[i], yd[i]);
            assert_eq!(yt[i], ytd[i]);
            assert_eq!(dense_matvec(&d, &x)[i], yd[i]);
        }
        assert_eq!(m.transpose().to_dense(), d.transpose());
    }
}
