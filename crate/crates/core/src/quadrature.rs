//! Quadrature rules on segments, triangles, tetrahedra and triangle pairs.
//!
//! Triangle rules are expressed on the standard simplex `{(s, t) : s, t >= 0, s + t <= 1}`
//! with weights that sum to one, so that `∫_T f ≈ |T| Σ w_i f(x_i)` for the affine map
//! `x = p0 + s (p1 - p0) + t (p2 - p0)`.
//!
//! Pair rules follow the same convention: `∫_T ∫_T' f ≈ |T| |T'| Σ w_i f(x_i, y_i)`.
//! The singular pair rules are the Sauter–Schwab relative-coordinate transforms. They
//! assume a fixed vertex layout of the two panels:
//!
//! * identical panels: same vertex order on both sides;
//! * common edge: the shared edge is `p0 -> p1` on both panels;
//! * common vertex: the shared vertex is `p0` on both panels.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A quadrature rule on the standard triangle.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric rules exact for polynomials of the given degree (1, 2, 4 or 5).
    pub fn symmetric(degree: usize) -> Self {
        match degree {
            0 | 1 => Self {
                points: vec![[1.0 / 3.0, 1.0 / 3.0]],
                weights: vec![1.0],
            },
            2 => Self {
                points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
                weights: vec![1.0 / 3.0; 3],
            },
            3 | 4 => {
                let a = 0.445_948_490_915_965;
                let wa = 0.223_381_589_678_011;
                let b = 0.091_576_213_509_771;
                let wb = 0.109_951_743_655_322;
                Self::from_orbits(&[], &[(a, wa), (b, wb)])
            }
            5 => {
                let a = 0.470_142_064_105_115;
                let wa = 0.132_394_152_788_506;
                let b = 0.101_286_507_323_456;
                let wb = 0.125_939_180_544_827;
                Self::from_orbits(&[0.225], &[(a, wa), (b, wb)])
            }
            _ => Self::conical((degree + 2) / 2),
        }
    }

    fn from_orbits(centroid: &[f64], orbits: &[(f64, f64)]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &w in centroid {
            points.push([1.0 / 3.0, 1.0 / 3.0]);
            weights.push(w);
        }
        for &(a, w) in orbits {
            let c = 1.0 - 2.0 * a;
            for p in [[a, a], [c, a], [a, c]] {
                points.push(p);
                weights.push(w);
            }
        }
        Self { points, weights }
    }

    /// Collapsed (Duffy) tensor Gauss rule with `n * n` points, exact to degree `2n - 2`.
    pub fn conical(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let s = x[i];
                let t = (1.0 - s) * x[j];
                points.push([s, t]);
                // Area of the standard triangle is 1/2; normalise to unit total weight.
                weights.push(2.0 * w[i] * w[j] * (1.0 - s));
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Four-point degree-2 rule on a tetrahedron, in barycentric coordinates; weights sum to one.
pub fn tet_degree2() -> ([[f64; 4]; 4], [f64; 4]) {
    let a = 0.585_410_196_624_968_5;
    let b = 0.138_196_601_125_010_5;
    (
        [[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
        [0.25; 4],
    )
}

/// Relative position of two panels, which selects the pair rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    Identical,
    CommonEdge,
    CommonVertex,
    Near,
    Far,
}

/// A rule over a product of two triangles.
#[derive(Debug, Clone)]
pub struct PairRule {
    pub test: Vec<[f64; 2]>,
    pub trial: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Tensor product of two regular triangle rules.
    pub fn product(a: &TriangleRule, b: &TriangleRule) -> Self {
        let mut test = Vec::with_capacity(a.len() * b.len());
        let mut trial = Vec::with_capacity(a.len() * b.len());
        let mut weights = Vec::with_capacity(a.len() * b.len());
        for (pa, wa) in a.points.iter().zip(&a.weights) {
            for (pb, wb) in b.points.iter().zip(&b.weights) {
                test.push(*pa);
                trial.push(*pb);
                weights.push(wa * wb);
            }
        }
        Self { test, trial, weights }
    }

    /// Sauter–Schwab rule for a singular configuration with `n` Gauss points per direction.
    pub fn sauter_schwab(kind: PairKind, n: usize) -> Self {
        let (g, gw) = gauss_legendre(n);
        let mut rule = Self {
            test: Vec::new(),
            trial: Vec::new(),
            weights: Vec::new(),
        };
        // Points are produced in the reference triangle {0 <= x2 <= x1 <= 1} (area 1/2),
        // then mapped to the standard simplex with s = x1 - x2, t = x2.
        let mut push = |x: [f64; 2], y: [f64; 2], w: f64| {
            rule.test.push([x[0] - x[1], x[1]]);
            rule.trial.push([y[0] - y[1], y[1]]);
            // Total measure of the reference pair is 1/4.
            rule.weights.push(4.0 * w);
        };
        for a in 0..n {
            let xi = g[a];
            for b in 0..n {
                let e1 = g[b];
                for c in 0..n {
                    let e2 = g[c];
                    for d in 0..n {
                        let e3 = g[d];
                        let w = gw[a] * gw[b] * gw[c] * gw[d];
                        match kind {
                            PairKind::Identical => {
                                let j = w * xi.powi(3) * e1 * e1 * e2;
                                let maps = [
                                    (
                                        [xi, xi * (1.0 - e1 + e1 * e2)],
                                        [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)],
                                    ),
                                    (
                                        [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)],
                                        [xi, xi * (1.0 - e1 + e1 * e2)],
                                    ),
                                    (
                                        [xi, xi * e1 * (1.0 - e2 + e2 * e3)],
                                        [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
                                    ),
                                    (
                                        [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
                                        [xi, xi * e1 * (1.0 - e2 + e2 * e3)],
                                    ),
                                    (
                                        [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
                                        [xi, xi * e1 * (1.0 - e2)],
                                    ),
                                    (
                                        [xi, xi * e1 * (1.0 - e2)],
                                        [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
                                    ),
                                ];
                                for (x, y) in maps {
                                    push(x, y, j);
                                }
                            }
                            PairKind::CommonEdge => {
                                let j1 = w * xi.powi(3) * e1 * e1;
                                let j2 = j1 * e2;
                                push(
                                    [xi, xi * e1 * e3],
                                    [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
                                    j1,
                                );
                                push(
                                    [xi, xi * e1],
                                    [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
                                    j2,
                                );
                                push(
                                    [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)],
                                    [xi, xi * e1 * e2 * e3],
                                    j2,
                                );
                                push(
                                    [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)],
                                    [xi, xi * e1],
                                    j2,
                                );
                                push(
                                    [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)],
                                    [xi, xi * e1 * e2],
                                    j2,
                                );
                            }
                            PairKind::CommonVertex => {
                                let j = w * xi.powi(3) * e2;
                                push([xi, xi * e1], [xi * e2, xi * e2 * e3], j);
                                push([xi * e2, xi * e2 * e3], [xi, xi * e1], j);
                            }
                            PairKind::Near | PairKind::Far => {
                                panic!("regular pair kinds use PairRule::product")
                            }
                        }
                    }
                }
            }
        }
        rule
    }
}
