//! Quadrature rules on the reference triangle and the unit segment, and
//! their mapping onto polygonal cells through sub-triangulations.
//!
//! Low degrees use symmetric Gauss tables with positive weights. Higher
//! degrees fall back to a collapsed (Duffy) tensor product of Gauss-Legendre
//! rules, which keeps every weight positive up to the maximum degree.

use nalgebra::Point2;
use thiserror::Error;

use crate::mesh::PolyMesh;

pub const MAX_DEGREE: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature degree {0} outside supported range 1..={MAX_DEGREE}")]
    DegreeOutOfRange(usize),
}

/// Reference nodes and weights.
///
/// Triangle rules live on `{(x, y) : x, y >= 0, x + y <= 1}` (measure 1/2);
/// segment rules live on `[0, 1]` and store the node in `x` with `y = 0`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss-Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn segment_rule(degree: usize) -> Result<QuadRule, QuadratureError> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(QuadratureError::DegreeOutOfRange(degree));
    }
    let n = (degree + 2) / 2;
    let (x, w) = gauss_legendre(n);
    Ok(QuadRule {
        nodes: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        degree,
    })
}

/// Rule on the reference triangle exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<QuadRule, QuadratureError> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(QuadratureError::DegreeOutOfRange(degree));
    }
    let rule = match degree {
        1 => symmetric_rule(&[(1.0, Orbit::Centroid)], 1),
        2 => symmetric_rule(&[(1.0 / 3.0, Orbit::Edge(1.0 / 6.0))], 2),
        3 | 4 => symmetric_rule(
            &[
                (0.223_381_589_678_011, Orbit::Edge(0.445_948_490_915_965)),
                (0.109_951_743_655_322, Orbit::Edge(0.091_576_213_509_771)),
            ],
            4,
        ),
        5 => symmetric_rule(
            &[
                (0.225, Orbit::Centroid),
                (0.132_394_152_788_506, Orbit::Edge(0.470_142_064_105_115)),
                (0.125_939_180_544_827, Orbit::Edge(0.101_286_507_323_456)),
            ],
            5,
        ),
        _ => collapsed_rule(degree),
    };
    Ok(QuadRule { degree, ..rule })
}

enum Orbit {
    Centroid,
    /// Barycentric coordinates `(a, a, 1 - 2a)` and permutations.
    Edge(f64),
}

/// Weights given relative to unit area; scaled to the reference measure 1/2.
fn symmetric_rule(orbits: &[(f64, Orbit)], degree: usize) -> QuadRule {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (w, orbit) in orbits {
        match *orbit {
            Orbit::Centroid => {
                nodes.push([1.0 / 3.0, 1.0 / 3.0]);
                weights.push(0.5 * w);
            }
            Orbit::Edge(a) => {
                let b = 1.0 - 2.0 * a;
                for p in [[a, a], [a, b], [b, a]] {
                    nodes.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    QuadRule { nodes, weights, degree }
}

/// Collapsed Gauss rule: `(s, t) -> (s, (1 - s) t)` with Jacobian `1 - s`.
fn collapsed_rule(degree: usize) -> QuadRule {
    // The s-integrand carries one extra power from the Jacobian.
    let ns = (degree + 3) / 2;
    let nt = (degree + 2) / 2;
    let (xs, ws) = gauss_legendre(ns);
    let (xt, wt) = gauss_legendre(nt);
    let mut nodes = Vec::with_capacity(ns * nt);
    let mut weights = Vec::with_capacity(ns * nt);
    for (si, wsi) in xs.iter().zip(&ws) {
        let s = 0.5 * (si + 1.0);
        for (ti, wti) in xt.iter().zip(&wt) {
            let t = 0.5 * (ti + 1.0);
            nodes.push([s, (1.0 - s) * t]);
            weights.push(0.25 * wsi * wti * (1.0 - s));
        }
    }
    QuadRule { nodes, weights, degree }
}

/// Physical quadrature points and weights.
#[derive(Debug, Clone, Default)]
pub struct MappedQuadrature {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
}

impl MappedQuadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point2<f64>, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, mut f: impl FnMut(&Point2<f64>) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p)).sum()
    }
}

/// Maps a reference triangle rule onto the triangle `(a, b, c)`.
pub fn map_triangle(rule: &QuadRule, a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, out: &mut MappedQuadrature) {
    let e1 = b - a;
    let e2 = c - a;
    let jac = (e1.x * e2.y - e1.y * e2.x).abs();
    for (n, w) in rule.nodes.iter().zip(&rule.weights) {
        out.points.push(a + e1 * n[0] + e2 * n[1]);
        out.weights.push(w * jac);
    }
}

/// Maps a unit-segment rule onto the segment `a -> b`.
pub fn map_segment(rule: &QuadRule, a: Point2<f64>, b: Point2<f64>) -> MappedQuadrature {
    let len = (b - a).norm();
    MappedQuadrature {
        points: rule.nodes.iter().map(|n| a + (b - a) * n[0]).collect(),
        weights: rule.weights.iter().map(|w| w * len).collect(),
    }
}

/// Union of the triangle rule mapped onto every sub-triangle of `cell`.
pub fn cell_quadrature(mesh: &PolyMesh, cell: usize, rule: &QuadRule) -> MappedQuadrature {
    let mut out = MappedQuadrature::default();
    for tri in mesh.subtriangles(cell) {
        let [a, b, c] = tri.map(|v| mesh.vertex(v));
        map_triangle(rule, a, b, c, &mut out);
    }
    out
}

/// Segment rule mapped onto face `face` of the mesh.
pub fn face_quadrature(mesh: &PolyMesh, face: usize, rule: &QuadRule) -> MappedQuadrature {
    let [a, b] = mesh.face(face).vertices;
    map_segment(rule, mesh.vertex(a), mesh.vertex(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Closed form of the monomial integral over the reference triangle.
    fn exact_triangle(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn apply(rule: &QuadRule, a: usize, b: usize) -> f64 {
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(n, w)| w * n[0].powi(a as i32) * n[1].powi(b as i32))
            .sum()
    }

    #[test]
    fn reference_triangle_examples() {
        let r = triangle_rule(1).unwrap();
        assert!((apply(&r, 0, 0) - 0.5).abs() < 1e-15);
        assert!((apply(&r, 1, 0) - 1.0 / 6.0).abs() < 1e-15);
        let r = triangle_rule(5).unwrap();
        assert!((apply(&r, 2, 3) - 1.0 / 420.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_exactness_sweep() {
        for degree in 1..=MAX_DEGREE {
            let rule = triangle_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0), "degree {degree}");
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let exact = exact_triangle(a, b);
                    let got = apply(&rule, a, b);
                    assert!(
                        ((got - exact) / exact).abs() < 1e-13,
                        "degree {degree}: x^{a} y^{b}: {got} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn segment_exactness_sweep() {
        for degree in 1..=MAX_DEGREE {
            let rule = segment_rule(degree).unwrap();
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in 0..=degree {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(n, w)| w * n[0].powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(((got - exact) / exact).abs() < 1e-13, "degree {degree} t^{k}");
            }
        }
        let r = segment_rule(6).unwrap();
        let t6: f64 = r.nodes.iter().zip(&r.weights).map(|(n, w)| w * n[0].powi(6)).sum();
        assert!((t6 - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degree_out_of_range() {
        assert_eq!(triangle_rule(0).unwrap_err(), QuadratureError::DegreeOutOfRange(0));
        assert!(triangle_rule(21).is_err());
        assert!(segment_rule(0).is_err());
        assert!(segment_rule(21).is_err());
    }
}
