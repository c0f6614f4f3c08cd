//! Polynomial bases.

use nalgebra::Point2;

/// `dim P_m = (m + 1)(m + 2) / 2` in two variables.
pub fn dim_p(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Exponents `(a, b)` with `a + b <= m` in graded-lexicographic order:
/// `1, x, y, x^2, xy, y^2, ...`.
pub fn exponents(m: usize) -> Vec<(usize, usize)> {
    (0..=m).flat_map(|d| (0..=d).map(move |b| (d - b, b))).collect()
}

/// Falling factorial `p (p - 1) ... (p - k + 1)`.
fn falling(p: usize, k: usize) -> f64 {
    if k > p {
        return 0.0;
    }
    ((p - k + 1)..=p).map(|i| i as f64).product()
}

/// Anything that can be sampled at collocation points to form a
/// least-squares design matrix.
pub trait SampleBasis {
    type Point;

    fn dim(&self) -> usize;

    /// Values of all basis members at `p`.
    fn values_into(&self, p: &Self::Point, out: &mut [f64]);
}

/// Shifted and scaled monomials `((x - xc)/h)^a ((y - yc)/h)^b`, `a + b <= m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    degree: usize,
    center: Point2<f64>,
    scale: f64,
    exps: Vec<(usize, usize)>,
}

impl LocalBasis {
    pub fn new(degree: usize, center: Point2<f64>, scale: f64) -> Self {
        assert!(scale > 0.0, "basis scale must be positive");
        LocalBasis {
            degree,
            center,
            scale,
            exps: exponents(degree),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn center(&self) -> Point2<f64> {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exps
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// `d^(dx + dy) / dx^dx dy^dy` of every member at `p`, including the
    /// `h^-(dx + dy)` chain-rule factor.
    pub fn derivatives_into(&self, p: &Point2<f64>, (dx, dy): (usize, usize), out: &mut [f64]) {
        let xi = (p.x - self.center.x) / self.scale;
        let eta = (p.y - self.center.y) / self.scale;
        let mut xp = [0.0; 16];
        let mut yp = [0.0; 16];
        debug_assert!(self.degree < 16);
        xp[0] = 1.0;
        yp[0] = 1.0;
        for i in 1..=self.degree {
            xp[i] = xp[i - 1] * xi;
            yp[i] = yp[i - 1] * eta;
        }
        let factor = self.scale.powi(-((dx + dy) as i32));
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            *o = if a < dx || b < dy {
                0.0
            } else {
                factor * falling(a, dx) * falling(b, dy) * xp[a - dx] * yp[b - dy]
            };
        }
    }

    pub fn derivatives(&self, p: &Point2<f64>, deriv: (usize, usize)) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.derivatives_into(p, deriv, &mut out);
        out
    }
}

impl SampleBasis for LocalBasis {
    type Point = Point2<f64>;

    fn dim(&self) -> usize {
        self.len()
    }

    fn values_into(&self, p: &Point2<f64>, out: &mut [f64]) {
        self.derivatives_into(p, (0, 0), out)
    }
}

/// Monomials `((x - xc)/h)^k`, `k <= m`, on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineBasis {
    pub degree: usize,
    pub center: f64,
    pub scale: f64,
}

impl SampleBasis for LineBasis {
    type Point = f64;

    fn dim(&self) -> usize {
        self.degree + 1
    }

    fn values_into(&self, p: &f64, out: &mut [f64]) {
        let t = (p - self.center) / self.scale;
        let mut v = 1.0;
        for o in out.iter_mut().take(self.degree + 1) {
            *o = v;
            v *= t;
        }
    }
}

/// Polynomial in global coordinates, `sum c_ab x^a y^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    pub terms: Vec<((usize, usize), f64)>,
}

impl Poly2 {
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|((a, b), _)| a + b).max().unwrap_or(0)
    }

    pub fn eval(&self, p: &Point2<f64>) -> f64 {
        self.terms
            .iter()
            .map(|&((a, b), c)| c * p.x.powi(a as i32) * p.y.powi(b as i32))
            .sum()
    }

    pub fn derivative(&self, (dx, dy): (usize, usize)) -> Poly2 {
        Poly2 {
            terms: self
                .terms
                .iter()
                .filter(|((a, b), _)| *a >= dx && *b >= dy)
                .map(|&((a, b), c)| ((a - dx, b - dy), c * falling(a, dx) * falling(b, dy)))
                .collect(),
        }
    }

    pub fn eval_derivative(&self, p: &Point2<f64>, deriv: (usize, usize)) -> f64 {
        self.terms
            .iter()
            .filter(|((a, b), _)| *a >= deriv.0 && *b >= deriv.1)
            .map(|&((a, b), c)| {
                c * falling(a, deriv.0)
                    * falling(b, deriv.1)
                    * p.x.powi((a - deriv.0) as i32)
                    * p.y.powi((b - deriv.1) as i32)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_and_order() {
        assert_eq!(dim_p(0), 1);
        assert_eq!(dim_p(2), 6);
        assert_eq!(dim_p(4), 15);
        assert_eq!(exponents(2), vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
        for m in 0..8 {
            assert_eq!(exponents(m).len(), dim_p(m));
        }
    }

    #[test]
    fn basis_at_center() {
        let b = LocalBasis::new(3, Point2::new(0.3, -0.2), 0.1);
        let v = b.derivatives(&Point2::new(0.3, -0.2), (0, 0));
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = LocalBasis::new(4, Point2::new(0.2, 0.1), 0.3);
        let p = Point2::new(0.41, -0.07);
        let eps = 1e-6;
        for (d, lower) in [((1, 0), (0, 0)), ((0, 1), (0, 0)), ((2, 1), (1, 1)), ((1, 2), (1, 1))] {
            let exact = b.derivatives(&p, d);
            let step = if d.0 > lower.0 {
                nalgebra::Vector2::new(eps, 0.0)
            } else {
                nalgebra::Vector2::new(0.0, eps)
            };
            let plus = b.derivatives(&(p + step), lower);
            let minus = b.derivatives(&(p - step), lower);
            for i in 0..b.len() {
                let fd = (plus[i] - minus[i]) / (2.0 * eps);
                assert!((fd - exact[i]).abs() < 1e-5 * (1.0 + exact[i].abs()), "{d:?} {i}");
            }
        }
    }

    #[test]
    fn third_derivatives_vanish_for_quadratics() {
        let b = LocalBasis::new(2, Point2::origin(), 1.0);
        for d in [(3, 0), (2, 1), (1, 2), (0, 3)] {
            assert!(b.derivatives(&Point2::new(0.7, 0.4), d).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn poly2_derivative() {
        let p = Poly2 {
            terms: vec![((2, 1), 3.0), ((0, 3), -1.0), ((0, 0), 5.0)],
        };
        let q = p.derivative((1, 1));
        let x = Point2::new(0.5, 2.0);
        assert!((q.eval(&x) - 6.0 * 0.5).abs() < 1e-15);
        assert!((p.eval_derivative(&x, (0, 2)) - (-6.0 * 2.0)).abs() < 1e-14);
        assert_eq!(p.degree(), 3);
    }
}
