//! Manufactured biharmonic problems with closed-form derivatives.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};
use thiserror::Error;

use crate::poly::{exponents, Poly2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("unknown case {0:?} (known: ex1-sin2, ex3-ss, lshape-singular, poly-exact-m, poly-exact-<k>)")]
    Unknown(String),
}

/// Smooth exact solution with the derivatives the forms and norms need.
pub trait ExactSolution: Send + Sync {
    fn value(&self, p: &Point2<f64>) -> f64;
    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64>;
    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64>;
    fn grad_laplacian(&self, p: &Point2<f64>) -> Vector2<f64>;
    fn bilaplacian(&self, p: &Point2<f64>) -> f64;

    fn laplacian(&self, p: &Point2<f64>) -> f64 {
        self.hessian(p).trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `u` and `du/dn` prescribed.
    Clamped,
    /// `u` and `Laplace u` prescribed.
    SimplySupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    LShape,
}

pub type ScalarFn = Arc<dyn Fn(&Point2<f64>) -> f64 + Send + Sync>;
pub type NormalFn = Arc<dyn Fn(&Point2<f64>, &Vector2<f64>) -> f64 + Send + Sync>;

/// Source term and boundary data of a biharmonic problem, optionally with
/// the exact solution they were derived from.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub bc: BoundaryCondition,
    pub domain: Domain,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub source: ScalarFn,
    pub dirichlet: Option<ScalarFn>,
    /// `g_N(x, n)`; clamped problems only.
    pub neumann: Option<NormalFn>,
    /// Boundary values of `Laplace u`; simply supported problems only.
    pub boundary_laplacian: Option<ScalarFn>,
}

impl fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("bc", &self.bc)
            .field("domain", &self.domain)
            .field("exact", &self.exact.is_some())
            .field("dirichlet", &self.dirichlet.is_some())
            .field("neumann", &self.neumann.is_some())
            .field("boundary_laplacian", &self.boundary_laplacian.is_some())
            .finish()
    }
}

impl ManufacturedCase {
    /// All data taken from the exact solution.
    pub fn from_exact(name: &str, exact: Arc<dyn ExactSolution>, bc: BoundaryCondition, domain: Domain) -> Self {
        let (e1, e2, e3, e4) = (exact.clone(), exact.clone(), exact.clone(), exact.clone());
        let source: ScalarFn = Arc::new(move |p| e1.bilaplacian(p));
        let dirichlet: ScalarFn = Arc::new(move |p| e2.value(p));
        let (neumann, boundary_laplacian): (Option<NormalFn>, Option<ScalarFn>) = match bc {
            BoundaryCondition::Clamped => (Some(Arc::new(move |p, n| e3.gradient(p).dot(n))), None),
            BoundaryCondition::SimplySupported => (None, Some(Arc::new(move |p| e4.laplacian(p)))),
        };
        ManufacturedCase {
            name: name.to_string(),
            bc,
            domain,
            exact: Some(exact),
            source,
            dirichlet: Some(dirichlet),
            neumann,
            boundary_laplacian,
        }
    }
}

/// `u = sin^2(pi x) sin^2(pi y)`.
#[derive(Debug, Clone, Copy)]
pub struct SinSquared;

/// `s(t) = sin^2(pi t)` and its first four derivatives.
fn sin2_derivs(t: f64) -> [f64; 5] {
    let s1 = (PI * t).sin();
    let (s2, c2) = (2.0 * PI * t).sin_cos();
    [
        s1 * s1,
        PI * s2,
        2.0 * PI * PI * c2,
        -4.0 * PI.powi(3) * s2,
        -8.0 * PI.powi(4) * c2,
    ]
}

impl ExactSolution for SinSquared {
    fn value(&self, p: &Point2<f64>) -> f64 {
        sin2_derivs(p.x)[0] * sin2_derivs(p.y)[0]
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        let (a, b) = (sin2_derivs(p.x), sin2_derivs(p.y));
        Vector2::new(a[1] * b[0], a[0] * b[1])
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let (a, b) = (sin2_derivs(p.x), sin2_derivs(p.y));
        let xy = a[1] * b[1];
        Matrix2::new(a[2] * b[0], xy, xy, a[0] * b[2])
    }

    fn grad_laplacian(&self, p: &Point2<f64>) -> Vector2<f64> {
        let (a, b) = (sin2_derivs(p.x), sin2_derivs(p.y));
        Vector2::new(a[3] * b[0] + a[1] * b[2], a[2] * b[1] + a[0] * b[3])
    }

    fn bilaplacian(&self, p: &Point2<f64>) -> f64 {
        let (a, b) = (sin2_derivs(p.x), sin2_derivs(p.y));
        a[4] * b[0] + 2.0 * a[2] * b[2] + a[0] * b[4]
    }
}

/// `u = sin(k x) sin(k y)`; vanishes together with its Laplacian on the
/// boundary of the unit square when `k` is a multiple of `pi`.
#[derive(Debug, Clone, Copy)]
pub struct SinProduct {
    pub k: f64,
}

impl ExactSolution for SinProduct {
    fn value(&self, p: &Point2<f64>) -> f64 {
        (self.k * p.x).sin() * (self.k * p.y).sin()
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        let (sx, cx) = (self.k * p.x).sin_cos();
        let (sy, cy) = (self.k * p.y).sin_cos();
        Vector2::new(cx * sy, sx * cy) * self.k
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let (sx, cx) = (self.k * p.x).sin_cos();
        let (sy, cy) = (self.k * p.y).sin_cos();
        let k2 = self.k * self.k;
        Matrix2::new(-sx * sy, cx * cy, cx * cy, -sx * sy) * k2
    }

    fn grad_laplacian(&self, p: &Point2<f64>) -> Vector2<f64> {
        self.gradient(p) * (-2.0 * self.k * self.k)
    }

    fn bilaplacian(&self, p: &Point2<f64>) -> f64 {
        4.0 * self.k.powi(4) * self.value(p)
    }
}

/// `u = r^(5/3) sin(5 theta / 3)` with `theta` in `[0, 2 pi)`.
///
/// `u = Im z^(5/3)` is harmonic away from the branch cut (the positive
/// x-axis, which lies on the boundary of the L-shaped domain), so its
/// Laplacian and bilaplacian vanish.
#[derive(Debug, Clone, Copy)]
pub struct LShapeSingular;

pub const LSHAPE_EXPONENT: f64 = 5.0 / 3.0;
const R_FLOOR: f64 = 1e-14;

impl LShapeSingular {
    fn polar(p: &Point2<f64>) -> (f64, f64) {
        let r = p.coords.norm().max(R_FLOOR);
        let mut theta = p.y.atan2(p.x);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        (r, theta)
    }

    /// `d^k/dz^k z^alpha` as (real, imaginary).
    fn complex_derivative(p: &Point2<f64>, k: i32) -> (f64, f64) {
        let (r, theta) = Self::polar(p);
        let a = LSHAPE_EXPONENT;
        let coef = (0..k).map(|i| a - i as f64).product::<f64>() * r.powf(a - k as f64);
        let phase = (a - k as f64) * theta;
        (coef * phase.cos(), coef * phase.sin())
    }
}

impl ExactSolution for LShapeSingular {
    fn value(&self, p: &Point2<f64>) -> f64 {
        Self::complex_derivative(p, 0).1
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        let (re, im) = Self::complex_derivative(p, 1);
        Vector2::new(im, re)
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let (re, im) = Self::complex_derivative(p, 2);
        Matrix2::new(im, re, re, -im)
    }

    fn grad_laplacian(&self, _p: &Point2<f64>) -> Vector2<f64> {
        Vector2::zeros()
    }

    fn bilaplacian(&self, _p: &Point2<f64>) -> f64 {
        0.0
    }
}

/// A fixed polynomial of total degree `m`.
#[derive(Debug, Clone)]
pub struct PolyExact {
    pub poly: Poly2,
}

impl PolyExact {
    /// Every monomial of degree `<= m` with a distinct, nonzero coefficient.
    pub fn of_degree(m: usize) -> Self {
        let terms = exponents(m)
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                ((a, b), sign * (1.0 + 0.5 * b as f64) / (1.0 + (a + b) as f64))
            })
            .collect();
        PolyExact { poly: Poly2 { terms } }
    }
}

impl ExactSolution for PolyExact {
    fn value(&self, p: &Point2<f64>) -> f64 {
        self.poly.eval(p)
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        Vector2::new(
            self.poly.eval_derivative(p, (1, 0)),
            self.poly.eval_derivative(p, (0, 1)),
        )
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let xy = self.poly.eval_derivative(p, (1, 1));
        Matrix2::new(
            self.poly.eval_derivative(p, (2, 0)),
            xy,
            xy,
            self.poly.eval_derivative(p, (0, 2)),
        )
    }

    fn grad_laplacian(&self, p: &Point2<f64>) -> Vector2<f64> {
        let d = |dx, dy| self.poly.eval_derivative(p, (dx, dy));
        Vector2::new(d(3, 0) + d(1, 2), d(2, 1) + d(0, 3))
    }

    fn bilaplacian(&self, p: &Point2<f64>) -> f64 {
        let d = |dx, dy| self.poly.eval_derivative(p, (dx, dy));
        d(4, 0) + 2.0 * d(2, 2) + d(0, 4)
    }
}

pub const CASE_NAMES: [&str; 4] = ["ex1-sin2", "ex3-ss", "lshape-singular", "poly-exact-m"];

/// Looks up a catalog case. `poly-exact-m` takes its degree from `m`;
/// `poly-exact-<k>` fixes it.
pub fn get_case(name: &str, m: usize) -> Result<ManufacturedCase, CaseError> {
    use BoundaryCondition::*;
    let case = match name {
        "ex1-sin2" => ManufacturedCase::from_exact(name, Arc::new(SinSquared), Clamped, Domain::UnitSquare),
        "ex3-ss" => ManufacturedCase::from_exact(
            name,
            Arc::new(SinProduct { k: 2.0 * PI }),
            SimplySupported,
            Domain::UnitSquare,
        ),
        "lshape-singular" => ManufacturedCase::from_exact(name, Arc::new(LShapeSingular), Clamped, Domain::LShape),
        _ => {
            let degree = match name.strip_prefix("poly-exact-") {
                Some("m") => m,
                Some(k) => k.parse().map_err(|_| CaseError::Unknown(name.to_string()))?,
                None => return Err(CaseError::Unknown(name.to_string())),
            };
            ManufacturedCase::from_exact(
                name,
                Arc::new(PolyExact::of_degree(degree)),
                Clamped,
                Domain::UnitSquare,
            )
        }
    };
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    /// Central differences of every stored derivative against the next
    /// lower one.
    fn check_fd(u: &dyn ExactSolution, points: &[Point2<f64>]) {
        let h = 1e-4;
        let ex = Vector2::new(h, 0.0);
        let ey = Vector2::new(0.0, h);
        for p in points {
            let d = |f: &dyn Fn(&Point2<f64>) -> f64, e: Vector2<f64>| (f(&(p + e)) - f(&(p - e))) / (2.0 * h);
            let g = u.gradient(p);
            assert!(rel(d(&|q| u.value(q), ex), g.x) < 1e-4, "u_x at {p}");
            assert!(rel(d(&|q| u.value(q), ey), g.y) < 1e-4, "u_y at {p}");
            let hs = u.hessian(p);
            assert!(rel(d(&|q| u.gradient(q).x, ex), hs[(0, 0)]) < 1e-4);
            assert!(rel(d(&|q| u.gradient(q).x, ey), hs[(0, 1)]) < 1e-4);
            assert!(rel(d(&|q| u.gradient(q).y, ey), hs[(1, 1)]) < 1e-4);
            assert!((hs[(0, 1)] - hs[(1, 0)]).abs() < 1e-12);
            let gl = u.grad_laplacian(p);
            assert!(rel(d(&|q| u.laplacian(q), ex), gl.x) < 1e-4, "lap_x at {p}");
            assert!(rel(d(&|q| u.laplacian(q), ey), gl.y) < 1e-4);
            let div = d(&|q| u.grad_laplacian(q).x, ex) + d(&|q| u.grad_laplacian(q).y, ey);
            assert!(rel(div, u.bilaplacian(p)) < 1e-4, "bilap at {p}");
        }
    }

    fn random_points(n: usize, lo: f64, hi: f64, keep: impl Fn(&Point2<f64>) -> bool) -> Vec<Point2<f64>> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(42);
        let mut out = Vec::new();
        while out.len() < n {
            let p = Point2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
            if keep(&p) {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn finite_difference_consistency() {
        let square = random_points(10, 0.0, 1.0, |_| true);
        check_fd(&SinSquared, &square);
        check_fd(&SinProduct { k: 2.0 * PI }, &square);
        check_fd(&PolyExact::of_degree(4), &square);
        let lshape = random_points(10, -1.0, 1.0, |p| {
            !(p.x >= 0.0 && p.y <= 0.0) && p.coords.norm() >= 0.05
        });
        check_fd(&LShapeSingular, &lshape);
    }

    #[test]
    fn lshape_singular_is_biharmonic() {
        // Independent of the stored (zero) derivatives: a 13-point stencil of
        // the bilaplacian applied to u itself.
        let h = 1e-2;
        let u = |x: f64, y: f64| LShapeSingular.value(&Point2::new(x, y));
        let pts = random_points(10, -0.9, 0.9, |p| {
            !(p.x >= -0.1 && p.y <= 0.1) && p.coords.norm() >= 0.3
        });
        for p in pts {
            let (x, y) = (p.x, p.y);
            let s = 20.0 * u(x, y) - 8.0 * (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h))
                + 2.0 * (u(x + h, y + h) + u(x - h, y + h) + u(x + h, y - h) + u(x - h, y - h))
                + u(x + 2.0 * h, y)
                + u(x - 2.0 * h, y)
                + u(x, y + 2.0 * h)
                + u(x, y - 2.0 * h);
            assert!((s / h.powi(4)).abs() < 1e-3, "{p}: {}", s / h.powi(4));
            assert_eq!(LShapeSingular.bilaplacian(&p), 0.0);
        }
    }

    #[test]
    fn catalog_examples() {
        let c = get_case("ex1-sin2", 2).unwrap();
        let u = c.exact.as_ref().unwrap();
        assert!((u.value(&Point2::new(0.5, 0.5)) - 1.0).abs() < 1e-15);
        assert!(c.neumann.is_some() && c.boundary_laplacian.is_none());

        let c = get_case("ex3-ss", 3).unwrap();
        assert_eq!(c.bc, BoundaryCondition::SimplySupported);
        let g = c.dirichlet.as_ref().unwrap();
        let gl = c.boundary_laplacian.as_ref().unwrap();
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            for p in [
                Point2::new(t, 0.0),
                Point2::new(t, 1.0),
                Point2::new(0.0, t),
                Point2::new(1.0, t),
            ] {
                assert!(g(&p).abs() < 1e-14);
                assert!(gl(&p).abs() < 1e-12);
            }
        }

        let c = get_case("lshape-singular", 2).unwrap();
        assert_eq!(c.domain, Domain::LShape);
        assert_eq!((c.source)(&Point2::new(-0.5, 0.5)), 0.0);

        let c = get_case("poly-exact-m", 3).unwrap();
        assert_eq!(c.name, "poly-exact-m");
        assert!(get_case("poly-exact-4", 2).is_ok());
        assert!(matches!(get_case("nope", 2), Err(CaseError::Unknown(_))));
        assert!(get_case("poly-exact-x", 2).is_err());
    }

    #[test]
    fn lshape_boundary_values() {
        // Zero on the positive x-axis (theta = 0), r^(5/3) on the negative
        // y-axis (theta = 3 pi / 2).
        for t in [0.1, 0.5, 1.0] {
            assert!(LShapeSingular.value(&Point2::new(t, 0.0)).abs() < 1e-14);
            assert!((LShapeSingular.value(&Point2::new(0.0, -t)) - t.powf(5.0 / 3.0)).abs() < 1e-14);
        }
        assert!(LShapeSingular.value(&Point2::origin()).abs() < 1e-20);
    }
}
