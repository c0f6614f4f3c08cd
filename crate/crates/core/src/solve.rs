//! Linear solvers for the assembled symmetric positive definite systems,
//! error norms of reconstructed solutions, and convergence rates.

mod cholesky;
mod errors;

use thiserror::Error;

use crate::sparse::CsrMatrix;

pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use errors::{compute_errors, convergence_rates, rate, ErrorReport, Rate, RateRow};

/// Required `||A x - b|| / ||b||`.
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const CG_TOL: f64 = 1e-12;
const MAX_REFINEMENT_STEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("Cholesky factorization broke down at pivot {pivot} (value {value:e}): the system is not positive definite; increase the penalty parameters mu and eta")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("relative residual {residual:e} exceeds {RESIDUAL_TOL:e} after refinement")]
    Residual { residual: f64 },
    #[error("dimension mismatch: matrix {rows}x{cols}, right-hand side {rhs}")]
    Dimension { rows: usize, cols: usize, rhs: usize },
    #[error("need at least two levels with strictly decreasing h")]
    RateInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    DirectCholesky,
    ConjugateGradient,
}

impl SolverKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SolverKind::DirectCholesky => "direct-cholesky",
            SolverKind::ConjugateGradient => "cg",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct-cholesky" | "direct" | "cholesky" => Ok(Self::DirectCholesky),
            "cg" => Ok(Self::ConjugateGradient),
            other => Err(format!("unknown solver {other:?} (expected direct-cholesky or cg)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub solver: SolverKind,
    pub iterations: Option<usize>,
    /// `||A x - b|| / ||b||`, or `0` when `b = 0`.
    pub residual: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `b - A x` with compensated (twice working precision) row sums.
fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            let (mut s, mut c) = (b[i], 0.0);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = -v * x[j];
                let pe = (-v).mul_add(x[j], -p);
                let t = s + p;
                let z = t - s;
                c += (s - (t - z)) + (p - z) + pe;
                s = t;
            }
            s + c
        })
        .collect()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64], bnorm: f64) -> (Vec<f64>, f64) {
    let r = residual(a, x, b);
    let rel = norm(&r) / bnorm;
    (r, rel)
}

pub fn solve(a: &CsrMatrix, b: &[f64], kind: SolverKind) -> Result<SolveReport, SolveError> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(SolveError::Dimension {
            rows: a.nrows(),
            cols: a.ncols(),
            rhs: b.len(),
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x: vec![0.0; b.len()],
            solver: kind,
            iterations: None,
            residual: 0.0,
        });
    }
    match kind {
        SolverKind::DirectCholesky => {
            let chol = EnvelopeCholesky::factor(a)?;
            let mut x = chol.solve(b);
            let (mut r, mut rel) = relative_residual(a, &x, b, bnorm);
            // Iterative refinement absorbs the conditioning of the penalty scaling.
            for _ in 0..MAX_REFINEMENT_STEPS {
                if rel < RESIDUAL_TOL * 1e-2 {
                    break;
                }
                let dx = chol.solve(&r);
                x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
                (r, rel) = relative_residual(a, &x, b, bnorm);
            }
            if rel >= RESIDUAL_TOL {
                return Err(SolveError::Residual { residual: rel });
            }
            Ok(SolveReport {
                x,
                solver: kind,
                iterations: None,
                residual: rel,
            })
        }
        SolverKind::ConjugateGradient => {
            let (x, iterations) = conjugate_gradient(a, b, CG_TOL, 10 * b.len())?;
            let (_, rel) = relative_residual(a, &x, b, bnorm);
            if rel >= RESIDUAL_TOL {
                return Err(SolveError::Residual { residual: rel });
            }
            Ok(SolveReport {
                x,
                solver: kind,
                iterations: Some(iterations),
                residual: rel,
            })
        }
    }
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SolveError> {
    let n = b.len();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut rel = 1.0;
    for it in 0..max_iter {
        rel = norm(&r) / bnorm;
        if rel <= tol {
            return Ok((x, it));
        }
        let ap = a.mul_vec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(SolveError::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) / bnorm <= tol {
        return Ok((x, max_iter));
    }
    Err(SolveError::NotConverged {
        iterations: max_iter,
        residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn identity_and_two_by_two() {
        for kind in [SolverKind::DirectCholesky, SolverKind::ConjugateGradient] {
            let b = vec![3.0, -1.0, 0.5];
            let rep = solve(&CsrMatrix::identity(3), &b, kind).unwrap();
            assert_eq!(rep.x, b);
            let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]);
            let rep = solve(&a, &[3.0, 3.0], kind).unwrap();
            assert!((rep.x[0] - 1.0).abs() < 1e-14 && (rep.x[1] - 1.0).abs() < 1e-14);
            let rep = solve(&a, &[0.0, 0.0], kind).unwrap();
            assert_eq!(rep.x, vec![0.0, 0.0]);
            assert_eq!(rep.residual, 0.0);
        }
    }

    #[test]
    fn direct_and_cg_agree() {
        let a = laplacian_1d(200);
        let b: Vec<f64> = (0..200).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let d = solve(&a, &b, SolverKind::DirectCholesky).unwrap();
        let c = solve(&a, &b, SolverKind::ConjugateGradient).unwrap();
        assert!(d.residual < RESIDUAL_TOL && c.residual < RESIDUAL_TOL);
        assert!(c.iterations.unwrap() <= 2000);
        for (x, y) in d.x.iter().zip(&c.x) {
            assert!((x - y).abs() < 1e-7 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let err = solve(&a, &[1.0, 0.0], SolverKind::DirectCholesky).unwrap_err();
        assert!(matches!(err, SolveError::NotPositiveDefinite { pivot: 1, .. }));
        assert!(err.to_string().contains("increase the penalty"));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            solve(&CsrMatrix::identity(2), &[1.0], SolverKind::DirectCholesky),
            Err(SolveError::Dimension { .. })
        ));
    }
}
