//! Least-squares patch reconstruction.
//!
//! For every cell `K` the reconstruction fits a degree-`m` polynomial, in
//! `K`'s [`LocalBasis`], to the values at the collocation points of its
//! patch. The fit is linear in the samples, so it is stored as a matrix
//! `M_K` (`dim P_m x #S(K)`); column `j` is the restriction to `K` of the
//! basis function `lambda` of the `j`-th patch member.

use nalgebra::{DMatrix, DVector, Point2};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::PolyMesh;
use crate::patch::Patch;
use crate::poly::{dim_p, LocalBasis, SampleBasis};
use crate::quadrature::{cell_quadrature, triangle_rule};

/// Relative singular-value threshold below which a patch is treated as
/// unisolvent-failing.
pub const RANK_TOL: f64 = 1e-10;

pub const MAX_DERIVATIVE_ORDER: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconError {
    #[error("least-squares fit is not unique{}: sigma_min / sigma_max = {ratio:e}", cell.map(|c| format!(" on the patch of cell {c}")).unwrap_or_default())]
    UniquenessViolation { cell: Option<usize>, ratio: f64 },
    #[error("patch{} has {points} collocation points, fewer than dim P_m = {dim}", cell.map(|c| format!(" of cell {c}")).unwrap_or_default())]
    TooFewPoints {
        cell: Option<usize>,
        points: usize,
        dim: usize,
    },
    #[error("derivative order {0} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}")]
    DerivativeOrder(usize),
    #[error("expected {expected} sample values, got {got}")]
    SampleCount { expected: usize, got: usize },
}

/// The pseudo-inverse of the design matrix together with its extreme
/// singular values.
#[derive(Debug, Clone)]
pub struct LeastSquaresMap {
    pub matrix: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

pub fn design_matrix<B: SampleBasis>(basis: &B, points: &[B::Point]) -> DMatrix<f64> {
    let d = basis.dim();
    let mut a = DMatrix::zeros(points.len(), d);
    let mut row = vec![0.0; d];
    for (i, p) in points.iter().enumerate() {
        basis.values_into(p, &mut row);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    a
}

/// Builds the map from samples at `points` to basis coefficients through a
/// singular value decomposition of the design matrix.
pub fn least_squares_map<B: SampleBasis>(basis: &B, points: &[B::Point]) -> Result<LeastSquaresMap, ReconError> {
    let d = basis.dim();
    if points.len() < d {
        return Err(ReconError::TooFewPoints {
            cell: None,
            points: points.len(),
            dim: d,
        });
    }
    let a = design_matrix(basis, points);
    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if sigma_min.is_nan() || sigma_min <= RANK_TOL * sigma_max {
        return Err(ReconError::UniquenessViolation {
            cell: None,
            ratio: sigma_min / sigma_max,
        });
    }
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    // A^+ = V diag(1/sigma) U^T
    let mut vs = vt.transpose();
    for (j, s) in svd.singular_values.iter().enumerate() {
        vs.column_mut(j).scale_mut(1.0 / s);
    }
    Ok(LeastSquaresMap {
        matrix: vs * u.transpose(),
        sigma_min,
        sigma_max,
    })
}

/// Minimizer of `sum |g(x) - p(x)|^2` over the span of `basis`.
pub fn fit_local<B: SampleBasis>(basis: &B, points: &[B::Point], samples: &[f64]) -> Result<DVector<f64>, ReconError> {
    if samples.len() != points.len() {
        return Err(ReconError::SampleCount {
            expected: points.len(),
            got: samples.len(),
        });
    }
    let map = least_squares_map(basis, points)?;
    Ok(map.matrix * DVector::from_column_slice(samples))
}

#[derive(Debug, Clone)]
pub struct CellRecon {
    /// Patch members; column order of `coeffs`.
    pub members: Vec<usize>,
    pub coeffs: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone)]
pub struct ReconOperator {
    degree: usize,
    bases: Vec<LocalBasis>,
    cells: Vec<CellRecon>,
}

/// Local basis of cell `k`: centered at its barycenter, scaled by `h_K`.
pub fn cell_basis(mesh: &PolyMesh, k: usize, m: usize) -> LocalBasis {
    LocalBasis::new(m, mesh.barycenter(k), mesh.diameter(k))
}

pub fn build_recon(mesh: &PolyMesh, patches: &[Patch], m: usize) -> Result<ReconOperator, ReconError> {
    let dim = dim_p(m);
    let bases: Vec<LocalBasis> = (0..mesh.num_cells()).map(|k| cell_basis(mesh, k, m)).collect();
    let cells = patches
        .par_iter()
        .enumerate()
        .map(|(k, patch)| {
            debug_assert_eq!(patch.owner, k);
            if patch.len() < dim {
                return Err(ReconError::TooFewPoints {
                    cell: Some(k),
                    points: patch.len(),
                    dim,
                });
            }
            let map = least_squares_map(&bases[k], &patch.points).map_err(|e| match e {
                ReconError::UniquenessViolation { ratio, .. } => {
                    ReconError::UniquenessViolation { cell: Some(k), ratio }
                }
                other => other,
            })?;
            Ok(CellRecon {
                members: patch.members.clone(),
                coeffs: map.matrix,
                sigma_min: map.sigma_min,
                sigma_max: map.sigma_max,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReconOperator {
        degree: m,
        bases,
        cells,
    })
}

fn check_order(deriv: (usize, usize)) -> Result<(), ReconError> {
    let order = deriv.0 + deriv.1;
    if order > MAX_DERIVATIVE_ORDER {
        Err(ReconError::DerivativeOrder(order))
    } else {
        Ok(())
    }
}

impl ReconOperator {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn basis(&self, k: usize) -> &LocalBasis {
        &self.bases[k]
    }

    pub fn cell(&self, k: usize) -> &CellRecon {
        &self.cells[k]
    }

    /// Derivative `deriv` at `point` (in cell `k`) of every basis function
    /// that is nonzero on `k`, ordered as `cell(k).members`.
    pub fn eval_basis(&self, k: usize, point: &Point2<f64>, deriv: (usize, usize)) -> Result<Vec<f64>, ReconError> {
        check_order(deriv)?;
        let row = DVector::from_vec(self.bases[k].derivatives(point, deriv));
        Ok((self.cells[k].coeffs.tr_mul(&row)).as_slice().to_vec())
    }

    /// Local coefficients of `R g` on every cell, for cell values `g`.
    pub fn reconstruct(&self, values: &[f64]) -> Result<Vec<DVector<f64>>, ReconError> {
        if values.len() != self.cells.len() {
            return Err(ReconError::SampleCount {
                expected: self.cells.len(),
                got: values.len(),
            });
        }
        Ok(self
            .cells
            .iter()
            .map(|c| {
                let g = DVector::from_iterator(c.members.len(), c.members.iter().map(|&j| values[j]));
                &c.coeffs * g
            })
            .collect())
    }

    /// Cells on which `lambda_k` may be nonzero: those whose patch holds `k`.
    pub fn support(&self, k: usize) -> Vec<usize> {
        (0..self.cells.len())
            .filter(|&c| self.cells[c].members.contains(&k))
            .collect()
    }

    /// Smallest `sigma_min / sigma_max` over all patch design matrices.
    pub fn worst_conditioning(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.sigma_min / c.sigma_max)
            .fold(f64::INFINITY, f64::min)
    }

    /// Coefficient matrices in MatrixMarket array style, one block per cell.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for (k, c) in self.cells.iter().enumerate() {
            let _ = writeln!(s, "% cell {k} members {:?}", c.members);
            let _ = writeln!(s, "{} {}", c.coeffs.nrows(), c.coeffs.ncols());
            for j in 0..c.coeffs.ncols() {
                for i in 0..c.coeffs.nrows() {
                    let _ = writeln!(s, "{:e}", c.coeffs[(i, j)]);
                }
            }
        }
        s
    }
}

/// Per-cell lower estimates of `Lambda(m, I_K)`.
#[derive(Debug, Clone)]
pub struct LambdaReport {
    pub per_cell: Vec<f64>,
    pub max: f64,
}

const POWER_STEPS: usize = 50;
const POWER_TOL: f64 = 1e-8;

/// Estimates `max_p max_{S(K)} |p| / max_{I_K} |p|` for every cell.
///
/// The supremum over `S(K)` is replaced by a maximum over quadrature nodes
/// and vertices of the patch cells, and the maximum over `P_m` by a maximum
/// over a finite set of candidates: the constant, the dominant generalized
/// eigenvector of the sampled-to-collocation Gram pair (power iteration),
/// and the least-squares kernels peaked at each patch vertex. Every
/// candidate is an actual polynomial, so each estimate is a lower bound of
/// the true constant and is at least 1.
pub fn estimate_lambda(op: &ReconOperator, mesh: &PolyMesh, patches: &[Patch]) -> LambdaReport {
    let rule = triangle_rule(4).expect("degree 4 rule");
    let per_cell: Vec<f64> = patches
        .par_iter()
        .map(|patch| {
            let basis = op.basis(patch.owner);
            let mut samples = Vec::new();
            let mut vertices = Vec::new();
            for &c in &patch.members {
                samples.extend(cell_quadrature(mesh, c, &rule).points);
                vertices.extend(mesh.cell(c).iter().map(|&v| mesh.vertex(v)));
            }
            vertices.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
            vertices.dedup();
            samples.extend(vertices.iter().copied());
            lambda_for_patch(basis, &patch.points, &samples, &vertices)
        })
        .collect();
    let max = per_cell.iter().copied().fold(1.0, f64::max);
    LambdaReport { per_cell, max }
}

fn ratio(e: &DMatrix<f64>, a: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let top = (e * c).amax();
    let bottom = (a * c).amax();
    if bottom > 0.0 {
        top / bottom
    } else {
        1.0
    }
}

fn lambda_for_patch(basis: &LocalBasis, colloc: &[Point2<f64>], samples: &[Point2<f64>], peaks: &[Point2<f64>]) -> f64 {
    let a = design_matrix(basis, colloc);
    let e = design_matrix(basis, samples);
    let d = basis.len();
    let mut best: f64 = 1.0;
    let gram = a.tr_mul(&a);
    let Some(chol) = gram.clone().cholesky() else {
        return f64::INFINITY;
    };
    if d == 1 {
        return 1.0;
    }

    // Power iteration on G^-1 H, H = E^T E.
    let h = e.tr_mul(&e);
    let mut c = DVector::from_element(d, 1.0);
    let mut rayleigh = 0.0;
    for _ in 0..POWER_STEPS {
        let next = chol.solve(&(&h * &c));
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        let next = next / norm;
        let r = next.dot(&(&h * &next)) / next.dot(&(&gram * &next));
        c = next;
        let done = (r - rayleigh).abs() <= POWER_TOL * r.abs();
        rayleigh = r;
        if done {
            break;
        }
    }
    best = best.max(ratio(&e, &a, &c));

    // Least-squares kernels c = G^-1 phi(y).
    let peaks = design_matrix(basis, peaks);
    let kernels = chol.solve(&peaks.transpose());
    let top = &e * &kernels;
    let bottom = &a * &kernels;
    for j in 0..kernels.ncols() {
        let b = bottom.column(j).amax();
        if b > 0.0 {
            best = best.max(top.column(j).amax() / b);
        }
    }
    best
}
