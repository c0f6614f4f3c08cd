//! Symmetric interior-penalty assembly of the biharmonic problem.
//!
//! Face conventions: `n` is the face normal, pointing out of the left cell.
//! On an interior face `[[v]] = v+ - v-` (times `n`), `[[grad v]] = n . (grad v+ - grad v-)`
//! and `{q} = (q+ + q-) / 2`, where `+` is the left cell. On a boundary face
//! jumps and averages are the one-sided traces.

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::PolyMesh;
use crate::poly::{dim_p, LocalBasis};
use crate::problems::{BoundaryCondition, ManufacturedCase};
use crate::quadrature::{cell_quadrature, face_quadrature, segment_rule, triangle_rule, QuadratureError};
use crate::recon::{cell_basis, ReconOperator};
use crate::solve::{EnvelopeCholesky, SolveError};
use crate::sparse::CsrMatrix;

const CHUNK: usize = 1024;
pub const PROBE_TOL: f64 = 1e-6;
pub const PROBE_MAX_ITER: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("penalty parameters must be positive and finite (mu = {mu}, eta = {eta})")]
    InvalidPenalty { mu: f64, eta: f64 },
    #[error("case {case:?} lacks {what} required by {bc:?} boundary conditions")]
    MissingBoundaryData {
        case: String,
        bc: BoundaryCondition,
        what: &'static str,
    },
    #[error("space and mesh disagree: {0} cells vs {1}")]
    MeshMismatch(usize, usize),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("coercivity probe did not converge in {iterations} iterations (last estimate {estimate:e})")]
    ProbeNotConverged { iterations: usize, estimate: f64 },
}

/// Dimensionless penalty constants; on a face `alpha = mu / h_e^3`,
/// `beta = eta / h_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub mu: f64,
    pub eta: f64,
}

impl PenaltyConfig {
    pub fn new(mu: f64, eta: f64) -> Result<Self, AssemblyError> {
        if mu > 0.0 && eta > 0.0 && mu.is_finite() && eta.is_finite() {
            Ok(PenaltyConfig { mu, eta })
        } else {
            Err(AssemblyError::InvalidPenalty { mu, eta })
        }
    }

    /// `mu = m^4`, `eta = m^2`.
    pub fn default_for_degree(m: usize) -> Self {
        Self::scaled(m, 1.0)
    }

    /// Default for `mode`: [`Self::default_for_degree`] in the reconstructed
    /// space; `mu = 2 m^6`, `eta = 5 m^2` in the full space, whose inverse
    /// inequalities need the stronger `m^6` growth.
    pub fn default_for(mode: Mode, m: usize) -> Self {
        match mode {
            Mode::Reconstructed => Self::default_for_degree(m),
            Mode::FullDg => {
                let m = m.max(1) as f64;
                PenaltyConfig {
                    mu: 2.0 * m.powi(6),
                    eta: 5.0 * m * m,
                }
            }
        }
    }

    /// `mu = c m^4`, `eta = c m^2`.
    pub fn scaled(m: usize, c: f64) -> Self {
        let m = m.max(1) as f64;
        PenaltyConfig {
            mu: c * m.powi(4),
            eta: c * m * m,
        }
    }

    pub fn alpha(&self, h_e: f64) -> f64 {
        self.mu / (h_e * h_e * h_e)
    }

    pub fn beta(&self, h_e: f64) -> f64 {
        self.eta / h_e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// One unknown per cell, trial space `R U_h`.
    Reconstructed,
    /// `dim P_m` unknowns per cell, the standard discontinuous space.
    FullDg,
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Reconstructed => "reconstructed",
            Mode::FullDg => "baseline-full-dg",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reconstructed" | "recon" => Ok(Mode::Reconstructed),
            "baseline-full-dg" | "baseline" | "full-dg" => Ok(Mode::FullDg),
            other => Err(format!(
                "unknown mode {other:?} (expected reconstructed or baseline-full-dg)"
            )),
        }
    }
}

/// Piecewise polynomial space: on cell `k` the function with global
/// coefficients `x` is `basis(k) . (coefficients(k) * x[cell_dofs(k)])`.
#[derive(Debug, Clone)]
pub struct DgSpace {
    mode: Mode,
    degree: usize,
    bases: Vec<LocalBasis>,
    dofs: Vec<Vec<usize>>,
    coeffs: Vec<DMatrix<f64>>,
    num_dofs: usize,
}

impl DgSpace {
    pub fn reconstructed(op: &ReconOperator) -> Self {
        let n = op.num_cells();
        DgSpace {
            mode: Mode::Reconstructed,
            degree: op.degree(),
            bases: (0..n).map(|k| op.basis(k).clone()).collect(),
            dofs: (0..n).map(|k| op.cell(k).members.clone()).collect(),
            coeffs: (0..n).map(|k| op.cell(k).coeffs.clone()).collect(),
            num_dofs: n,
        }
    }

    pub fn full_dg(mesh: &PolyMesh, m: usize) -> Self {
        let d = dim_p(m);
        let n = mesh.num_cells();
        DgSpace {
            mode: Mode::FullDg,
            degree: m,
            bases: (0..n).map(|k| cell_basis(mesh, k, m)).collect(),
            dofs: (0..n).map(|k| (k * d..(k + 1) * d).collect()).collect(),
            coeffs: vec![DMatrix::identity(d, d); n],
            num_dofs: n * d,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_cells(&self) -> usize {
        self.bases.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn cell_dofs(&self, k: usize) -> &[usize] {
        &self.dofs[k]
    }

    pub fn basis(&self, k: usize) -> &LocalBasis {
        &self.bases[k]
    }

    pub fn coefficients(&self, k: usize) -> &DMatrix<f64> {
        &self.coeffs[k]
    }

    /// Local monomial coefficients on every cell.
    pub fn local_polynomials(&self, x: &[f64]) -> Vec<DVector<f64>> {
        assert_eq!(x.len(), self.num_dofs);
        (0..self.num_cells())
            .map(|k| {
                let g = DVector::from_iterator(self.dofs[k].len(), self.dofs[k].iter().map(|&j| x[j]));
                &self.coeffs[k] * g
            })
            .collect()
    }

    /// Derivative of a local polynomial of cell `k` at `p`.
    pub fn eval_local(&self, k: usize, local: &DVector<f64>, p: &Point2<f64>, deriv: (usize, usize)) -> f64 {
        let row = self.bases[k].derivatives(p, deriv);
        row.iter().zip(local.iter()).map(|(a, b)| a * b).sum()
    }

    /// Rows `value, d/dn, Laplacian, d/dn Laplacian` of the cell's trial
    /// functions at `p`.
    fn traces(&self, k: usize, p: &Point2<f64>, n: &Vector2<f64>) -> DMatrix<f64> {
        let b = &self.bases[k];
        let d = |dd| b.derivatives(p, dd);
        let (v, dx, dy) = (d((0, 0)), d((1, 0)), d((0, 1)));
        let (xx, yy) = (d((2, 0)), d((0, 2)));
        let (xxx, xyy, xxy, yyy) = (d((3, 0)), d((1, 2)), d((2, 1)), d((0, 3)));
        let rows = DMatrix::from_fn(4, b.len(), |r, i| match r {
            0 => v[i],
            1 => n.x * dx[i] + n.y * dy[i],
            2 => xx[i] + yy[i],
            _ => n.x * (xxx[i] + xyy[i]) + n.y * (xxy[i] + yyy[i]),
        });
        rows * &self.coeffs[k]
    }

    /// Rows `value, Laplacian`.
    fn volume_rows(&self, k: usize, p: &Point2<f64>) -> DMatrix<f64> {
        let b = &self.bases[k];
        let v = b.derivatives(p, (0, 0));
        let xx = b.derivatives(p, (2, 0));
        let yy = b.derivatives(p, (0, 2));
        let rows = DMatrix::from_fn(2, b.len(), |r, i| if r == 0 { v[i] } else { xx[i] + yy[i] });
        rows * &self.coeffs[k]
    }
}

/// Assembled `A x = b`.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub mode: Mode,
    pub bc: BoundaryCondition,
    pub num_cells: usize,
}

impl DiscreteSystem {
    pub fn num_dofs(&self) -> usize {
        self.rhs.len()
    }

    /// `max |A - A^T| / max |A|`.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.matrix.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            self.matrix.symmetry_defect() / scale
        }
    }
}

enum Block {
    Cell(usize),
    Face(usize),
}

struct LocalContribution {
    dofs: Vec<usize>,
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

fn block_dofs(space: &DgSpace, mesh: &PolyMesh, block: &Block) -> Vec<usize> {
    match *block {
        Block::Cell(k) => space.cell_dofs(k).to_vec(),
        Block::Face(f) => {
            let face = mesh.face(f);
            let mut d = space.cell_dofs(face.left).to_vec();
            if let Some(r) = face.right {
                d.extend_from_slice(space.cell_dofs(r));
            }
            d
        }
    }
}

struct Forms<'a> {
    mesh: &'a PolyMesh,
    space: &'a DgSpace,
    case: &'a ManufacturedCase,
    pen: PenaltyConfig,
    cell_rule: crate::quadrature::QuadRule,
    face_rule: crate::quadrature::QuadRule,
}

impl Forms<'_> {
    fn cell(&self, k: usize) -> LocalContribution {
        let n = self.space.cell_dofs(k).len();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (p, w) in cell_quadrature(self.mesh, k, &self.cell_rule).iter() {
            let rows = self.space.volume_rows(k, p);
            let val = rows.row(0).transpose();
            let lap = rows.row(1).transpose();
            a.ger(w, &lap, &lap, 1.0);
            b.axpy(w * (self.case.source)(p), &val, 1.0);
        }
        LocalContribution {
            dofs: self.space.cell_dofs(k).to_vec(),
            matrix: a,
            rhs: b,
        }
    }

    fn face(&self, f: usize) -> LocalContribution {
        let face = self.mesh.face(f);
        let nrm = face.normal;
        let alpha = self.pen.alpha(face.length);
        let beta = self.pen.beta(face.length);
        let dofs = block_dofs(self.space, self.mesh, &Block::Face(f));
        let n = dofs.len();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let quad = face_quadrature(self.mesh, f, &self.face_rule);
        for (p, w) in quad.iter() {
            let tp = self.space.traces(face.left, p, &nrm);
            let (j0, j1, a2, a3) = match face.right {
                Some(r) => {
                    let tm = self.space.traces(r, p, &nrm);
                    let cat = |row: usize, sp: f64, sm: f64| {
                        let mut v = DVector::zeros(n);
                        let np = tp.ncols();
                        for i in 0..np {
                            v[i] = sp * tp[(row, i)];
                        }
                        for i in 0..tm.ncols() {
                            v[np + i] = sm * tm[(row, i)];
                        }
                        v
                    };
                    (cat(0, 1.0, -1.0), cat(1, 1.0, -1.0), cat(2, 0.5, 0.5), cat(3, 0.5, 0.5))
                }
                None => {
                    let row = |r: usize| tp.row(r).transpose();
                    (row(0), row(1), row(2), row(3))
                }
            };
            let simply_supported = face.is_boundary() && self.case.bc == BoundaryCondition::SimplySupported;
            a.ger(w, &j0, &a3, 1.0);
            a.ger(w, &a3, &j0, 1.0);
            a.ger(w * alpha, &j0, &j0, 1.0);
            if !simply_supported {
                a.ger(-w, &a2, &j1, 1.0);
                a.ger(-w, &j1, &a2, 1.0);
                a.ger(w * beta, &j1, &j1, 1.0);
            }
            if face.is_boundary() {
                let gd = self.case.dirichlet.as_ref().map_or(0.0, |g| g(p));
                b.axpy(w * gd, &a3, 1.0);
                b.axpy(w * gd * alpha, &j0, 1.0);
                if simply_supported {
                    let gl = self.case.boundary_laplacian.as_ref().map_or(0.0, |g| g(p));
                    b.axpy(w * gl, &j1, 1.0);
                } else {
                    let gn = self.case.neumann.as_ref().map_or(0.0, |g| g(p, &nrm));
                    b.axpy(w * gn * beta, &j1, 1.0);
                    b.axpy(-w * gn, &a2, 1.0);
                }
            }
        }
        LocalContribution {
            dofs,
            matrix: a,
            rhs: b,
        }
    }
}

fn check_boundary_data(case: &ManufacturedCase) -> Result<(), AssemblyError> {
    let missing = |what| AssemblyError::MissingBoundaryData {
        case: case.name.clone(),
        bc: case.bc,
        what,
    };
    if case.dirichlet.is_none() {
        return Err(missing("Dirichlet data g_D"));
    }
    match case.bc {
        BoundaryCondition::Clamped if case.neumann.is_none() => Err(missing("normal-derivative data g_N")),
        BoundaryCondition::SimplySupported if case.boundary_laplacian.is_none() => {
            Err(missing("boundary Laplacian data"))
        }
        _ => Ok(()),
    }
}

/// Sparsity pattern: row `i` couples to every dof sharing a block with it.
fn pattern(num_dofs: usize, blocks: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut incidence: Vec<Vec<usize>> = vec![Vec::new(); num_dofs];
    for (b, dofs) in blocks.iter().enumerate() {
        for &i in dofs {
            if incidence[i].last() != Some(&b) {
                incidence[i].push(b);
            }
        }
    }
    incidence
        .par_iter()
        .map(|blks| {
            let mut row: Vec<usize> = blks.iter().flat_map(|&b| blocks[b].iter().copied()).collect();
            row.sort_unstable();
            row.dedup();
            row
        })
        .collect()
}

/// Assembles the system with quadrature of degree `2m` on cells and faces.
pub fn assemble(
    mesh: &PolyMesh,
    space: &DgSpace,
    case: &ManufacturedCase,
    penalties: PenaltyConfig,
) -> Result<DiscreteSystem, AssemblyError> {
    if mesh.num_cells() != space.num_cells() {
        return Err(AssemblyError::MeshMismatch(space.num_cells(), mesh.num_cells()));
    }
    check_boundary_data(case)?;
    let q = (2 * space.degree()).max(1);
    let forms = Forms {
        mesh,
        space,
        case,
        pen: penalties,
        cell_rule: triangle_rule(q)?,
        face_rule: segment_rule(q)?,
    };
    let blocks: Vec<Block> = (0..mesh.num_cells())
        .map(Block::Cell)
        .chain((0..mesh.num_faces()).map(Block::Face))
        .collect();
    let dof_lists: Vec<Vec<usize>> = blocks.iter().map(|b| block_dofs(space, mesh, b)).collect();
    let n = space.num_dofs();
    let mut matrix = CsrMatrix::from_pattern(n, pattern(n, &dof_lists));
    let mut rhs = vec![0.0; n];
    for chunk in blocks.chunks(CHUNK) {
        let locals: Vec<LocalContribution> = chunk
            .par_iter()
            .map(|b| match *b {
                Block::Cell(k) => forms.cell(k),
                Block::Face(f) => forms.face(f),
            })
            .collect();
        for loc in locals {
            for (i, &gi) in loc.dofs.iter().enumerate() {
                rhs[gi] += loc.rhs[i];
                for (j, &gj) in loc.dofs.iter().enumerate() {
                    matrix.add(gi, gj, loc.matrix[(i, j)]);
                }
            }
        }
    }
    Ok(DiscreteSystem {
        matrix,
        rhs,
        mode: space.mode(),
        bc: case.bc,
        num_cells: mesh.num_cells(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    /// Estimate of the smallest eigenvalue of `A`.
    pub estimate: f64,
    pub iterations: usize,
    /// Diagonal shift needed to factor `A`; zero when `A` factors directly.
    pub shift: f64,
}

impl CoercivityReport {
    pub fn is_coercive(&self) -> bool {
        self.shift == 0.0 && self.estimate > 0.0
    }
}

fn shifted(a: &CsrMatrix, s: f64) -> CsrMatrix {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m.add(i, i, s);
    }
    m
}

/// Smallest eigenvalue of the system matrix by inverse iteration. If `A`
/// fails to factor, iterates on `A + sI` for the smallest shift tried that
/// factors and reports the shifted-back estimate.
pub fn coercivity_probe(system: &DiscreteSystem) -> Result<CoercivityReport, AssemblyError> {
    let a = &system.matrix;
    let n = a.nrows();
    let mut shift = 0.0;
    let scale = a
        .diagonal()
        .iter()
        .fold(0.0_f64, |m, d| m.max(d.abs()))
        .max(f64::MIN_POSITIVE);
    let chol = loop {
        let m = if shift == 0.0 { a.clone() } else { shifted(a, shift) };
        match EnvelopeCholesky::factor(&m) {
            Ok(c) => break c,
            Err(e) if shift > 1e6 * scale => return Err(e.into()),
            Err(_) => shift = if shift == 0.0 { 1e-8 * scale } else { shift * 4.0 },
        }
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.7 * i as f64 + 0.3).sin()).collect();
    let normalize = |v: &mut Vec<f64>| {
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    };
    normalize(&mut x);
    let mut estimate = f64::NAN;
    for it in 1..=PROBE_MAX_ITER {
        let mut y = chol.solve(&x);
        normalize(&mut y);
        let ay = a.mul_vec(&y);
        let rq: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        x = y;
        if (rq - estimate).abs() <= PROBE_TOL * rq.abs() {
            return Ok(CoercivityReport {
                estimate: rq,
                iterations: it,
                shift,
            });
        }
        estimate = rq;
    }
    Err(AssemblyError::ProbeNotConverged {
        iterations: PROBE_MAX_ITER,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_tri, Rect};
    use crate::patch::{build_patches, patch_size_for_degree, PatchProfile};
    use crate::problems::get_case;
    use crate::recon::build_recon;
    use crate::solve::{solve, SolverKind};

    fn recon_space(mesh: &PolyMesh, m: usize) -> DgSpace {
        let patches = build_patches(mesh, patch_size_for_degree(m, PatchProfile::Example1).unwrap()).unwrap();
        DgSpace::reconstructed(&build_recon(mesh, &patches, m).unwrap())
    }

    #[test]
    fn dof_counts() {
        let mesh = generate_structured_tri(10, Rect::UNIT).unwrap();
        for m in 2..=4 {
            assert_eq!(recon_space(&mesh, m).num_dofs(), 200);
            assert_eq!(DgSpace::full_dg(&mesh, m).num_dofs(), 200 * dim_p(m));
        }
    }

    #[test]
    fn penalties() {
        assert!(PenaltyConfig::new(0.0, 1.0).is_err());
        assert!(PenaltyConfig::new(1.0, f64::NAN).is_err());
        let p = PenaltyConfig::default_for_degree(3);
        assert_eq!((p.mu, p.eta), (81.0, 9.0));
        assert_eq!(p.alpha(0.5), 81.0 * 8.0);
        assert_eq!(PenaltyConfig::scaled(2, 5.0), PenaltyConfig { mu: 80.0, eta: 20.0 });
    }

    #[test]
    fn symmetric_and_reproduces_quadratics() {
        let mesh = generate_structured_tri(4, Rect::UNIT).unwrap();
        for mode in [Mode::Reconstructed, Mode::FullDg] {
            let space = match mode {
                Mode::Reconstructed => recon_space(&mesh, 2),
                Mode::FullDg => DgSpace::full_dg(&mesh, 2),
            };
            let case = get_case("poly-exact-2", 2).unwrap();
            let sys = assemble(&mesh, &space, &case, PenaltyConfig::default_for(mode, 2)).unwrap();
            assert!(sys.relative_asymmetry() < 1e-12);
            let x = solve(&sys.matrix, &sys.rhs, SolverKind::DirectCholesky).unwrap().x;
            let exact = case.exact.unwrap();
            for (k, loc) in space.local_polynomials(&x).iter().enumerate() {
                let c = mesh.barycenter(k);
                let err = (space.eval_local(k, loc, &c, (0, 0)) - exact.value(&c)).abs();
                assert!(err < 1e-8, "{mode:?} cell {k}: {err}");
            }
        }
    }

    #[test]
    fn missing_data_is_rejected() {
        let mesh = generate_structured_tri(2, Rect::UNIT).unwrap();
        let mut case = get_case("ex1-sin2", 2).unwrap();
        case.neumann = None;
        let err = assemble(
            &mesh,
            &DgSpace::full_dg(&mesh, 2),
            &case,
            PenaltyConfig::default_for_degree(2),
        )
        .unwrap_err();
        assert!(matches!(err, AssemblyError::MissingBoundaryData { .. }));
    }

    #[test]
    fn probe_matches_dense_eigenvalue() {
        let mesh = generate_structured_tri(3, Rect::UNIT).unwrap();
        let space = recon_space(&mesh, 2);
        let case = get_case("ex1-sin2", 2).unwrap();
        let sys = assemble(&mesh, &space, &case, PenaltyConfig::default_for_degree(2)).unwrap();
        let rep = coercivity_probe(&sys).unwrap();
        let eig = sys.matrix.to_dense().symmetric_eigenvalues().min();
        assert!(rep.is_coercive());
        assert!(
            (rep.estimate - eig).abs() < 1e-4 * eig.abs(),
            "{} vs {eig}",
            rep.estimate
        );
    }
}
