use rayon::prelude::*;

use super::SolveError;
use crate::assembly::DgSpace;
use crate::mesh::PolyMesh;
use crate::problems::ExactSolution;
use crate::quadrature::{cell_quadrature, face_quadrature, segment_rule, triangle_rule, QuadratureError};

/// Norms of `u - R u_h`. The energy norm is
/// `sqrt(energy_volume^2 + energy_jump^2 + energy_grad_jump^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub l2: f64,
    pub energy: f64,
    /// Broken `||Laplace e||`.
    pub energy_volume: f64,
    /// `(sum_e h_e^-3 ||[[e]]||^2)^(1/2)`, boundary faces included.
    pub energy_jump: f64,
    /// `(sum_e h_e^-1 ||[[grad e]]||^2)^(1/2)`, boundary faces included.
    pub energy_grad_jump: f64,
    /// Broken `H^2` seminorm (full Hessian).
    pub h2_broken: f64,
    pub dofs: usize,
    pub h: f64,
}

/// Integrates the error of the discrete function `x` with quadrature of
/// degree `2m + 4`.
pub fn compute_errors(
    mesh: &PolyMesh,
    space: &DgSpace,
    x: &[f64],
    exact: &dyn ExactSolution,
) -> Result<ErrorReport, QuadratureError> {
    let q = 2 * space.degree() + 4;
    let tri = triangle_rule(q)?;
    let seg = segment_rule(q)?;
    let local = space.local_polynomials(x);
    let ev = |k: usize, p: &nalgebra::Point2<f64>, d| space.eval_local(k, &local[k], p, d);

    let cells: Vec<[f64; 3]> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|k| {
            let mut acc = [0.0; 3];
            for (p, w) in cell_quadrature(mesh, k, &tri).iter() {
                let e = exact.value(p) - ev(k, p, (0, 0));
                let hs = exact.hessian(p);
                let exx = hs[(0, 0)] - ev(k, p, (2, 0));
                let exy = hs[(0, 1)] - ev(k, p, (1, 1));
                let eyy = hs[(1, 1)] - ev(k, p, (0, 2));
                acc[0] += w * e * e;
                acc[1] += w * (exx + eyy).powi(2);
                acc[2] += w * (exx * exx + 2.0 * exy * exy + eyy * eyy);
            }
            acc
        })
        .collect();
    let faces: Vec<[f64; 2]> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let face = mesh.face(f);
            let n = face.normal;
            let he = face.length;
            let mut acc = [0.0; 2];
            for (p, w) in face_quadrature(mesh, f, &seg).iter() {
                let trace = |k: usize| {
                    let v = ev(k, p, (0, 0));
                    let dn = n.x * ev(k, p, (1, 0)) + n.y * ev(k, p, (0, 1));
                    (v, dn)
                };
                let (v, dn) = trace(face.left);
                let (jv, jdn) = match face.right {
                    Some(r) => {
                        let (vr, dnr) = trace(r);
                        (v - vr, dn - dnr)
                    }
                    None => (v - exact.value(p), dn - exact.gradient(p).dot(&n)),
                };
                acc[0] += w * jv * jv / (he * he * he);
                acc[1] += w * jdn * jdn / he;
            }
            acc
        })
        .collect();

    let sum = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, |a, b| a + b);
    let l2 = sum(&mut cells.iter().map(|c| c[0])).sqrt();
    let vol = sum(&mut cells.iter().map(|c| c[1]));
    let h2 = sum(&mut cells.iter().map(|c| c[2])).sqrt();
    let jump = sum(&mut faces.iter().map(|f| f[0]));
    let grad_jump = sum(&mut faces.iter().map(|f| f[1]));
    Ok(ErrorReport {
        l2,
        energy: (vol + jump + grad_jump).sqrt(),
        energy_volume: vol.sqrt(),
        energy_jump: jump.sqrt(),
        energy_grad_jump: grad_jump.sqrt(),
        h2_broken: h2,
        dofs: space.num_dofs(),
        h: mesh.h(),
    })
}

/// Observed order between two levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Value(f64),
    /// Zero error on a level.
    Exact,
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rate::Value(r) => write!(f, "{r:.4}"),
            Rate::Exact => f.write_str("exact"),
        }
    }
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> Rate {
    if e_coarse == 0.0 || e_fine == 0.0 {
        Rate::Exact
    } else {
        Rate::Value((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub l2: Rate,
    pub energy: Rate,
    pub h2_broken: Rate,
}

/// Pairwise rates between consecutive levels; entry `i` compares levels
/// `i` and `i + 1`.
pub fn convergence_rates(reports: &[ErrorReport]) -> Result<Vec<RateRow>, SolveError> {
    if reports.len() < 2
        || reports
            .windows(2)
            .any(|w| w[1].h.partial_cmp(&w[0].h) != Some(std::cmp::Ordering::Less))
    {
        return Err(SolveError::RateInput);
    }
    Ok(reports
        .windows(2)
        .map(|w| {
            let (c, f) = (&w[0], &w[1]);
            RateRow {
                l2: rate(c.l2, f.l2, c.h, f.h),
                energy: rate(c.energy, f.energy, c.h, f.h),
                h2_broken: rate(c.h2_broken, f.h2_broken, c.h, f.h),
            }
        })
        .collect())
}
