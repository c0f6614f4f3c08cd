use std::collections::VecDeque;

use super::SolveError;
use crate::sparse::CsrMatrix;

/// Reverse Cuthill-McKee ordering of the (structurally symmetric) pattern of
/// `a`. Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Level structure of a BFS from `root` restricted to its component.
fn bfs_levels(a: &CsrMatrix, root: usize) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::from([root]);
    let mut levels = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in a.row(v).0 {
                if seen.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut root = seed;
    let mut depth = bfs_levels(a, root).len();
    for _ in 0..8 {
        let levels = bfs_levels(a, root);
        let candidate = *levels.last().unwrap().iter().min_by_key(|&&v| (degree[v], v)).unwrap();
        let d = bfs_levels(a, candidate).len();
        if d <= depth {
            break;
        }
        root = candidate;
        depth = d;
    }
    root
}

/// Envelope (variable band) Cholesky factor `P A P^T = L L^T` under an RCM
/// permutation.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, SolveError> {
        Self::factor_with(a, reverse_cuthill_mckee(a))
    }

    pub fn factor_with(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self, SolveError> {
        let n = a.nrows();
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut first = vec![0; n];
        for i in 0..n {
            first[i] = a
                .row(perm[i])
                .0
                .iter()
                .map(|&c| iperm[c])
                .filter(|&j| j <= i)
                .min()
                .unwrap_or(i);
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + i + 1 - first[i]);
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            let (cols, vals) = a.row(perm[i]);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = iperm[c];
                if j <= i {
                    data[offset[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (done, rest) = data.split_at_mut(offset[i]);
            let row = &mut rest[..i + 1 - fi];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let rj = &done[offset[j]..offset[j + 1]];
                let dot: f64 = row[lo - fi..j - fi]
                    .iter()
                    .zip(&rj[lo - fj..j - fj])
                    .map(|(x, y)| x * y)
                    .sum();
                row[j - fi] = (row[j - fi] - dot) / rj[j - fj];
            }
            let sq: f64 = row[..i - fi].iter().map(|x| x * x).sum();
            let pivot = row[i - fi] - sq;
            if pivot.is_nan() || pivot <= 0.0 || pivot.is_infinite() {
                return Err(SolveError::NotPositiveDefinite { pivot: i, value: pivot });
            }
            row[i - fi] = pivot.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offset[i]..self.offset[i + 1]]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let dot: f64 = row[..i - fi].iter().zip(&z[fi..i]).map(|(l, z)| l * z).sum();
            z[i] = (z[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            z[i] /= row[i - fi];
            let zi = z[i];
            for (zk, l) in z[fi..i].iter_mut().zip(&row[..i - fi]) {
                *zk -= l * zi;
            }
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.row(i)[i - self.first[i]].ln()).sum()
    }
}
