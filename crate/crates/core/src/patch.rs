//! Element patches grown by face-neighbour rings.

use nalgebra::Point2;
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::PolyMesh;
use crate::poly::dim_p;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchError {
    #[error("patch target must be at least 1")]
    ZeroTarget,
    #[error("patch of cell {owner}: mesh exhausted after {found} cells (target {target})")]
    Exhausted { owner: usize, found: usize, target: usize },
    #[error("patch size {size} for degree {degree} must exceed dim P_m = {dim}")]
    TooSmall { size: usize, degree: usize, dim: usize },
    #[error("degree {0} has no built-in patch size (supported: 2..=6)")]
    UnsupportedDegree(usize),
    #[error("unknown patch profile {0:?}")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub owner: usize,
    /// Owner first, then ring by ring; within a ring by ascending index.
    pub members: Vec<usize>,
    /// Collocation points (barycenters) of `members`, same order.
    pub points: Vec<Point2<f64>>,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.members.contains(&cell)
    }
}

/// Grows `S(owner)` by whole face-neighbour rings until it holds at least
/// `target` cells, then keeps from the last ring only the cells whose
/// barycenters are closest to the owner's (ties by cell index).
///
/// Earlier rings are always kept whole, so the patch stays face-connected.
pub fn build_patch(mesh: &PolyMesh, owner: usize, target: usize) -> Result<Patch, PatchError> {
    if target == 0 {
        return Err(PatchError::ZeroTarget);
    }
    let mut in_patch = vec![false; mesh.num_cells()];
    in_patch[owner] = true;
    let mut members = vec![owner];
    let mut frontier = vec![owner];
    while members.len() < target {
        let mut ring: Vec<usize> = Vec::new();
        for &k in &frontier {
            for nb in mesh.neighbors(k) {
                if !in_patch[nb] {
                    in_patch[nb] = true;
                    ring.push(nb);
                }
            }
        }
        if ring.is_empty() {
            return Err(PatchError::Exhausted {
                owner,
                found: members.len(),
                target,
            });
        }
        ring.sort_unstable();
        let needed = target - members.len();
        if ring.len() > needed {
            let center = mesh.barycenter(owner);
            let mut by_distance = ring.clone();
            by_distance.sort_by(|&a, &b| {
                let da = (mesh.barycenter(a) - center).norm_squared();
                let db = (mesh.barycenter(b) - center).norm_squared();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            by_distance.truncate(needed);
            ring.retain(|k| by_distance.contains(k));
        }
        members.extend_from_slice(&ring);
        frontier = ring;
    }
    let points = members.iter().map(|&k| mesh.barycenter(k)).collect();
    Ok(Patch { owner, members, points })
}

/// Patches of every cell with the same target cardinality.
pub fn build_patches(mesh: &PolyMesh, target: usize) -> Result<Vec<Patch>, PatchError> {
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|k| build_patch(mesh, k, target))
        .collect()
}

/// Uniform patch sizes for smooth 2D problems on triangular, Voronoi and
/// mixed meshes, and a user-supplied size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchProfile {
    Example1,
    Example2,
    Example3,
    Custom(usize),
}

impl std::str::FromStr for PatchProfile {
    type Err = PatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "example1" => Ok(Self::Example1),
            "example2" => Ok(Self::Example2),
            "example3" => Ok(Self::Example3),
            other => other
                .strip_prefix("custom:")
                .and_then(|n| n.parse().ok())
                .map(Self::Custom)
                .ok_or_else(|| PatchError::UnknownProfile(other.to_string())),
        }
    }
}

const SIZES: [[usize; 5]; 3] = [[9, 15, 22, 29, 38], [9, 16, 23, 32, 45], [9, 20, 28, 38, 49]];

pub fn patch_size_for_degree(m: usize, profile: PatchProfile) -> Result<usize, PatchError> {
    let row = match profile {
        PatchProfile::Example1 => 0,
        PatchProfile::Example2 => 1,
        PatchProfile::Example3 => 2,
        PatchProfile::Custom(size) => {
            let dim = dim_p(m);
            return if size < dim {
                Err(PatchError::TooSmall { size, degree: m, dim })
            } else {
                Ok(size)
            };
        }
    };
    if !(2..=6).contains(&m) {
        return Err(PatchError::UnsupportedDegree(m));
    }
    Ok(SIZES[row][m - 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_quad, generate_structured_tri, Rect};
    use std::collections::VecDeque;

    #[test]
    fn target_one_is_owner() {
        let m = generate_structured_tri(3, Rect::UNIT).unwrap();
        let p = build_patch(&m, 7, 1).unwrap();
        assert_eq!(p.members, vec![7]);
        assert_eq!(build_patch(&m, 7, 0), Err(PatchError::ZeroTarget));
    }

    #[test]
    fn chain_of_five() {
        let m = generate_structured_quad(5, 1, Rect::new(0.0, 1.0, 0.0, 0.2)).unwrap();
        assert_eq!(build_patch(&m, 0, 3).unwrap().members, vec![0, 1, 2]);
        assert_eq!(build_patch(&m, 2, 3).unwrap().members, vec![2, 1, 3]);
        assert_eq!(build_patch(&m, 4, 3).unwrap().members, vec![4, 3, 2]);
        assert!(matches!(
            build_patch(&m, 0, 6),
            Err(PatchError::Exhausted { found: 5, .. })
        ));
    }

    /// Cells reachable from the owner while staying inside `members`.
    fn bfs_connected(mesh: &PolyMesh, members: &[usize]) -> bool {
        let mut seen = vec![members[0]];
        let mut queue = VecDeque::from([members[0]]);
        while let Some(k) = queue.pop_front() {
            for nb in mesh.neighbors(k) {
                if members.contains(&nb) && !seen.contains(&nb) {
                    seen.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        seen.len() == members.len()
    }

    #[test]
    fn interior_patch_on_tri_mesh() {
        let m = generate_structured_tri(10, Rect::UNIT).unwrap();
        let owner = 2 * (5 * 10 + 5);
        for target in [9, 15, 22, 29, 38] {
            let p = build_patch(&m, owner, target).unwrap();
            assert_eq!(p.len(), target);
            assert_eq!(p.members[0], owner);
            let mut sorted = p.members.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), target);
            assert!(bfs_connected(&m, &p.members));
        }
    }

    #[test]
    fn boundary_patches_are_connected() {
        let m = generate_structured_tri(6, Rect::UNIT).unwrap();
        for p in build_patches(&m, 22).unwrap() {
            assert_eq!(p.len(), 22);
            assert!(bfs_connected(&m, &p.members));
        }
    }

    #[test]
    fn translated_owner_gives_translated_patch() {
        let n = 12;
        let m = generate_structured_tri(n, Rect::UNIT).unwrap();
        // Cell index 2 (j n + i) + t; shifting by one square is +2 (x) or +2n (y).
        let a = 2 * (5 * n + 5);
        for (shift, dx, dy) in [(2, 1.0, 0.0), (2 * n, 0.0, 1.0)] {
            let pa = build_patch(&m, a, 15).unwrap();
            let pb = build_patch(&m, a + shift, 15).unwrap();
            let moved: Vec<usize> = pa.members.iter().map(|k| k + shift).collect();
            assert_eq!(moved, pb.members);
            let d = nalgebra::Vector2::new(dx, dy) / n as f64;
            for (x, y) in pa.points.iter().zip(&pb.points) {
                assert!((x + d - y).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn deterministic() {
        let m = generate_structured_tri(7, Rect::UNIT).unwrap();
        assert_eq!(build_patches(&m, 20).unwrap(), build_patches(&m, 20).unwrap());
    }

    #[test]
    fn table_sizes() {
        assert_eq!(patch_size_for_degree(2, PatchProfile::Example1), Ok(9));
        assert_eq!(patch_size_for_degree(6, PatchProfile::Example1), Ok(38));
        assert_eq!(patch_size_for_degree(3, PatchProfile::Example3), Ok(20));
        assert_eq!(patch_size_for_degree(5, PatchProfile::Example2), Ok(32));
        assert_eq!(
            patch_size_for_degree(2, PatchProfile::Custom(5)),
            Err(PatchError::TooSmall {
                size: 5,
                degree: 2,
                dim: 6
            })
        );
        assert_eq!(
            patch_size_for_degree(7, PatchProfile::Example1),
            Err(PatchError::UnsupportedDegree(7))
        );
        for m in 2..=6 {
            for prof in [PatchProfile::Example1, PatchProfile::Example2, PatchProfile::Example3] {
                assert!(patch_size_for_degree(m, prof).unwrap() > dim_p(m));
            }
        }
        assert_eq!("custom:12".parse::<PatchProfile>(), Ok(PatchProfile::Custom(12)));
        assert!("nope".parse::<PatchProfile>().is_err());
    }
}
