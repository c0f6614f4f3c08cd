//! Conforming polygonal meshes in 2D.
//!
//! A [`PolyMesh`] owns its vertices and counter-clockwise cell loops and
//! derives the face topology and the geometric caches once at construction.
//! Each face is stored once with a `left` cell that traverses it in the
//! stored vertex order; the unit normal points out of `left` (into `right`
//! for interior faces, out of the domain on the boundary).

mod generate;
mod io;
mod triangulate;

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

pub use generate::{
    generate_lshape_tri, generate_structured_mixed, generate_structured_quad, generate_structured_tri,
    perturb_interior, Rect,
};
pub use io::{
    import_mesh, import_msh, parse_msh, parse_native, read_native, write_native, write_native_string, MshImport,
};
pub use triangulate::subtriangulate;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("cell {cell} is degenerate: {reason}")]
    DegenerateCell { cell: usize, reason: String },
    #[error("polygon is self-intersecting (edges {0} and {1} cross)")]
    SelfIntersecting(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A cell's view of one of its faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceSide {
    pub face: usize,
    pub side: Side,
}

impl FaceSide {
    /// Sign turning the stored face normal into the cell's outward normal.
    pub fn outward_sign(&self) -> f64 {
        match self.side {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Face {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: Option<usize>,
    pub length: f64,
    pub normal: Vector2<f64>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn midpoint(&self, mesh: &PolyMesh) -> Point2<f64> {
        let [a, b] = self.vertices;
        nalgebra::center(&mesh.vertices[a], &mesh.vertices[b])
    }
}

#[derive(Debug, Clone)]
pub struct PolyMesh {
    vertices: Vec<Point2<f64>>,
    cells: Vec<Vec<usize>>,
    faces: Vec<Face>,
    cell_faces: Vec<Vec<FaceSide>>,
    barycenters: Vec<Point2<f64>>,
    diameters: Vec<f64>,
    areas: Vec<f64>,
    subtriangles: Vec<Vec<[usize; 3]>>,
}

impl PolyMesh {
    /// Builds the topology and caches, validating conformity and orientation.
    pub fn new(vertices: Vec<Point2<f64>>, cells: Vec<Vec<usize>>) -> Result<Self, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::InvalidArgument("mesh has no cells".into()));
        }
        let mut areas = Vec::with_capacity(cells.len());
        let mut barycenters = Vec::with_capacity(cells.len());
        let mut diameters = Vec::with_capacity(cells.len());
        let mut subtriangles = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            if cell.len() < 3 {
                return Err(MeshError::DegenerateCell {
                    cell: k,
                    reason: format!("{} vertices", cell.len()),
                });
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::DegenerateCell {
                    cell: k,
                    reason: format!("vertex index {v} out of range"),
                });
            }
            let mut sorted = cell.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::DegenerateCell {
                    cell: k,
                    reason: "repeated vertex".into(),
                });
            }
            let pts: Vec<Point2<f64>> = cell.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&pts);
            if area <= 0.0 {
                return Err(MeshError::DegenerateCell {
                    cell: k,
                    reason: format!("non-positive signed area {area:e} (cells must be counter-clockwise)"),
                });
            }
            let tris = subtriangulate(&pts).map_err(|e| MeshError::DegenerateCell {
                cell: k,
                reason: e.to_string(),
            })?;
            subtriangles.push(tris.iter().map(|t| t.map(|i| cell[i])).collect());
            areas.push(area);
            barycenters.push(centroid(&pts, area));
            diameters.push(diameter(&pts));
        }

        let (faces, cell_faces) = build_faces(&vertices, &cells)?;
        let mesh = PolyMesh {
            vertices,
            cells,
            faces,
            cell_faces,
            barycenters,
            diameters,
            areas,
            subtriangles,
        };
        mesh.check_hanging_nodes()?;
        Ok(mesh)
    }

    /// A vertex strictly inside a boundary face means the neighbour across it
    /// was split: a hanging node.
    fn check_hanging_nodes(&self) -> Result<(), MeshError> {
        let boundary: Vec<usize> = (0..self.faces.len()).filter(|&f| self.faces[f].is_boundary()).collect();
        let mut candidates: Vec<usize> = boundary.iter().flat_map(|&f| self.faces[f].vertices).collect();
        candidates.sort_unstable();
        candidates.dedup();
        for &f in &boundary {
            let [a, b] = self.faces[f].vertices;
            let pa = self.vertices[a];
            let d = self.vertices[b] - pa;
            let len2 = d.norm_squared();
            for &v in &candidates {
                if v == a || v == b {
                    continue;
                }
                let r = self.vertices[v] - pa;
                let t = r.dot(&d) / len2;
                let dist = (r.x * d.y - r.y * d.x).abs() / len2.sqrt();
                if t > 1e-10 && t < 1.0 - 1e-10 && dist < 1e-10 * len2.sqrt() {
                    return Err(MeshError::Topology(format!(
                        "face {f} ({a}, {b}) has hanging node {v}: mesh is not conforming"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point2<f64> {
        self.vertices[v]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> &[usize] {
        &self.cells[k]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    pub fn cell_faces(&self, k: usize) -> &[FaceSide] {
        &self.cell_faces[k]
    }

    pub fn barycenter(&self, k: usize) -> Point2<f64> {
        self.barycenters[k]
    }

    pub fn diameter(&self, k: usize) -> f64 {
        self.diameters[k]
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn subtriangles(&self, k: usize) -> &[[usize; 3]] {
        &self.subtriangles[k]
    }

    /// Mesh size `h = max h_K`.
    pub fn h(&self) -> f64 {
        self.diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Face-neighbours of cell `k`, in face order.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.cell_faces[k].iter().filter_map(move |fs| {
            let face = &self.faces[fs.face];
            match fs.side {
                Side::Left => face.right,
                Side::Right => Some(face.left),
            }
        })
    }

    /// Largest `h_K / rho` over cells, with `rho` the smallest inradius among
    /// the cell's sub-triangles.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_cells())
            .map(|k| {
                let rho = self.subtriangles[k]
                    .iter()
                    .map(|t| {
                        let [a, b, c] = t.map(|v| self.vertices[v]);
                        let area = 0.5 * ((b - a).perp(&(c - a))).abs();
                        let perim = (b - a).norm() + (c - b).norm() + (a - c).norm();
                        2.0 * area / perim
                    })
                    .fold(f64::INFINITY, f64::min);
                self.diameters[k] / rho
            })
            .fold(0.0, f64::max)
    }

    /// Index of the cell containing `p` (closure), if any.
    pub fn locate(&self, p: &Point2<f64>) -> Option<usize> {
        (0..self.num_cells()).find(|&k| {
            self.subtriangles[k].iter().any(|t| {
                let [a, b, c] = t.map(|v| self.vertices[v]);
                let scale = self.diameters[k] * self.diameters[k] * 1e-12;
                (b - a).perp(&(p - a)) >= -scale && (c - b).perp(&(p - b)) >= -scale && (a - c).perp(&(p - c)) >= -scale
            })
        })
    }
}

pub(crate) fn signed_area(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
}

fn centroid(pts: &[Point2<f64>], area: f64) -> Point2<f64> {
    // Shifted to the first vertex for accuracy far from the origin.
    let o = pts[0];
    let n = pts.len();
    let mut c = Vector2::zeros();
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        c += (p + q) * cross;
    }
    o + c / (6.0 * area)
}

fn diameter(pts: &[Point2<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            d = d.max((p - q).norm());
        }
    }
    d
}

type FaceTopology = (Vec<Face>, Vec<Vec<FaceSide>>);

fn build_faces(vertices: &[Point2<f64>], cells: &[Vec<usize>]) -> Result<FaceTopology, MeshError> {
    let mut faces: Vec<Face> = Vec::new();
    let mut cell_faces: Vec<Vec<FaceSide>> = vec![Vec::new(); cells.len()];
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, cell) in cells.iter().enumerate() {
        let n = cell.len();
        for i in 0..n {
            let (a, b) = (cell[i], cell[(i + 1) % n]);
            let key = (a.min(b), a.max(b));
            match lookup.get(&key) {
                None => {
                    let d = vertices[b] - vertices[a];
                    let length = d.norm();
                    lookup.insert(key, faces.len());
                    cell_faces[k].push(FaceSide {
                        face: faces.len(),
                        side: Side::Left,
                    });
                    faces.push(Face {
                        vertices: [a, b],
                        left: k,
                        right: None,
                        length,
                        normal: Vector2::new(d.y, -d.x) / length,
                    });
                }
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.vertices != [b, a] {
                        return Err(MeshError::Topology(format!(
                            "face {f} ({a}, {b}) is traversed in the same direction by cells {} and {k} (overlapping or duplicated cells)",
                            face.left
                        )));
                    }
                    if let Some(r) = face.right {
                        return Err(MeshError::Topology(format!(
                            "face {f} ({a}, {b}) is shared by more than two cells ({}, {r}, {k})",
                            face.left
                        )));
                    }
                    face.right = Some(k);
                    cell_faces[k].push(FaceSide {
                        face: f,
                        side: Side::Right,
                    });
                }
            }
        }
    }
    Ok((faces, cell_faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_two_triangles() -> PolyMesh {
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        PolyMesh::new(v, vec![vec![0, 1, 2], vec![0, 2, 3]]).unwrap()
    }

    #[test]
    fn two_triangles_topology() {
        let m = unit_square_two_triangles();
        assert_eq!(m.num_faces(), 5);
        assert_eq!(m.num_boundary_faces(), 4);
        let interior: Vec<&Face> = m.faces().iter().filter(|f| !f.is_boundary()).collect();
        assert_eq!(interior.len(), 1);
        let f = interior[0];
        let d = m.barycenter(f.right.unwrap()) - m.barycenter(f.left);
        assert!(f.normal.dot(&d) > 0.0);
        assert_eq!(m.neighbors(0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn duplicated_cell_is_rejected() {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let err = PolyMesh::new(v, vec![vec![0, 1, 2], vec![0, 1, 2]]).unwrap_err();
        assert!(
            matches!(err, MeshError::Topology(ref s) if s.contains("face 0")),
            "{err}"
        );
    }

    #[test]
    fn clockwise_cell_is_rejected() {
        let v = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(matches!(
            PolyMesh::new(v, vec![vec![0, 2, 1]]),
            Err(MeshError::DegenerateCell { cell: 0, .. })
        ));
    }

    #[test]
    fn hanging_node_is_rejected() {
        // Left square, right side split into two squares: vertex 5 hangs.
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 0.5),
            Point2::new(2.0, 0.5),
            Point2::new(2.0, 1.0),
        ];
        let cells = vec![vec![0, 1, 2, 3], vec![1, 4, 6, 5], vec![5, 6, 7, 2]];
        let err = PolyMesh::new(v, cells).unwrap_err();
        assert!(
            matches!(err, MeshError::Topology(ref s) if s.contains("hanging node 5")),
            "{err}"
        );
    }

    #[test]
    fn barycenter_and_diameter() {
        let m = unit_square_two_triangles();
        let c = m.barycenter(0);
        assert!((c - Point2::new(2.0 / 3.0, 1.0 / 3.0)).norm() < 1e-15);
        assert!((m.diameter(0) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.locate(&Point2::new(0.9, 0.1)), Some(0));
        assert_eq!(m.locate(&Point2::new(0.1, 0.9)), Some(1));
        assert_eq!(m.locate(&Point2::new(1.5, 0.5)), None);
    }
}
