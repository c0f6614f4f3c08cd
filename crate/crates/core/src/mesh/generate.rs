use nalgebra::Point2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{MeshError, PolyMesh};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    fn check(&self) -> Result<(), MeshError> {
        if self.x1 > self.x0 && self.y1 > self.y0 {
            Ok(())
        } else {
            Err(MeshError::InvalidArgument(format!("empty rectangle {self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

fn grid_vertices(nx: usize, ny: usize, rect: Rect) -> Vec<Point2<f64>> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = rect.y0 + (rect.y1 - rect.y0) * j as f64 / ny as f64;
        for i in 0..=nx {
            let x = rect.x0 + (rect.x1 - rect.x0) * i as f64 / nx as f64;
            v.push(Point2::new(x, y));
        }
    }
    v
}

fn check_subdivisions(n: usize) -> Result<(), MeshError> {
    if n == 0 {
        Err(MeshError::InvalidArgument(
            "number of subdivisions must be at least 1".into(),
        ))
    } else {
        Ok(())
    }
}

/// `2 n^2` triangles: every grid square is cut along its rising diagonal.
pub fn generate_structured_tri(n: usize, rect: Rect) -> Result<PolyMesh, MeshError> {
    check_subdivisions(n)?;
    rect.check()?;
    let vertices = grid_vertices(n, n, rect);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    PolyMesh::new(vertices, cells)
}

/// `nx * ny` axis-aligned quadrilaterals.
pub fn generate_structured_quad(nx: usize, ny: usize, rect: Rect) -> Result<PolyMesh, MeshError> {
    check_subdivisions(nx)?;
    check_subdivisions(ny)?;
    rect.check()?;
    let vertices = grid_vertices(nx, ny, rect);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let cells = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]))
        .collect();
    PolyMesh::new(vertices, cells)
}

/// Mixed triangle/quadrilateral mesh: grid squares in a checkerboard pattern
/// stay quadrilaterals, the others are split into two triangles.
pub fn generate_structured_mixed(n: usize, rect: Rect) -> Result<PolyMesh, MeshError> {
    check_subdivisions(n)?;
    rect.check()?;
    let vertices = grid_vertices(n, n, rect);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if (i + j) % 2 == 0 {
                cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else if (i + j) % 4 == 1 {
                cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            } else {
                cells.push(vec![id(i, j), id(i + 1, j), id(i, j + 1)]);
                cells.push(vec![id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    PolyMesh::new(vertices, cells)
}

/// Moves every interior vertex by a random offset of length at most
/// `amplitude` times its shortest incident edge. Boundary vertices stay put,
/// so the domain is unchanged. Deterministic for a given `seed`.
pub fn perturb_interior(mesh: &PolyMesh, amplitude: f64, seed: u64) -> Result<PolyMesh, MeshError> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(MeshError::InvalidArgument(format!(
            "perturbation amplitude {amplitude} outside [0, 0.5)"
        )));
    }
    let nv = mesh.num_vertices();
    let mut on_boundary = vec![false; nv];
    let mut shortest = vec![f64::INFINITY; nv];
    for f in mesh.faces() {
        for &v in &f.vertices {
            shortest[v] = shortest[v].min(f.length);
            on_boundary[v] |= f.is_boundary();
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let vertices = (0..nv)
        .map(|v| {
            let (r, t): (f64, f64) = (rng.random(), rng.random());
            let p = mesh.vertex(v);
            if on_boundary[v] || !shortest[v].is_finite() {
                return p;
            }
            let len = amplitude * shortest[v] * r.sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * t).sin_cos();
            Point2::new(p.x + len * c, p.y + len * s)
        })
        .collect();
    PolyMesh::new(vertices, mesh.cells().to_vec())
}

/// Triangular mesh of `(-1, 1)^2 \ [0, 1) x (-1, 0]` with grid spacing `1/n`
/// (`6 n^2` triangles). The reentrant corner sits at the origin.
pub fn generate_lshape_tri(n: usize) -> Result<PolyMesh, MeshError> {
    check_subdivisions(n)?;
    let m = 2 * n;
    let full = grid_vertices(m, m, Rect::new(-1.0, 1.0, -1.0, 1.0));
    let full_id = |i: usize, j: usize| j * (m + 1) + i;
    // Square (i, j) lies in the removed quadrant when x >= 0 and y < 0.
    let removed = |i: usize, j: usize| i >= n && j < n;
    let mut remap = vec![usize::MAX; full.len()];
    let mut vertices = Vec::new();
    let mut cells = Vec::with_capacity(6 * n * n);
    let mut take = |v: usize, vertices: &mut Vec<Point2<f64>>| {
        if remap[v] == usize::MAX {
            remap[v] = vertices.len();
            vertices.push(full[v]);
        }
        remap[v]
    };
    for j in 0..m {
        for i in 0..m {
            if removed(i, j) {
                continue;
            }
            let a = take(full_id(i, j), &mut vertices);
            let b = take(full_id(i + 1, j), &mut vertices);
            let c = take(full_id(i + 1, j + 1), &mut vertices);
            let d = take(full_id(i, j + 1), &mut vertices);
            cells.push(vec![a, b, c]);
            cells.push(vec![a, c, d]);
        }
    }
    PolyMesh::new(vertices, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(m: &PolyMesh) {
        for f in m.faces() {
            assert!((f.normal.norm() - 1.0).abs() < 1e-14);
            if let Some(r) = f.right {
                assert!(f.normal.dot(&(m.barycenter(r) - m.barycenter(f.left))) > 0.0);
            }
        }
        for k in 0..m.num_cells() {
            let mut closure = nalgebra::Vector2::zeros();
            for fs in m.cell_faces(k) {
                let f = m.face(fs.face);
                closure += f.normal * (f.length * fs.outward_sign());
                assert!(f.length <= m.diameter(k) * (1.0 + 1e-14));
            }
            assert!(closure.norm() < 1e-12);
            let sub: f64 = m
                .subtriangles(k)
                .iter()
                .map(|t| {
                    let [a, b, c] = t.map(|v| m.vertex(v));
                    0.5 * (b - a).perp(&(c - a))
                })
                .sum();
            assert!(((sub - m.area(k)) / m.area(k)).abs() < 1e-12);
        }
        // Every interior face seen by two cells, boundary by one.
        let mut seen = vec![0usize; m.num_faces()];
        for k in 0..m.num_cells() {
            for fs in m.cell_faces(k) {
                seen[fs.face] += 1;
            }
        }
        for (f, count) in seen.iter().enumerate() {
            assert_eq!(*count, if m.face(f).is_boundary() { 1 } else { 2 });
        }
        assert!(m.shape_regularity() < 50.0);
    }

    #[test]
    fn structured_tri_examples() {
        let m = generate_structured_tri(1, Rect::UNIT).unwrap();
        assert_eq!(m.num_cells(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-14);

        let m = generate_structured_tri(10, Rect::UNIT).unwrap();
        assert_eq!(m.num_cells(), 200);
        for k in 0..m.num_cells() {
            assert!((m.diameter(k) - 2f64.sqrt() / 10.0).abs() < 1e-14);
        }
        check_invariants(&m);

        let m = generate_structured_tri(2, Rect::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        assert_eq!(m.num_cells(), 8);
        assert!((m.total_area() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            generate_structured_tri(0, Rect::UNIT),
            Err(MeshError::InvalidArgument(_))
        ));
        assert!(generate_lshape_tri(0).is_err());
    }

    #[test]
    fn lshape() {
        for n in [1, 2, 3, 5] {
            let m = generate_lshape_tri(n).unwrap();
            assert_eq!(m.num_cells(), 6 * n * n);
            assert!((m.total_area() - 3.0).abs() < 1e-12);
            let origin = (0..m.num_vertices()).find(|&v| m.vertex(v).coords.norm() < 1e-15);
            let origin = origin.expect("corner vertex present");
            let on_boundary = m
                .faces()
                .iter()
                .any(|f| f.is_boundary() && f.vertices.contains(&origin));
            assert!(on_boundary);
            check_invariants(&m);
            let fine = generate_lshape_tri(2 * n).unwrap();
            let ratio = fine.h() / m.h();
            assert!((0.45..=0.55).contains(&ratio));
        }
    }

    #[test]
    fn mixed_and_quad() {
        let m = generate_structured_mixed(6, Rect::UNIT).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-13);
        assert!(m.cells().iter().any(|c| c.len() == 4));
        assert!(m.cells().iter().any(|c| c.len() == 3));
        check_invariants(&m);
        let q = generate_structured_quad(5, 1, Rect::new(0.0, 1.0, 0.0, 0.2)).unwrap();
        assert_eq!(q.num_cells(), 5);
        check_invariants(&q);
    }
}
