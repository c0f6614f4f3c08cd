use nalgebra::Point2;

use super::{signed_area, MeshError};

/// Splits a simple counter-clockwise polygon into triangles given as local
/// vertex indices.
///
/// Strictly convex polygons are fanned from their first vertex; anything else
/// goes through ear clipping. Both produce at most `n - 2` triangles.
pub fn subtriangulate(pts: &[Point2<f64>]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = pts.len();
    if n < 3 {
        return Err(MeshError::InvalidArgument(format!("polygon with {n} vertices")));
    }
    check_simple(pts)?;
    if signed_area(pts) <= 0.0 {
        return Err(MeshError::InvalidArgument("polygon is not counter-clockwise".into()));
    }
    if n == 3 {
        return Ok(vec![[0, 1, 2]]);
    }
    if is_strictly_convex(pts) {
        return Ok((1..n - 1).map(|i| [0, i, i + 1]).collect());
    }
    ear_clip(pts)
}

fn cross(o: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    (a - o).perp(&(b - o))
}

fn is_strictly_convex(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    (0..n).all(|i| cross(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]) > 0.0)
}

fn scale2(pts: &[Point2<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for p in pts {
        d = d.max((p - pts[0]).norm_squared());
    }
    d
}

fn segments_intersect(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point2<f64>, b: Point2<f64>, p: Point2<f64>, d: f64| {
        d == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn check_simple(pts: &[Point2<f64>]) -> Result<(), MeshError> {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            // Adjacent edges share a vertex by construction.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return Err(MeshError::SelfIntersecting(i, j));
            }
        }
    }
    Ok(())
}

fn ear_clip(pts: &[Point2<f64>]) -> Result<Vec<[usize; 3]>, MeshError> {
    let tol = 1e-14 * scale2(pts);
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::with_capacity(pts.len() - 2);
    while remaining.len() > 3 {
        let r = remaining.len();
        let mut clipped = false;
        for i in 0..r {
            let (a, b, c) = (remaining[(i + r - 1) % r], remaining[i], remaining[(i + 1) % r]);
            let turn = cross(pts[a], pts[b], pts[c]);
            if turn.abs() <= tol {
                // Collinear vertex: drop it without emitting a sliver.
                remaining.remove(i);
                clipped = true;
                break;
            }
            if turn < 0.0 {
                continue;
            }
            let blocked = remaining.iter().any(|&v| {
                v != a && v != b && v != c && {
                    let p = pts[v];
                    cross(pts[a], pts[b], p) >= -tol
                        && cross(pts[b], pts[c], p) >= -tol
                        && cross(pts[c], pts[a], p) >= -tol
                }
            });
            if !blocked {
                tris.push([a, b, c]);
                remaining.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(MeshError::InvalidArgument("ear clipping found no ear".into()));
        }
    }
    if cross(pts[remaining[0]], pts[remaining[1]], pts[remaining[2]]).abs() > tol {
        tris.push([remaining[0], remaining[1], remaining[2]]);
    }
    Ok(tris)
}
