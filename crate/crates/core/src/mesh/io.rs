//! Mesh file formats.
//!
//! Native text format:
//!
//! ```text
//! NV NC
//! x y            (NV lines)
//! k i1 ... ik    (NC lines, 0-based vertex indices, counter-clockwise)
//! ```
//!
//! Coordinates are written with the shortest representation that parses back
//! to the same `f64`, so a write/read pair is bit-exact.
//!
//! The Gmsh reader accepts MSH 2.2 ASCII files and keeps element types 2
//! (triangle) and 3 (quadrilateral).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point2;

use super::{signed_area, MeshError, PolyMesh};

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from {tok:?}")))
}

pub fn parse_native(text: &str) -> Result<PolyMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let mut toks = header.split_whitespace();
    let nv: usize = field(toks.next(), ln, "vertex count")?;
    let nc: usize = field(toks.next(), ln, "cell count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(ln, "unexpected end of file in vertex block"))?;
        let mut t = l.split_whitespace();
        let x: f64 = field(t.next(), ln, "x")?;
        let y: f64 = field(t.next(), ln, "y")?;
        if t.next().is_some() {
            return Err(parse_err(ln, "trailing tokens after vertex coordinates"));
        }
        vertices.push(Point2::new(x, y));
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(ln, "unexpected end of file in cell block"))?;
        let mut t = l.split_whitespace();
        let k: usize = field(t.next(), ln, "cell vertex count")?;
        let cell: Vec<usize> = (0..k)
            .map(|_| field::<usize>(t.next(), ln, "vertex index"))
            .collect::<Result<_, _>>()?;
        if t.next().is_some() {
            return Err(parse_err(ln, format!("more than {k} vertex indices")));
        }
        if let Some(&v) = cell.iter().find(|&&v| v >= nv) {
            return Err(parse_err(ln, format!("vertex index {v} out of range (NV = {nv})")));
        }
        cells.push(cell);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after cell block"));
    }
    PolyMesh::new(vertices, cells)
}

pub fn read_native(path: impl AsRef<Path>) -> Result<PolyMesh, MeshError> {
    parse_native(&std::fs::read_to_string(path)?)
}

pub fn write_native_string(mesh: &PolyMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", mesh.num_vertices(), mesh.num_cells());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?}", v.x, v.y);
    }
    for c in mesh.cells() {
        let _ = write!(s, "{}", c.len());
        for v in c {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_native(mesh: &PolyMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, write_native_string(mesh))?;
    Ok(())
}

#[derive(Debug)]
pub struct MshImport {
    pub mesh: PolyMesh,
    pub warnings: Vec<String>,
}

/// Tag to index map and coordinates.
type NodeTable = (HashMap<u64, usize>, Vec<Point2<f64>>);

/// Parses a Gmsh MSH 2.2 ASCII file. Unsupported element types are skipped
/// and summarized in `warnings`; clockwise elements are reoriented.
pub fn parse_msh(text: &str) -> Result<MshImport, MeshError> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).collect();
    let mut nodes: Option<NodeTable> = None;
    let mut elements: Option<Vec<(usize, Vec<u64>)>> = None;
    let mut skipped: BTreeMap<u32, usize> = BTreeMap::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, l) = lines[i];
        i += 1;
        match l {
            "" => {}
            "$MeshFormat" => {
                let (fln, fmt) = *lines.get(i).ok_or_else(|| parse_err(ln, "missing format line"))?;
                let mut t = fmt.split_whitespace();
                let version: String = field(t.next(), fln, "version")?;
                let file_type: u32 = field(t.next(), fln, "file type")?;
                if !version.starts_with("2.") {
                    return Err(parse_err(
                        fln,
                        format!("unsupported MSH version {version} (expected 2.2)"),
                    ));
                }
                if file_type != 0 {
                    return Err(parse_err(fln, "binary MSH files are not supported"));
                }
                i = skip_to_end(&lines, i, "$EndMeshFormat")?;
            }
            "$Nodes" => {
                let (cln, count) = *lines.get(i).ok_or_else(|| parse_err(ln, "missing node count"))?;
                let n: usize = field(Some(count), cln, "node count")?;
                let mut ids = HashMap::with_capacity(n);
                let mut pts = Vec::with_capacity(n);
                for k in 0..n {
                    let (nln, nl) = *lines
                        .get(i + 1 + k)
                        .ok_or_else(|| parse_err(cln, "unexpected end of file in $Nodes"))?;
                    let mut t = nl.split_whitespace();
                    let id: u64 = field(t.next(), nln, "node id")?;
                    let x: f64 = field(t.next(), nln, "x")?;
                    let y: f64 = field(t.next(), nln, "y")?;
                    if ids.insert(id, pts.len()).is_some() {
                        return Err(parse_err(nln, format!("duplicate node id {id}")));
                    }
                    pts.push(Point2::new(x, y));
                }
                nodes = Some((ids, pts));
                i = skip_to_end(&lines, i + 1 + n, "$EndNodes")?;
            }
            "$Elements" => {
                let (cln, count) = *lines.get(i).ok_or_else(|| parse_err(ln, "missing element count"))?;
                let n: usize = field(Some(count), cln, "element count")?;
                let mut elems = Vec::new();
                for k in 0..n {
                    let (eln, el) = *lines
                        .get(i + 1 + k)
                        .ok_or_else(|| parse_err(cln, "unexpected end of file in $Elements"))?;
                    let mut t = el.split_whitespace();
                    let _id: u64 = field(t.next(), eln, "element id")?;
                    let ty: u32 = field(t.next(), eln, "element type")?;
                    let ntags: usize = field(t.next(), eln, "tag count")?;
                    for _ in 0..ntags {
                        let _: i64 = field(t.next(), eln, "tag")?;
                    }
                    let nv = match ty {
                        2 => 3,
                        3 => 4,
                        _ => {
                            *skipped.entry(ty).or_default() += 1;
                            continue;
                        }
                    };
                    let vs: Vec<u64> = (0..nv)
                        .map(|_| field::<u64>(t.next(), eln, "node id"))
                        .collect::<Result<_, _>>()?;
                    elems.push((eln, vs));
                }
                elements = Some(elems);
                i = skip_to_end(&lines, i + 1 + n, "$EndElements")?;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                let end = format!("$End{}", &s[1..]);
                i = skip_to_end(&lines, i, &end)?;
            }
            _ => return Err(parse_err(ln, format!("unexpected content {l:?}"))),
        }
    }
    let (ids, pts) = nodes.ok_or_else(|| parse_err(lines.len(), "no $Nodes section"))?;
    let elems = elements.ok_or_else(|| parse_err(lines.len(), "no $Elements section"))?;

    // Keep only nodes referenced by 2D elements, in first-use order.
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut cells = Vec::with_capacity(elems.len());
    for (eln, vs) in elems {
        let mut cell = Vec::with_capacity(vs.len());
        for id in vs {
            let src = *ids
                .get(&id)
                .ok_or_else(|| parse_err(eln, format!("element references unknown node {id}")))?;
            let next = vertices.len();
            let v = *remap.entry(src).or_insert_with(|| {
                vertices.push(pts[src]);
                next
            });
            cell.push(v);
        }
        let poly: Vec<Point2<f64>> = cell.iter().map(|&v| vertices[v]).collect();
        if signed_area(&poly) < 0.0 {
            cell.reverse();
        }
        cells.push(cell);
    }
    let warnings = skipped
        .into_iter()
        .map(|(ty, n)| format!("ignored {n} element(s) of unsupported type {ty}"))
        .collect();
    Ok(MshImport {
        mesh: PolyMesh::new(vertices, cells)?,
        warnings,
    })
}

fn skip_to_end(lines: &[(usize, &str)], from: usize, end: &str) -> Result<usize, MeshError> {
    lines[from.min(lines.len())..]
        .iter()
        .position(|(_, l)| *l == end)
        .map(|p| from + p + 1)
        .ok_or_else(|| parse_err(lines.last().map_or(1, |l| l.0), format!("missing {end}")))
}

pub fn import_msh(path: impl AsRef<Path>) -> Result<MshImport, MeshError> {
    parse_msh(&std::fs::read_to_string(path)?)
}

/// Reads `.msh` files with the Gmsh reader and anything else as native.
pub fn import_mesh(path: impl AsRef<Path>) -> Result<MshImport, MeshError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("msh")) {
        import_msh(path)
    } else {
        Ok(MshImport {
            mesh: read_native(path)?,
            warnings: Vec::new(),
        })
    }
}
