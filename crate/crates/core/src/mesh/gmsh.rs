//! Reader and writer for the Gmsh MSH 2.2 ASCII format.
//!
//! Only nodes and 3-node triangles (element type 2) are kept; every other
//! element type is skipped and counted.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::Point;

#[derive(Debug, thiserror::Error)]
pub enum GmshError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported MSH version {0} (expected 2.2 ASCII)")]
    UnsupportedVersion(String),
    #[error("malformed MSH file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no triangles found")]
    NoTriangles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmshMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Number of skipped elements per Gmsh element type.
    pub ignored: BTreeMap<u32, usize>,
}

pub fn load_gmsh(path: impl AsRef<Path>) -> Result<GmshMesh, GmshError> {
    parse_gmsh(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, GmshError> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => {
                    return Err(GmshError::Malformed {
                        line: self.line,
                        reason: "unexpected end of file".into(),
                    })
                }
            }
        }
    }

    fn malformed(&self, reason: impl Into<String>) -> GmshError {
        GmshError::Malformed {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn expect(&mut self, tag: &str) -> Result<(), GmshError> {
        let l = self.next()?;
        if l != tag {
            return Err(self.malformed(format!("expected {tag}, found {l:?}")));
        }
        Ok(())
    }

    fn count(&mut self) -> Result<usize, GmshError> {
        let l = self.next()?;
        l.parse().map_err(|_| self.malformed(format!("expected a count, found {l:?}")))
    }
}

pub fn parse_gmsh(text: &str) -> Result<GmshMesh, GmshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let mut node_index: HashMap<u64, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut ignored = BTreeMap::new();
    let mut seen_format = false;

    while let Some((i, raw)) = lines.inner.next() {
        lines.line = i + 1;
        let header = raw.trim();
        match header {
            "" => continue,
            "$MeshFormat" => {
                let l = lines.next()?;
                let mut parts = l.split_whitespace();
                let version = parts.next().unwrap_or_default();
                let file_type = parts.next().unwrap_or_default();
                if !version.starts_with("2.2") || file_type != "0" {
                    return Err(GmshError::UnsupportedVersion(l.to_string()));
                }
                lines.expect("$EndMeshFormat")?;
                seen_format = true;
            }
            "$Nodes" => {
                let n = lines.count()?;
                vertices.reserve(n);
                for _ in 0..n {
                    let l = lines.next()?;
                    let fields: Vec<&str> = l.split_whitespace().collect();
                    if fields.len() < 4 {
                        return Err(lines.malformed("node line needs id x y z"));
                    }
                    let id: u64 = fields[0].parse().map_err(|_| lines.malformed("bad node id"))?;
                    let x: f64 = fields[1].parse().map_err(|_| lines.malformed("bad x"))?;
                    let y: f64 = fields[2].parse().map_err(|_| lines.malformed("bad y"))?;
                    if node_index.insert(id, vertices.len()).is_some() {
                        return Err(lines.malformed(format!("duplicate node id {id}")));
                    }
                    vertices.push([x, y]);
                }
                lines.expect("$EndNodes")?;
            }
            "$Elements" => {
                let n = lines.count()?;
                for _ in 0..n {
                    let l = lines.next()?;
                    let fields: Vec<u64> = l
                        .split_whitespace()
                        .map(|f| f.parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| lines.malformed("non-integer element field"))?;
                    if fields.len() < 3 {
                        return Err(lines.malformed("element line too short"));
                    }
                    let kind = fields[1] as u32;
                    let n_tags = fields[2] as usize;
                    let nodes = &fields[3 + n_tags.min(fields.len() - 3)..];
                    if kind != 2 {
                        *ignored.entry(kind).or_insert(0) += 1;
                        continue;
                    }
                    if nodes.len() != 3 {
                        return Err(lines.malformed("triangle needs 3 nodes"));
                    }
                    let mut tri = [0; 3];
                    for (slot, id) in tri.iter_mut().zip(nodes) {
                        *slot = *node_index
                            .get(id)
                            .ok_or_else(|| lines.malformed(format!("unknown node {id}")))?;
                    }
                    triangles.push(tri);
                }
                lines.expect("$EndElements")?;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Unknown section: skip to its end tag.
                let end = format!("$End{}", &other[1..]);
                loop {
                    if lines.next()? == end {
                        break;
                    }
                }
            }
            other => {
                return Err(lines.malformed(format!("unexpected content {other:?}")));
            }
        }
    }
    if !seen_format {
        return Err(GmshError::Malformed {
            line: 1,
            reason: "missing $MeshFormat section".into(),
        });
    }
    if triangles.is_empty() {
        return Err(GmshError::NoTriangles);
    }
    Ok(GmshMesh {
        vertices,
        triangles,
        ignored,
    })
}

/// Writes vertices and triangles as MSH 2.2 ASCII (1-based ids, no tags
/// beyond the two default ones).
pub fn write_gmsh<W: Write>(
    mut out: W,
    vertices: &[Point],
    triangles: &[[usize; 3]],
) -> io::Result<()> {
    writeln!(out, "$MeshFormat\n2.2 0 8\n$EndMeshFormat")?;
    writeln!(out, "$Nodes\n{}", vertices.len())?;
    for (i, p) in vertices.iter().enumerate() {
        writeln!(out, "{} {:?} {:?} 0", i + 1, p[0], p[1])?;
    }
    writeln!(out, "$EndNodes\n$Elements\n{}", triangles.len())?;
    for (i, t) in triangles.iter().enumerate() {
        writeln!(out, "{} 2 2 1 1 {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    writeln!(out, "$EndElements")
}
