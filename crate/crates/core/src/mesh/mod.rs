//! Admissible two-point flux meshes in one and two dimensions.
//!
//! A [`Mesh`] stores cells (volume, center) and edges (measure, distance,
//! transmissibility, incidence). Cell centers of triangulations are
//! circumcenters, so the segment joining two neighboring centers is
//! orthogonal to their common edge and the two-point flux is consistent.
//!
//! Boundary edges are stored with their geometry but never carry flux:
//! every assembly in this crate iterates over interior edges only
//! (homogeneous Neumann conditions).

mod field;
mod generate;
mod gmsh;
mod quadrature;

pub use field::{
    approximate_gradient, discrete_seminorm, lebesgue_norm, max_norm, mean_value,
    project_cell_averages, project_cell_averages_indexed, DiscreteField,
};
pub use generate::{delaunay, disk_mesh, square_mesh, DiskMeshSpec, SquareMeshSpec};
pub use gmsh::{load_gmsh, parse_gmsh, write_gmsh, GmshError, GmshMesh};
pub use quadrature::{gauss_legendre, triangle_rule};

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

/// A point of the plane. One-dimensional meshes use `[x, 0.0]`.
pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Opaque identity of a mesh, carried by every [`DiscreteField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid interval bounds [{a}, {b}]")]
    InvalidBounds { a: f64, b: f64 },
    #[error("at least {min} cells are required, got {got}")]
    TooFewCells { min: usize, got: usize },
    #[error("triangle {triangle} references vertex {vertex}, but only {n_vertices} vertices exist")]
    VertexOutOfRange {
        triangle: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("non-finite coordinate at vertex {0}")]
    NonFiniteVertex(usize),
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("non-conforming triangulation: {0}")]
    NonConforming(String),
    #[error("degenerate transmissibility: non-positive distance d_sigma on edges {edges:?}")]
    DegenerateTransmissibility { edges: Vec<usize> },
    #[error("field belongs to a different mesh")]
    MeshMismatch,
    #[error("field has {found} values, mesh has {expected} cells")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("quadrature order {0} is not supported")]
    UnsupportedQuadrature(usize),
    #[error("mesh generation failed: {0}")]
    Generation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    Interval { left: f64, right: f64 },
    Triangle([Point; 3]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub volume: f64,
    pub center: Point,
    pub diameter: f64,
    pub shape: CellShape,
}

/// Cells adjacent to an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCells {
    Interior(usize, usize),
    Boundary(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub measure: f64,
    pub distance: f64,
    pub transmissibility: f64,
    pub cells: EdgeCells,
    /// Unit normal pointing out of the first adjacent cell.
    pub normal: Point,
    /// Signed distance from each adjacent center to the edge, positive on
    /// the cell's own side. Only the first entry is used for boundary edges.
    /// For interior edges `distance` is their sum, for boundary edges the
    /// absolute value of the first one.
    pub center_offsets: [f64; 2],
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        matches!(self.cells, EdgeCells::Interior(..))
    }

    /// Signed distance from the center of `cell` to the edge.
    pub fn offset_from(&self, cell: usize) -> Option<f64> {
        match self.cells {
            EdgeCells::Interior(k, _) if k == cell => Some(self.center_offsets[0]),
            EdgeCells::Interior(_, l) if l == cell => Some(self.center_offsets[1]),
            EdgeCells::Boundary(k) if k == cell => Some(self.center_offsets[0]),
            _ => None,
        }
    }

    /// Outward unit normal of `cell` on this edge.
    pub fn normal_from(&self, cell: usize) -> Option<Point> {
        match self.cells {
            EdgeCells::Interior(k, _) | EdgeCells::Boundary(k) if k == cell => Some(self.normal),
            EdgeCells::Interior(_, l) if l == cell => Some([-self.normal[0], -self.normal[1]]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    id: MeshId,
    dim: Dimension,
    cells: Vec<Cell>,
    volumes: Vec<f64>,
    edges: Vec<Edge>,
    cell_edges: Vec<Vec<usize>>,
    domain_measure: f64,
    size: f64,
}

/// Result of [`check_admissibility`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub zeta: f64,
    /// Minimum over cells `K` and edges of `K` of `|dist(x_K, sigma)| / d_sigma`.
    pub worst_ratio: f64,
    /// `(cell, edge)` pairs failing the bound.
    pub offending_edges: Vec<(usize, usize)>,
}

impl Mesh {
    /// Uniform mesh of `[a, b]` with `n_cells` cells.
    pub fn uniform_1d(a: f64, b: f64, n_cells: usize) -> Result<Mesh, MeshError> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(MeshError::InvalidBounds { a, b });
        }
        if n_cells < 2 {
            return Err(MeshError::TooFewCells {
                min: 2,
                got: n_cells,
            });
        }
        let h = (b - a) / n_cells as f64;
        let node = |i: usize| if i == n_cells { b } else { a + i as f64 * h };
        let cells: Vec<Cell> = (0..n_cells)
            .map(|i| {
                let (left, right) = (node(i), node(i + 1));
                Cell {
                    volume: h,
                    center: [0.5 * (left + right), 0.0],
                    diameter: h,
                    shape: CellShape::Interval { left, right },
                }
            })
            .collect();

        let mut edges = Vec::with_capacity(n_cells + 1);
        let mut cell_edges = vec![Vec::with_capacity(2); n_cells];
        edges.push(Edge {
            measure: 1.0,
            distance: 0.5 * h,
            transmissibility: 2.0 / h,
            cells: EdgeCells::Boundary(0),
            normal: [-1.0, 0.0],
            center_offsets: [0.5 * h, 0.0],
        });
        cell_edges[0].push(0);
        for i in 0..n_cells - 1 {
            let id = edges.len();
            edges.push(Edge {
                measure: 1.0,
                distance: h,
                transmissibility: 1.0 / h,
                cells: EdgeCells::Interior(i, i + 1),
                normal: [1.0, 0.0],
                center_offsets: [0.5 * h, 0.5 * h],
            });
            cell_edges[i].push(id);
            cell_edges[i + 1].push(id);
        }
        let id = edges.len();
        edges.push(Edge {
            measure: 1.0,
            distance: 0.5 * h,
            transmissibility: 2.0 / h,
            cells: EdgeCells::Boundary(n_cells - 1),
            normal: [1.0, 0.0],
            center_offsets: [0.5 * h, 0.0],
        });
        cell_edges[n_cells - 1].push(id);

        Ok(Mesh::assemble(
            Dimension::One,
            cells,
            edges,
            cell_edges,
            Some(b - a),
        ))
    }

    /// Circumcentered finite volume mesh of a conforming triangulation.
    ///
    /// Triangles may be given in either orientation. Edges whose center
    /// distance `d_sigma` is not positive are rejected with the full list of
    /// offending edge indices.
    pub fn from_triangulation(
        vertices: &[Point],
        triangles: &[[usize; 3]],
    ) -> Result<Mesh, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::TooFewCells { min: 1, got: 0 });
        }
        if let Some(i) = vertices
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(MeshError::NonFiniteVertex(i));
        }
        let scale = bounding_scale(vertices);

        let mut cells = Vec::with_capacity(triangles.len());
        let mut oriented = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        triangle: t,
                        vertex: v,
                        n_vertices: vertices.len(),
                    });
                }
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let signed = 0.5 * cross(sub(b, a), sub(c, a));
            if signed.abs() <= 1e-14 * scale * scale || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateTriangle {
                    triangle: t,
                    area: signed.abs(),
                });
            }
            let tri = if signed > 0.0 { *tri } else { [tri[0], tri[2], tri[1]] };
            let pts = tri.map(|v| vertices[v]);
            let diameter = (0..3)
                .map(|i| norm(sub(pts[(i + 1) % 3], pts[i])))
                .fold(0.0, f64::max);
            cells.push(Cell {
                volume: signed.abs(),
                center: circumcenter(pts),
                diameter,
                shape: CellShape::Triangle(pts),
            });
            oriented.push(tri);
        }

        // Directed edge (i -> j) of a counter-clockwise triangle.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in oriented.iter().enumerate() {
            for i in 0..3 {
                let key = (tri[i], tri[(i + 1) % 3]);
                if directed.insert(key, t).is_some() {
                    return Err(MeshError::NonConforming(format!(
                        "edge ({}, {}) traversed twice in the same direction (overlap or fold at triangle {t})",
                        key.0, key.1
                    )));
                }
            }
        }

        let mut edges = Vec::new();
        let mut cell_edges = vec![Vec::with_capacity(3); oriented.len()];
        let mut degenerate = Vec::new();
        let mut boundary_pairs = Vec::new();
        for (t, tri) in oriented.iter().enumerate() {
            for i in 0..3 {
                let (p, q) = (tri[i], tri[(i + 1) % 3]);
                let twin = directed.get(&(q, p)).copied();
                if let Some(s) = twin {
                    // Each interior edge is emitted once, from its lower-index cell.
                    if s < t {
                        continue;
                    }
                }
                let (a, b) = (vertices[p], vertices[q]);
                let measure = norm(sub(b, a));
                let tangent = [(b[0] - a[0]) / measure, (b[1] - a[1]) / measure];
                // Outward normal of a counter-clockwise triangle.
                let normal = [tangent[1], -tangent[0]];
                let offset_k = dot(sub(a, cells[t].center), normal);
                let id = edges.len();
                let (cells_of_edge, offsets, distance) = match twin {
                    Some(s) => {
                        let offset_l = -dot(sub(a, cells[s].center), normal);
                        (
                            EdgeCells::Interior(t, s),
                            [offset_k, offset_l],
                            offset_k + offset_l,
                        )
                    }
                    None => {
                        boundary_pairs.push((p, q));
                        (EdgeCells::Boundary(t), [offset_k, 0.0], offset_k.abs())
                    }
                };
                if !(distance > 1e-12 * measure) {
                    degenerate.push(id);
                }
                edges.push(Edge {
                    measure,
                    distance,
                    transmissibility: measure / distance,
                    cells: cells_of_edge,
                    normal,
                    center_offsets: offsets,
                });
                cell_edges[t].push(id);
                if let Some(s) = twin {
                    cell_edges[s].push(id);
                }
            }
        }

        check_hanging_nodes(vertices, &boundary_pairs)?;

        if !degenerate.is_empty() {
            return Err(MeshError::DegenerateTransmissibility { edges: degenerate });
        }
        for list in &mut cell_edges {
            list.sort_unstable();
        }
        Ok(Mesh::assemble(Dimension::Two, cells, edges, cell_edges, None))
    }

    fn assemble(
        dim: Dimension,
        cells: Vec<Cell>,
        edges: Vec<Edge>,
        cell_edges: Vec<Vec<usize>>,
        domain_measure: Option<f64>,
    ) -> Mesh {
        let volumes: Vec<f64> = cells.iter().map(|c| c.volume).collect();
        let size = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        let domain_measure = domain_measure.unwrap_or_else(|| volumes.iter().sum());
        Mesh {
            id: MeshId::fresh(),
            dim,
            cells,
            volumes,
            edges,
            cell_edges,
            domain_measure,
            size,
        }
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges of cell `k`, interior and boundary.
    pub fn cell_edges(&self, k: usize) -> &[usize] {
        &self.cell_edges[k]
    }

    /// Interior edges as `(edge index, K, L, tau)`.
    pub fn interior_edges(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e.cells {
                EdgeCells::Interior(k, l) => Some((i, k, l, e.transmissibility)),
                EdgeCells::Boundary(_) => None,
            })
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.edges.iter().enumerate().filter(|(_, e)| !e.is_interior())
    }

    /// Neighbors `N(K)` of cell `k`.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.cell_edges[k]
            .iter()
            .filter_map(move |&e| match self.edges[e].cells {
                EdgeCells::Interior(a, b) => Some(if a == k { b } else { a }),
                EdgeCells::Boundary(_) => None,
            })
    }

    /// `m(Omega)`.
    pub fn domain_measure(&self) -> f64 {
        self.domain_measure
    }

    /// Largest cell diameter.
    pub fn size(&self) -> f64 {
        self.size
    }

    /// Volume of the dual cell `T_{K,sigma}` attached to `edge`:
    /// `m(sigma) d_sigma / dim`.
    pub fn diamond_volume(&self, edge: usize) -> f64 {
        let e = &self.edges[edge];
        e.measure * e.distance / self.dim.as_usize() as f64
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_cells();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for l in self.neighbors(k) {
                if !seen[l] {
                    seen[l] = true;
                    count += 1;
                    stack.push(l);
                }
            }
        }
        count == n
    }

    /// Vertex list and cell-to-vertex connectivity, for snapshot writers.
    pub fn vertex_connectivity(&self) -> (Vec<Point>, Vec<Vec<usize>>) {
        let mut index: HashMap<(u64, u64), usize> = HashMap::new();
        let mut points = Vec::new();
        let mut connectivity = Vec::with_capacity(self.n_cells());
        let mut lookup = |p: Point, points: &mut Vec<Point>| {
            *index
                .entry((p[0].to_bits(), p[1].to_bits()))
                .or_insert_with(|| {
                    points.push(p);
                    points.len() - 1
                })
        };
        for cell in &self.cells {
            let ids = match &cell.shape {
                CellShape::Interval { left, right } => vec![
                    lookup([*left, 0.0], &mut points),
                    lookup([*right, 0.0], &mut points),
                ],
                CellShape::Triangle(pts) => pts.iter().map(|&p| lookup(p, &mut points)).collect(),
            };
            connectivity.push(ids);
        }
        (points, connectivity)
    }

    /// Plain-text dump of cells and edges.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# kslocal mesh dump v1")?;
        writeln!(out, "dimension {}", self.dim.as_usize())?;
        writeln!(out, "cells {}", self.n_cells())?;
        for (k, c) in self.cells.iter().enumerate() {
            writeln!(
                out,
                "{k} {:.12e} {:.12e} {:.12e}",
                c.volume, c.center[0], c.center[1]
            )?;
        }
        writeln!(out, "edges {}", self.edges.len())?;
        for (i, e) in self.edges.iter().enumerate() {
            let (kind, k, l) = match e.cells {
                EdgeCells::Interior(k, l) => ("I", k.to_string(), l.to_string()),
                EdgeCells::Boundary(k) => ("B", k.to_string(), "-".to_string()),
            };
            writeln!(
                out,
                "{i} {kind} {k} {l} {:.12e} {:.12e} {:.12e}",
                e.measure, e.distance, e.transmissibility
            )?;
        }
        Ok(())
    }
}

/// Checks `dist(x_K, sigma) >= zeta * d_sigma` for every cell and each of its edges.
///
/// The distance is unsigned, so a circumcenter slightly outside its triangle
/// is tolerated as long as it stays away from the edge.
pub fn check_admissibility(mesh: &Mesh, zeta: f64) -> AdmissibilityReport {
    let mut worst = f64::INFINITY;
    let mut offending = Vec::new();
    for (k, edges) in mesh.cell_edges.iter().enumerate() {
        for &e in edges {
            let edge = &mesh.edges[e];
            let offset = edge.offset_from(k).expect("cell-edge incidence");
            let ratio = offset.abs() / edge.distance;
            worst = worst.min(ratio);
            if !(ratio >= zeta) {
                offending.push((k, e));
            }
        }
    }
    AdmissibilityReport {
        ok: offending.is_empty(),
        zeta,
        worst_ratio: worst,
        offending_edges: offending,
    }
}

fn check_hanging_nodes(vertices: &[Point], boundary: &[(usize, usize)]) -> Result<(), MeshError> {
    // A vertex strictly inside a boundary edge means a neighbor was split
    // without splitting this edge.
    let mut candidates: Vec<usize> = boundary.iter().flat_map(|&(p, q)| [p, q]).collect();
    candidates.sort_unstable();
    candidates.dedup();
    for &(p, q) in boundary {
        let (a, b) = (vertices[p], vertices[q]);
        let ab = sub(b, a);
        let len2 = dot(ab, ab);
        for &v in &candidates {
            if v == p || v == q {
                continue;
            }
            let av = sub(vertices[v], a);
            let s = dot(av, ab) / len2;
            if s > 1e-10 && s < 1.0 - 1e-10 && cross(ab, av).abs() <= 1e-10 * len2 {
                return Err(MeshError::NonConforming(format!(
                    "vertex {v} lies inside boundary edge ({p}, {q})"
                )));
            }
        }
    }
    Ok(())
}

fn bounding_scale(points: &[Point]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE)
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn circumcenter([a, b, c]: [Point; 3]) -> Point {
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [
        a[0] + (cy * b2 - by * c2) / d,
        a[1] + (bx * c2 - cx * b2) / d,
    ]
}
