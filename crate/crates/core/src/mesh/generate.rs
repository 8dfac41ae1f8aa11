//! Built-in triangulations: Bowyer-Watson Delaunay, polygonal disks and squares.
//!
//! Generated meshes are only returned if they pass [`check_admissibility`]
//! with the requested `zeta`.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_admissibility, circumcenter, cross, sub, Mesh, MeshError, Point};

/// Delaunay triangulation of a point set (counter-clockwise triangles).
///
/// Plain Bowyer-Watson with a large enclosing triangle; quadratic in the
/// number of points, which is fine for the mesh sizes used here. Exactly
/// cocircular inputs give an arbitrary (but valid) choice of diagonal.
pub fn delaunay(points: &[Point]) -> Result<Vec<[usize; 3]>, MeshError> {
    let n = points.len();
    if n < 3 {
        return Err(MeshError::Generation(format!("need at least 3 points, got {n}")));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (i, p) in points.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let big = 50.0 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);

    let mut pts = points.to_vec();
    pts.push([mid[0] - big, mid[1] - big]);
    pts.push([mid[0] + big, mid[1] - big]);
    pts.push([mid[0], mid[1] + big]);

    struct Tri {
        v: [usize; 3],
        center: Point,
        r2: f64,
    }
    let make = |v: [usize; 3], pts: &[Point]| {
        let center = circumcenter(v.map(|i| pts[i]));
        let d = sub(pts[v[0]], center);
        Tri {
            v,
            center,
            r2: d[0] * d[0] + d[1] * d[1],
        }
    };

    let mut tris = vec![make([n, n + 1, n + 2], &pts)];
    let mut cavity: HashSet<(usize, usize)> = HashSet::new();
    for p in 0..n {
        let x = pts[p];
        cavity.clear();
        let mut kept = Vec::with_capacity(tris.len() + 2);
        for t in tris.drain(..) {
            let d = sub(x, t.center);
            if d[0] * d[0] + d[1] * d[1] < t.r2 {
                for i in 0..3 {
                    let e = (t.v[i], t.v[(i + 1) % 3]);
                    // An edge shared by two bad triangles appears in both directions.
                    if !cavity.remove(&(e.1, e.0)) {
                        cavity.insert(e);
                    }
                }
            } else {
                kept.push(t);
            }
        }
        if cavity.is_empty() {
            return Err(MeshError::Generation(format!(
                "point {p} is a duplicate or outside the enclosing triangle"
            )));
        }
        for &(a, b) in &cavity {
            if cross(sub(pts[b], pts[a]), sub(x, pts[a])) <= 0.0 {
                return Err(MeshError::Generation(format!(
                    "cavity of point {p} is not star-shaped (nearly cocircular input?)"
                )));
            }
            kept.push(make([a, b, p], &pts));
        }
        tris = kept;
    }

    let mut out: Vec<[usize; 3]> = tris
        .into_iter()
        .filter(|t| t.v.iter().all(|&i| i < n))
        .map(|t| t.v)
        .collect();
    // Deterministic order independent of hash iteration.
    for t in &mut out {
        let r = (0..3).min_by_key(|&i| t[i]).unwrap();
        t.rotate_left(r);
    }
    out.sort_unstable();
    Ok(out)
}

/// Polygonal disk centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskMeshSpec {
    pub radius: f64,
    /// Number of vertices of the boundary polygon.
    pub n_boundary: usize,
    /// Admissibility threshold the result must satisfy.
    pub zeta: f64,
    pub seed: u64,
}

impl Default for DiskMeshSpec {
    fn default() -> Self {
        DiskMeshSpec {
            radius: 1.0,
            n_boundary: 256,
            zeta: 0.1,
            seed: 0,
        }
    }
}

/// Square `[0, side]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMeshSpec {
    pub side: f64,
    /// Number of boundary segments on the horizontal sides.
    pub n_per_side: usize,
    pub zeta: f64,
    pub seed: u64,
}

impl Default for SquareMeshSpec {
    fn default() -> Self {
        SquareMeshSpec {
            side: 1.0,
            n_per_side: 32,
            zeta: 0.1,
            seed: 0,
        }
    }
}

/// Triangulates the disk from concentric rings of `6k` points (a hexagonal
/// pattern bent onto circles) closed by the regular boundary polygon.
pub fn disk_mesh(spec: &DiskMeshSpec) -> Result<Mesh, MeshError> {
    if !(spec.radius > 0.0 && spec.radius.is_finite()) {
        return Err(MeshError::Generation(format!("invalid radius {}", spec.radius)));
    }
    if spec.n_boundary < 6 {
        return Err(MeshError::Generation("a disk needs at least 6 boundary vertices".into()));
    }
    let r = spec.radius;
    let nb = spec.n_boundary;
    let rings = ((nb as f64 / 6.0).round() as usize).max(1);

    let mut free = vec![[0.0, 0.0]];
    for k in 1..rings {
        let rk = r * k as f64 / rings as f64;
        let count = 6 * k;
        for i in 0..count {
            let a = 2.0 * PI * i as f64 / count as f64;
            free.push([rk * a.cos(), rk * a.sin()]);
        }
    }
    let fixed = (0..nb)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / nb as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let h = 2.0 * PI * r / nb as f64;
    finish(free, fixed, h, spec.zeta, spec.seed)
}

/// Triangulates the square from a staggered, nearly equilateral lattice.
///
/// Rows coincide with the horizontal sides; the vertical sides carry points
/// halfway between rows and each corner gets an extra interior point, which
/// keeps every triangle near the boundary away from a right angle.
pub fn square_mesh(spec: &SquareMeshSpec) -> Result<Mesh, MeshError> {
    if !(spec.side > 0.0 && spec.side.is_finite()) {
        return Err(MeshError::Generation(format!("invalid side {}", spec.side)));
    }
    if spec.n_per_side < 2 {
        return Err(MeshError::Generation("need at least 2 segments per side".into()));
    }
    let s = spec.side;
    let n = spec.n_per_side;
    let h = s / n as f64;
    let rows = 2 * ((s / (h * 3f64.sqrt())).round() as usize).max(1);
    let dy = s / rows as f64;
    let at = |i: usize, m: usize| if i == m { s } else { s * i as f64 / m as f64 };

    let mut fixed = Vec::new();
    for i in 0..=n {
        fixed.push([at(i, n), 0.0]);
        fixed.push([at(i, n), s]);
    }
    for j in 0..rows {
        let y = (j as f64 + 0.5) * dy;
        fixed.push([0.0, y]);
        fixed.push([s, y]);
    }
    let mut free = Vec::new();
    for j in 1..rows {
        let y = at(j, rows);
        if j % 2 == 0 {
            free.extend((1..n).map(|i| [at(i, n), y]));
        } else {
            free.extend((0..n).map(|i| [(i as f64 + 0.5) * h, y]));
        }
    }
    let a = 0.45;
    for (x, y, sx, sy) in [(0.0, 0.0, 1.0, 1.0), (s, 0.0, -1.0, 1.0), (0.0, s, 1.0, -1.0), (s, s, -1.0, -1.0)] {
        free.push([x + sx * a * h, y + sy * a * 0.5 * dy]);
    }
    finish(free, fixed, h, spec.zeta, spec.seed)
}

/// Jitters the free points, triangulates and checks admissibility.
///
/// Free points are inserted before the fixed boundary points: the latter
/// are often exactly cocircular or collinear, which Bowyer-Watson handles
/// badly while few triangles exist.
fn finish(
    mut free: Vec<Point>,
    fixed: Vec<Point>,
    h: f64,
    zeta: f64,
    seed: u64,
) -> Result<Mesh, MeshError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut free {
        p[0] += 1e-3 * h * (rng.random::<f64>() - 0.5);
        p[1] += 1e-3 * h * (rng.random::<f64>() - 0.5);
    }
    free.extend(fixed);
    let points = free;
    let triangles = delaunay(&points)?;
    let mesh = Mesh::from_triangulation(&points, &triangles)?;
    let report = check_admissibility(&mesh, zeta);
    if !report.ok {
        return Err(MeshError::Generation(format!(
            "generated mesh is not admissible: worst ratio {:.4} < zeta {zeta} on {} cell-edge pairs",
            report.worst_ratio,
            report.offending_edges.len()
        )));
    }
    Ok(mesh)
}
