//! Meshes from configuration sections or command-line shorthands.

use std::path::Path;

use kslocal_core::mesh::{
    check_admissibility, disk_mesh, load_gmsh, square_mesh, DiskMeshSpec, GmshError, Mesh, MeshError, Point,
    SquareMeshSpec,
};

use crate::config::{self, MeshConfig};

#[derive(Debug, thiserror::Error)]
pub enum MeshBuildError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Gmsh(#[from] GmshError),
    #[error("mesh is not admissible for zeta = {zeta}: worst ratio {worst:.4} on {count} edges")]
    NotAdmissible { zeta: f64, worst: f64, count: usize },
    #[error("cannot read mesh {0:?}: use interval:N, disk:N, square:N, a .msh file, a preset or a config file")]
    Unrecognized(String),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
}

pub fn build_mesh(spec: &MeshConfig, seed: u64) -> Result<Mesh, MeshBuildError> {
    match spec {
        MeshConfig::Interval { cells, length } => Ok(Mesh::uniform_1d(0.0, *length, *cells)?),
        MeshConfig::Disk {
            radius,
            boundary_points,
            zeta,
        } => Ok(disk_mesh(&DiskMeshSpec {
            radius: *radius,
            n_boundary: *boundary_points,
            zeta: *zeta,
            seed,
        })?),
        MeshConfig::Square {
            side,
            points_per_side,
            zeta,
        } => Ok(square_mesh(&SquareMeshSpec {
            side: *side,
            n_per_side: *points_per_side,
            zeta: *zeta,
            seed,
        })?),
        MeshConfig::Gmsh { path, zeta } => {
            let file = load_gmsh(path)?;
            for (kind, count) in &file.ignored {
                log::info!("{}: ignored {count} elements of type {kind}", path.display());
            }
            let mesh = Mesh::from_triangulation(&file.vertices, &file.triangles)?;
            let report = check_admissibility(&mesh, *zeta);
            if !report.ok {
                return Err(MeshBuildError::NotAdmissible {
                    zeta: *zeta,
                    worst: report.worst_ratio,
                    count: report.offending_edges.len(),
                });
            }
            Ok(mesh)
        }
    }
}

/// Origin of polar coordinates and length scale of the domain.
pub fn geometry(spec: &MeshConfig, mesh: &Mesh) -> (Point, f64) {
    match spec {
        MeshConfig::Interval { length, .. } => ([0.0, 0.0], *length),
        MeshConfig::Disk { radius, .. } => ([0.0, 0.0], *radius),
        MeshConfig::Square { side, .. } => ([0.5 * side, 0.5 * side], *side),
        MeshConfig::Gmsh { .. } => {
            // Centroid and largest distance from it.
            let vol = mesh.domain_measure();
            let mut c = [0.0, 0.0];
            for cell in mesh.cells() {
                c[0] += cell.volume * cell.center[0] / vol;
                c[1] += cell.volume * cell.center[1] / vol;
            }
            let (points, _) = mesh.vertex_connectivity();
            let r = points
                .iter()
                .map(|p| (p[0] - c[0]).hypot(p[1] - c[1]))
                .fold(0.0, f64::max);
            (c, r)
        }
    }
}

/// Parses `interval:N[:L]`, `disk:N[:R]`, `square:N[:S]`, a `.msh` path, a
/// preset name or a configuration file.
pub fn parse_mesh_arg(arg: &str) -> Result<MeshConfig, MeshBuildError> {
    if let Some((kind, rest)) = arg.split_once(':') {
        let mut parts = rest.split(':');
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MeshBuildError::Unrecognized(arg.into()))?;
        let scale: f64 = match parts.next() {
            Some(s) => s.parse().map_err(|_| MeshBuildError::Unrecognized(arg.into()))?,
            None => 1.0,
        };
        let zeta = 0.1;
        return match kind {
            "interval" => Ok(MeshConfig::Interval { cells: n, length: scale }),
            "disk" => Ok(MeshConfig::Disk {
                radius: scale,
                boundary_points: n,
                zeta,
            }),
            "square" => Ok(MeshConfig::Square {
                side: scale,
                points_per_side: n,
                zeta,
            }),
            _ => Err(MeshBuildError::Unrecognized(arg.into())),
        };
    }
    if arg.ends_with(".msh") {
        return Ok(MeshConfig::Gmsh {
            path: arg.into(),
            zeta: 0.1,
        });
    }
    if config::preset_names().any(|n| n == arg) || Path::new(arg).exists() {
        return Ok(config::load(arg, false)?.mesh);
    }
    Err(MeshBuildError::Unrecognized(arg.into()))
}
