//! Grid refinement study in 1D against the solution on the finest grid.

use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use kslocal_core::diagnostics::Checks;
use kslocal_core::mesh::{CellShape, DiscreteField, Mesh};
use kslocal_core::scheme::write_snapshot_csv;

use super::{field, initial_state, monitor_config, simulate, write_series, ExperimentError, Simulation};
use crate::config::{MeshConfig, RunConfig};
use crate::output::{checks_summary, mesh_summary, write_file, write_manifest};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub k: usize,
    pub n_cells: usize,
    pub l2: f64,
    pub l2_order: Option<f64>,
    pub linf: f64,
    pub linf_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub reference_cells: usize,
    pub rows: Vec<ConvergenceRow>,
}

fn order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

impl ConvergenceReport {
    /// Rows from `(n_cells, l2, linf)` per level, coarsest first.
    pub fn from_errors(reference_cells: usize, errors: &[(usize, f64, f64)]) -> Self {
        let rows = errors
            .iter()
            .enumerate()
            .map(|(k, &(n_cells, l2, linf))| {
                let prev = k.checked_sub(1).map(|j| errors[j]);
                ConvergenceRow {
                    k,
                    n_cells,
                    l2,
                    l2_order: prev.and_then(|p| order(p.1, l2)),
                    linf,
                    linf_order: prev.and_then(|p| order(p.2, linf)),
                }
            })
            .collect();
        ConvergenceReport { reference_cells, rows }
    }

    pub const HEADER: &'static str = "k,n_cells,l2_error,l2_order,linf_error,linf_order";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k,
                r.n_cells,
                r.l2,
                opt(r.l2_order),
                r.linf,
                opt(r.linf_order)
            )?;
        }
        Ok(())
    }
}

/// Averages a field of a fine 1D grid over the cells of a coarser grid
/// whose cells are unions of fine cells.
pub fn restrict_nested(fine_mesh: &Mesh, fine: &DiscreteField, coarse_mesh: &Mesh) -> Result<DiscreteField, ExperimentError> {
    let values = fine.on(fine_mesh)?;
    let interval = |shape: &CellShape| match *shape {
        CellShape::Interval { left, right } => Ok((left, right)),
        CellShape::Triangle(_) => Err(ExperimentError::Invalid("nested averaging needs 1D grids".into())),
    };
    let tol = 1e-9 * fine_mesh.size();
    let mut out = Vec::with_capacity(coarse_mesh.n_cells());
    let mut j = 0;
    let fine_cells = fine_mesh.cells();
    for cell in coarse_mesh.cells() {
        let (left, right) = interval(&cell.shape)?;
        let (mut sum, mut vol) = (0.0, 0.0);
        while j < fine_cells.len() {
            let (l, r) = interval(&fine_cells[j].shape)?;
            if l < left - tol {
                return Err(ExperimentError::Invalid("grids are not nested".into()));
            }
            if r > right + tol {
                break;
            }
            sum += fine_cells[j].volume * values[j];
            vol += fine_cells[j].volume;
            j += 1;
        }
        if (vol - cell.volume).abs() > 1e-9 * cell.volume {
            return Err(ExperimentError::Invalid("grids are not nested".into()));
        }
        out.push(sum / vol);
    }
    if j != fine_cells.len() {
        return Err(ExperimentError::Invalid("grids do not cover the same interval".into()));
    }
    field(coarse_mesh, out)
}

/// Discrete `L^2` and max norms of `a - b`.
pub fn error_norms(mesh: &Mesh, a: &DiscreteField, b: &DiscreteField) -> Result<(f64, f64), ExperimentError> {
    let (a, b) = (a.on(mesh)?, b.on(mesh)?);
    let mut l2 = 0.0;
    let mut linf: f64 = 0.0;
    for ((x, y), m) in a.iter().zip(b).zip(mesh.volumes()) {
        let e = (x - y).abs();
        l2 += m * e * e;
        linf = linf.max(e);
    }
    Ok((l2.sqrt(), linf))
}

#[derive(Debug, Clone)]
pub struct Testcase1Outcome {
    pub report: ConvergenceReport,
    /// Checks of each level run, then of the reference run.
    pub checks: Vec<(usize, Checks)>,
    pub manifest: Value,
}

pub fn run_testcase1(config: &RunConfig, out: &Path) -> Result<Testcase1Outcome, ExperimentError> {
    let start = Instant::now();
    let MeshConfig::Interval { cells: reference, length } = config.mesh else {
        return Err(ExperimentError::Invalid("testcase1 runs on an interval mesh".into()));
    };
    let levels = config
        .convergence
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("missing [convergence] section".into()))?
        .levels
        .clone();
    let init = config
        .initial
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("missing [initial] section".into()))?;
    let params = config.scheme_params()?;
    let mut all = levels.clone();
    all.push(reference);

    let runs: Vec<(Mesh, Simulation)> = all
        .par_iter()
        .map(|&n| -> Result<(Mesh, Simulation), ExperimentError> {
            let mesh = Mesh::uniform_1d(0.0, length, n)?;
            let state = initial_state(config, &mesh, &params, None, &init.u, &init.v)?;
            let sim = simulate(&mesh, &params, state, monitor_config(&config.output, None), None)?;
            let dir = out.join(format!("n{n}"));
            write_series(&dir.join("observables.csv"), &sim.series)?;
            write_file(&dir.join("final.csv"), |w| write_snapshot_csv(&mesh, &sim.final_state, w))?;
            log::info!("testcase1: {n} cells done");
            Ok((mesh, sim))
        })
        .collect::<Result<_, _>>()?;

    let (ref_mesh, ref_sim) = runs.last().expect("reference run");
    let mut errors = Vec::with_capacity(levels.len());
    for (mesh, sim) in &runs[..levels.len()] {
        let projected = restrict_nested(ref_mesh, &ref_sim.final_state.u, mesh)?;
        let (l2, linf) = error_norms(mesh, &sim.final_state.u, &projected)?;
        errors.push((mesh.n_cells(), l2, linf));
    }
    let report = ConvergenceReport::from_errors(reference, &errors);
    write_file(&out.join("convergence.csv"), |w| report.write_csv(w))?;

    let checks: Vec<(usize, Checks)> = runs.iter().map(|(m, s)| (m.n_cells(), s.checks)).collect();
    let manifest = json!({
        "testcase": config.testcase,
        "config": config,
        "reference_mesh": mesh_summary(ref_mesh),
        "files": {
            "convergence": "convergence.csv",
            "observables": all.iter().map(|n| format!("n{n}/observables.csv")).collect::<Vec<_>>(),
            "final": all.iter().map(|n| format!("n{n}/final.csv")).collect::<Vec<_>>(),
        },
        "checks": checks.iter().map(|(n, c)| json!({"cells": n, "checks": checks_summary(c)})).collect::<Vec<_>>(),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    write_manifest(out, &manifest)?;
    Ok(Testcase1Outcome {
        report,
        checks,
        manifest,
    })
}
