//! Output directories, snapshot observers and run manifests.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use kslocal_core::diagnostics::Checks;
use kslocal_core::mesh::{Dimension, Mesh};
use kslocal_core::scheme::{write_snapshot_csv, write_vtk, Observer, SchemeError, State, Stepper};

pub fn create_dir(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    body(&mut out)?;
    out.flush()
}

/// Name of the snapshot files for time `t`.
pub fn snapshot_stem(t: f64) -> String {
    format!("snapshot_t{t}")
}

/// Writes per-cell CSV files (and VTK files in 2D) when the run reaches the
/// requested times.
#[derive(Debug)]
pub struct SnapshotWriter {
    dir: PathBuf,
    times: Vec<f64>,
    next: usize,
    vtk: bool,
    written: Vec<(f64, PathBuf)>,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<PathBuf>, times: &[f64], dimension: Dimension) -> Self {
        let mut times = times.to_vec();
        times.sort_by(f64::total_cmp);
        SnapshotWriter {
            dir: dir.into(),
            times,
            next: 0,
            vtk: dimension == Dimension::Two,
            written: Vec::new(),
        }
    }

    /// `(requested time, CSV path)` of every snapshot written so far.
    pub fn written(&self) -> &[(f64, PathBuf)] {
        &self.written
    }

    fn write(&mut self, mesh: &Mesh, state: &State, t: f64) -> io::Result<()> {
        let stem = snapshot_stem(t);
        let csv = self.dir.join(format!("{stem}.csv"));
        write_file(&csv, |out| write_snapshot_csv(mesh, state, out))?;
        if self.vtk {
            write_file(&self.dir.join(format!("{stem}.vtk")), |out| write_vtk(mesh, state, out))?;
        }
        self.written.push((t, csv));
        Ok(())
    }
}

impl Observer for SnapshotWriter {
    fn observe(&mut self, stepper: &Stepper<'_>, _prev: Option<&State>, state: &State, dt: Option<f64>) -> Result<(), SchemeError> {
        let half = 0.5 * dt.unwrap_or(0.0);
        while let Some(&t) = self.times.get(self.next) {
            if state.time + half < t || (dt.is_none() && t > 0.0) {
                break;
            }
            self.write(stepper.mesh(), state, t)
                .map_err(|e| SchemeError::Observer(format!("snapshot at t = {t}: {e}")))?;
            self.next += 1;
        }
        Ok(())
    }
}

pub fn mesh_summary(mesh: &Mesh) -> Value {
    json!({
        "dimension": mesh.dimension().as_usize(),
        "cells": mesh.n_cells(),
        "edges": mesh.edges().len(),
        "size": mesh.size(),
        "domain_measure": mesh.domain_measure(),
    })
}

pub fn checks_summary(c: &Checks) -> Value {
    let finite = |x: f64| if x.is_finite() { json!(x) } else { Value::Null };
    json!({
        "steps": c.steps,
        "entropy_checked": c.entropy_checked,
        "entropy_violations": c.entropy_violations,
        "max_entropy_increase": finite(c.max_entropy_increase),
        "budget_violations": c.budget_violations,
        "max_budget_excess": finite(c.max_budget_excess),
        "duality_violations": c.duality_violations,
        "max_duality_excess": finite(c.max_duality_excess),
        "min_u": c.min_u,
        "min_v": c.min_v,
        "max_mass_drift": c.max_mass_drift,
        "max_mean_v_error": c.max_mean_v_error,
        "max_mean_w_error": c.max_mean_w_error,
        "max_mean_w_after_first": c.max_mean_w_after_first,
        "mean_dtv_l2sq": c.mean_dtv_l2sq,
    })
}

/// Writes `manifest.json`: the resolved configuration and everything the
/// run derived from it.
pub fn write_manifest(dir: &Path, manifest: &Value) -> io::Result<PathBuf> {
    let path = dir.join("manifest.json");
    write_file(&path, |out| {
        serde_json::to_writer_pretty(&mut *out, manifest)?;
        writeln!(out)
    })?;
    Ok(path)
}

/// `1e-3` style labels for file names.
pub fn number_label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:e}")
}
