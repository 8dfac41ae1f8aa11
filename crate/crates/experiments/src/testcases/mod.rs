//! Drivers of the four testcases and of custom runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use kslocal_core::diagnostics::{Checks, DiagnosticsError, Monitor, MonitorConfig, ObservableSeries};
use kslocal_core::mesh::{DiscreteField, Mesh};
use kslocal_core::scheme::{run, Observer, SchemeError, SchemeParams, State, Stepper};

use crate::config::{ConfigError, OutputConfig, RunConfig, Testcase};
use crate::initial::{build_initial, InitialError, Setting};
use crate::meshes::{build_mesh, geometry, MeshBuildError};
use crate::output::{self, checks_summary, mesh_summary, write_file, write_manifest, SnapshotWriter};

pub mod tc1;
pub mod tc2;
pub mod tc3;

pub use tc1::{restrict_nested, run_testcase1, ConvergenceReport, ConvergenceRow, Testcase1Outcome};
pub use tc2::{run_testcase2, ApRow, Testcase2Outcome};
pub use tc3::{fit_decay, run_testcase3, DecayFit, InstabilityRun, Testcase3Outcome};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshBuildError),
    #[error(transparent)]
    Initial(#[from] InitialError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Field(#[from] kslocal_core::mesh::MeshError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

pub fn monitor_config(out: &OutputConfig, relative_to: Option<f64>) -> MonitorConfig {
    MonitorConfig {
        stride: out.stride,
        dual_norm: out.dual_norm,
        relative_to,
        ..MonitorConfig::default()
    }
}

/// Result of one simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub final_state: State,
    pub series: ObservableSeries,
    pub checks: Checks,
    pub snapshots: Vec<(f64, PathBuf)>,
}

/// Runs one simulation under a [`Monitor`], writing snapshots into
/// `snapshot_dir` when given.
pub fn simulate(
    mesh: &Mesh,
    params: &SchemeParams,
    initial: State,
    monitor: MonitorConfig,
    snapshots: Option<(&Path, &[f64])>,
) -> Result<Simulation, ExperimentError> {
    simulate_observed(mesh, params, initial, monitor, snapshots, &mut [])
}

/// [`simulate`] with additional observers.
pub fn simulate_observed(
    mesh: &Mesh,
    params: &SchemeParams,
    initial: State,
    monitor: MonitorConfig,
    snapshots: Option<(&Path, &[f64])>,
    extra: &mut [&mut dyn Observer],
) -> Result<Simulation, ExperimentError> {
    let t_final = params.schedule.total_time();
    let mut mon = Monitor::new(monitor);
    let mut writer = snapshots.map(|(dir, times)| SnapshotWriter::new(dir, times, mesh.dimension()));
    let mut fan = Fan {
        monitor: &mut mon,
        writer: writer.as_mut(),
        extra,
    };
    let final_state = run(initial, mesh, params, t_final, &mut [&mut fan])?;
    let (series, checks) = mon.finish();
    Ok(Simulation {
        final_state,
        series,
        checks,
        snapshots: writer.map(|w| w.written().to_vec()).unwrap_or_default(),
    })
}

struct Fan<'a, 'b> {
    monitor: &'a mut Monitor,
    writer: Option<&'a mut SnapshotWriter>,
    extra: &'a mut [&'b mut dyn Observer],
}

impl Observer for Fan<'_, '_> {
    fn observe(&mut self, stepper: &Stepper<'_>, prev: Option<&State>, state: &State, dt: Option<f64>) -> Result<(), SchemeError> {
        self.monitor.observe(stepper, prev, state, dt)?;
        if let Some(w) = self.writer.as_mut() {
            w.observe(stepper, prev, state, dt)?;
        }
        self.extra.iter_mut().try_for_each(|o| o.observe(stepper, prev, state, dt))
    }
}

pub fn write_series(path: &Path, series: &ObservableSeries) -> std::io::Result<()> {
    write_file(path, |out| series.write_csv(out))
}

/// Mesh and parameters of a configuration.
pub fn prepare(config: &RunConfig) -> Result<(Mesh, SchemeParams), ExperimentError> {
    let params = config.scheme_params()?;
    let mesh = build_mesh(&config.mesh, config.seed)?;
    Ok((mesh, params))
}

/// Initial state of a configuration with an `[initial]` section.
pub fn initial_state(
    config: &RunConfig,
    mesh: &Mesh,
    params: &SchemeParams,
    mu: Option<f64>,
    u: &str,
    v: &str,
) -> Result<State, ExperimentError> {
    let (origin, length) = geometry(&config.mesh, mesh);
    let init = config.initial.as_ref();
    let setting = Setting {
        params,
        mu: mu.or(init.and_then(|i| i.mu)),
        origin,
        length,
        seed: config.seed,
        quadrature_order: init.map_or(6, |i| i.quadrature_order),
    };
    let (u0, v0) = build_initial(mesh, setting, u, v)?;
    Ok(State::initial(mesh, params, u0, v0)?)
}

/// A single run from the `[initial]` section: testcase 4 and custom
/// configurations.
pub fn run_single(config: &RunConfig, out: &Path) -> Result<(Simulation, Value), ExperimentError> {
    let start = Instant::now();
    let (mesh, params) = prepare(config)?;
    let init = config
        .initial
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("missing [initial] section".into()))?;
    let state = initial_state(config, &mesh, &params, None, &init.u, &init.v)?;
    let sim = simulate(
        &mesh,
        &params,
        state,
        monitor_config(&config.output, None),
        Some((&out.join("snapshots"), &config.output.snapshot_times)),
    )?;
    write_series(&out.join("observables.csv"), &sim.series)?;
    write_file(&out.join("final.csv"), |w| {
        kslocal_core::scheme::write_snapshot_csv(&mesh, &sim.final_state, w)
    })?;
    let manifest = json!({
        "testcase": config.testcase,
        "config": config,
        "mesh": mesh_summary(&mesh),
        "checks": checks_summary(&sim.checks),
        "files": {
            "observables": "observables.csv",
            "final": "final.csv",
            "snapshots": sim.snapshots.iter().map(|(t, p)| json!({"t": t, "path": relative(out, p)})).collect::<Vec<_>>(),
        },
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    write_manifest(out, &manifest)?;
    Ok((sim, manifest))
}

pub(crate) fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Runs whatever the configuration describes, writing into `out`, and
/// returns the manifest.
pub fn run_config(config: &RunConfig, out: &Path) -> Result<Value, ExperimentError> {
    output::create_dir(out)?;
    Ok(match config.testcase {
        Testcase::Testcase1 => run_testcase1(config, out)?.manifest,
        Testcase::Testcase2 => run_testcase2(config, out)?.manifest,
        Testcase::Testcase3 => run_testcase3(config, out)?.manifest,
        Testcase::Testcase4 | Testcase::Custom => run_single(config, out)?.1,
    })
}

/// Values of a field in a fresh field on the same mesh.
pub(crate) fn field(mesh: &Mesh, values: Vec<f64>) -> Result<DiscreteField, ExperimentError> {
    Ok(DiscreteField::new(mesh, values)?)
}
