//! Perturbed homogeneous states on a disk around the linear stability
//! threshold of the mesh.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use kslocal_core::diagnostics::{stability_threshold, ObservableSeries};
use kslocal_core::linsolve::smallest_nonzero_eigenvalue;
use kslocal_core::mesh::Mesh;
use kslocal_core::scheme::{Observer, SchemeError, SchemeParams, State, Stepper};

use super::{initial_state, monitor_config, relative, simulate_observed, write_series, ExperimentError, Simulation};
use crate::config::RunConfig;
use crate::initial::disk_eigenvalues;
use crate::meshes::geometry;
use crate::output::{checks_summary, mesh_summary, write_file, write_manifest};

/// Exponential fit `log H(t) ~ intercept + rate t` of the relative entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    /// Every record of the window is below its predecessor.
    pub strictly_decreasing: bool,
}

/// Fits the relative entropy of `series` from `t_start` on, up to the first
/// record below `floor` times the initial value. `None` without relative
/// entropy or with fewer than 3 records in the window.
pub fn fit_decay(series: &ObservableSeries, t_start: f64, floor: f64) -> Option<DecayFit> {
    let first = series.records.first()?.relative_entropy?;
    let window: Vec<(f64, f64)> = series
        .records
        .iter()
        .filter(|r| r.time >= t_start)
        .map(|r| (r.time, r.relative_entropy.unwrap_or(f64::NAN)))
        .take_while(|&(_, h)| h > floor * first)
        .collect();
    if window.len() < 3 {
        return None;
    }
    let n = window.len() as f64;
    let (st, sl) = window.iter().fold((0.0, 0.0), |(a, b), &(t, h)| (a + t, b + h.ln()));
    let (mt, ml) = (st / n, sl / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, h) in &window {
        sxy += (t - mt) * (h.ln() - ml);
        sxx += (t - mt) * (t - mt);
    }
    let rate = sxy / sxx;
    Some(DecayFit {
        rate,
        intercept: ml - rate * mt,
        t_start: window[0].0,
        t_end: window[window.len() - 1].0,
        samples: window.len(),
        strictly_decreasing: window.windows(2).all(|w| w[1].1 < w[0].1),
    })
}

/// Largest density along a run and the first time it exceeds a level.
#[derive(Debug, Clone, Copy)]
struct PeakTracker {
    level: f64,
    first_above: Option<f64>,
    peak: f64,
}

impl Observer for PeakTracker {
    fn observe(&mut self, _: &Stepper<'_>, _: Option<&State>, state: &State, _: Option<f64>) -> Result<(), SchemeError> {
        let m = state.u.max();
        self.peak = self.peak.max(m);
        if m > self.level && self.first_above.is_none() {
            self.first_above = Some(state.time);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InstabilityRun {
    pub perturbation: String,
    pub factor: f64,
    pub mu: f64,
    pub simulation: Simulation,
    /// `max u` over the run, over `mu`.
    pub peak_over_mu: f64,
    /// First time `max u > 2 mu`.
    pub first_above_twice_mu: Option<f64>,
    pub decay: Option<DecayFit>,
}

#[derive(Debug, Clone)]
pub struct Testcase3Outcome {
    /// First nonzero eigenvalue of the finite volume Laplacian.
    pub lambda1: f64,
    /// `beta + delta lambda1`.
    pub threshold: f64,
    pub runs: Vec<InstabilityRun>,
    pub manifest: Value,
}

const SUMMARY_HEADER: &str = "perturbation,factor,mu,threshold,final_max_u_over_mu,peak_u_over_mu,first_time_above_2mu,decay_rate,decay_t_start,decay_t_end,strictly_decreasing,entropy_violations,max_mass_drift,min_u,min_v";

fn run_one(
    config: &RunConfig,
    mesh: &Mesh,
    params: &SchemeParams,
    perturbation: &str,
    factor: f64,
    mu: f64,
    out: &Path,
) -> Result<InstabilityRun, ExperimentError> {
    let inst = config.instability.as_ref().expect("validated");
    let dir = out.join(format!("{perturbation}_x{}", factor));
    let state = initial_state(config, mesh, params, Some(mu), "mu", perturbation)?;
    let mut tracker = PeakTracker {
        level: 2.0 * mu,
        first_above: None,
        peak: 0.0,
    };
    let sim = simulate_observed(
        mesh,
        params,
        state,
        monitor_config(&config.output, Some(mu)),
        Some((&dir.join("snapshots"), &config.output.snapshot_times)),
        &mut [&mut tracker],
    )?;
    write_series(&dir.join("observables.csv"), &sim.series)?;
    let decay = fit_decay(&sim.series, inst.transient, inst.floor);
    log::info!("testcase3: {perturbation} x{factor} done");
    Ok(InstabilityRun {
        perturbation: perturbation.to_string(),
        factor,
        mu,
        peak_over_mu: tracker.peak / mu,
        first_above_twice_mu: tracker.first_above,
        decay,
        simulation: sim,
    })
}

pub fn run_testcase3(config: &RunConfig, out: &Path) -> Result<Testcase3Outcome, ExperimentError> {
    let start = Instant::now();
    let inst = config
        .instability
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("missing [instability] section".into()))?;
    let (mesh, params) = super::prepare(config)?;
    let lambda1 = smallest_nonzero_eigenvalue(&mesh, 1e-10).map_err(kslocal_core::diagnostics::DiagnosticsError::from)?;
    let threshold = stability_threshold(&mesh, &params)?;
    let (_, radius) = geometry(&config.mesh, &mesh);
    let (l1, l3) = disk_eigenvalues(radius);

    let jobs: Vec<(&str, f64)> = inst
        .perturbations
        .iter()
        .flat_map(|p| inst.factors.iter().map(move |&f| (p.as_str(), f)))
        .collect();
    let runs: Vec<InstabilityRun> = jobs
        .par_iter()
        .map(|&(p, f)| run_one(config, &mesh, &params, p, f, f * threshold, out))
        .collect::<Result<_, _>>()?;

    write_file(&out.join("instability.csv"), |w| {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for r in &runs {
            let c = &r.simulation.checks;
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.perturbation,
                r.factor,
                r.mu,
                threshold,
                r.simulation.final_state.u.max() / r.mu,
                r.peak_over_mu,
                opt(r.first_above_twice_mu),
                opt(r.decay.map(|d| d.rate)),
                opt(r.decay.map(|d| d.t_start)),
                opt(r.decay.map(|d| d.t_end)),
                r.decay.map(|d| d.strictly_decreasing.to_string()).unwrap_or_default(),
                c.entropy_violations,
                c.max_mass_drift,
                c.min_u,
                c.min_v
            )?;
        }
        Ok(())
    })?;

    let manifest = json!({
        "testcase": config.testcase,
        "config": config,
        "mesh": mesh_summary(&mesh),
        "lambda1_mesh": lambda1,
        "lambda1_disk": l1,
        "lambda3_disk": l3,
        "threshold": threshold,
        "threshold_continuous": params.beta + params.delta * l1,
        "files": {
            "summary": "instability.csv",
            "runs": runs.iter().map(|r| {
                let dir = format!("{}_x{}", r.perturbation, r.factor);
                json!({
                    "perturbation": r.perturbation,
                    "factor": r.factor,
                    "mu": r.mu,
                    "observables": format!("{dir}/observables.csv"),
                    "snapshots": r.simulation.snapshots.iter().map(|(t, p)| json!({"t": t, "path": relative(out, p)})).collect::<Vec<_>>(),
                    "checks": checks_summary(&r.simulation.checks),
                })
            }).collect::<Vec<_>>(),
        },
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    write_manifest(out, &manifest)?;
    Ok(Testcase3Outcome {
        lambda1,
        threshold,
        runs,
        manifest,
    })
}
