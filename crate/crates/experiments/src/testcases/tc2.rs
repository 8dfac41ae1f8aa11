//! Quasi-stationary limit: runs for several `eps` stepped in lockstep with
//! the `eps = 0` run on the same time grid.

use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use kslocal_core::diagnostics::{mean_dtv_l2sq_closed_form, Checks, Monitor};
use kslocal_core::scheme::{Observer, SchemeParams, State, Stepper};

use super::{initial_state, monitor_config, write_series, ExperimentError};
use crate::config::{Preparedness, RunConfig};
use crate::output::{checks_summary, mesh_summary, number_label, write_file, write_manifest};

impl Preparedness {
    pub fn label(self) -> &'static str {
        match self {
            Preparedness::Swp => "swp",
            Preparedness::Wp => "wp",
            Preparedness::Ip => "ip",
        }
    }

    /// Formula for `v0`.
    pub fn v_formula(self) -> &'static str {
        match self {
            Preparedness::Swp => "stationary",
            Preparedness::Wp => "wp",
            Preparedness::Ip => "0",
        }
    }
}

/// Summary of one `(data, eps)` run against the `eps = 0` run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApRow {
    pub data: Preparedness,
    pub eps: f64,
    /// `|v_eps - v_0|` in `L^2(Q_T)`.
    pub l2_qt: f64,
    /// `max_n |v_eps^n - v_0^n|_{L^2}`.
    pub sup_l2: f64,
    /// `|<d_t v>|_{L^2(0,T)}` from the computed means.
    pub mean_dtv_l2: f64,
    /// Its closed form on the same time grid.
    pub mean_dtv_l2_closed: f64,
    pub checks: Checks,
}

impl ApRow {
    pub const HEADER: &'static str = "data,eps,l2_qt_error,sup_l2_error,mean_dtv_l2,mean_dtv_l2_closed,max_mass_drift,max_mean_v_error,max_mean_w_error,max_mean_w_after_first,entropy_violations,duality_violations,min_u,min_v";

    fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = &self.checks;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.data.label(),
            self.eps,
            self.l2_qt,
            self.sup_l2,
            self.mean_dtv_l2,
            self.mean_dtv_l2_closed,
            c.max_mass_drift,
            c.max_mean_v_error,
            c.max_mean_w_error,
            c.max_mean_w_after_first,
            c.entropy_violations,
            c.duality_violations,
            c.min_u,
            c.min_v
        )
    }
}

#[derive(Debug, Clone)]
pub struct Testcase2Outcome {
    pub rows: Vec<ApRow>,
    /// Checks of the `eps = 0` runs.
    pub reference: Vec<(Preparedness, Checks)>,
    pub manifest: Value,
}

struct Lane<'m> {
    eps: f64,
    stepper: Stepper<'m>,
    monitor: Monitor,
    state: State,
    l2_qt_sq: f64,
    sup_l2: f64,
}

const SERIES_HEADER: &str = "data,eps,step,t,l2_error,mean_w";

fn run_class(config: &RunConfig, data: Preparedness, out: &Path) -> Result<(Vec<ApRow>, Checks, Vec<u8>), ExperimentError> {
    let (mesh, base) = super::prepare(config)?;
    let sweep = config.sweep.as_ref().expect("validated");
    let init = config.initial.as_ref().expect("validated");
    let with_eps = |eps: f64| SchemeParams { eps, ..base.clone() };

    let mut lanes = Vec::with_capacity(sweep.eps.len() + 1);
    for &eps in std::iter::once(&0.0).chain(&sweep.eps) {
        let params = with_eps(eps);
        let state = initial_state(config, &mesh, &params, None, &init.u, data.v_formula())?;
        let stepper = Stepper::new(&mesh, params)?;
        let mut monitor = Monitor::new(monitor_config(&config.output, None));
        monitor.observe(&stepper, None, &state, None)?;
        lanes.push(Lane {
            eps,
            stepper,
            monitor,
            state,
            l2_qt_sq: 0.0,
            sup_l2: 0.0,
        });
    }

    let mut series = Vec::new();
    let stride = config.output.stride;
    let total = base.schedule.n_steps();
    let record = |series: &mut Vec<u8>, lanes: &[Lane], errs: &[f64]| -> io::Result<()> {
        for (lane, e) in lanes[1..].iter().zip(errs) {
            let last = lane.monitor.series().records.last();
            let mean_w = last.filter(|r| r.step == lane.state.step).map_or(f64::NAN, |r| r.mean_w);
            writeln!(
                series,
                "{},{},{},{},{},{}",
                data.label(),
                lane.eps,
                lane.state.step,
                lane.state.time,
                e,
                mean_w
            )?;
        }
        Ok(())
    };
    let volumes = mesh.volumes();
    let distance = |a: &State, b: &State| -> f64 {
        a.v.values()
            .iter()
            .zip(b.v.values())
            .zip(volumes)
            .map(|((x, y), m)| m * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let errs: Vec<f64> = lanes[1..].iter().map(|l| distance(&l.state, &lanes[0].state)).collect();
    for (lane, e) in lanes[1..].iter_mut().zip(&errs) {
        lane.sup_l2 = *e;
    }
    record(&mut series, &lanes, &errs)?;

    for dt in base.schedule.steps() {
        for lane in lanes.iter_mut() {
            let next = lane.stepper.step(&lane.state, dt)?;
            lane.monitor.observe(&lane.stepper, Some(&lane.state), &next, Some(dt))?;
            lane.state = next;
        }
        let (reference, rest) = lanes.split_first_mut().expect("reference lane");
        let errs: Vec<f64> = rest
            .iter_mut()
            .map(|lane| {
                let e = distance(&lane.state, &reference.state);
                lane.l2_qt_sq += dt * e * e;
                lane.sup_l2 = lane.sup_l2.max(e);
                e
            })
            .collect();
        let step = lanes[0].state.step;
        if step % stride == 0 || step == total {
            record(&mut series, &lanes, &errs)?;
        }
    }

    let mut rows = Vec::new();
    let mut reference_checks = None;
    for lane in lanes {
        let params = lane.stepper.params().clone();
        let first = lane.monitor.series().records[0];
        let (series_out, checks) = lane.monitor.finish();
        let dir = out.join(data.label()).join(format!("eps_{}", number_label(lane.eps)));
        write_series(&dir.join("observables.csv"), &series_out)?;
        if lane.eps == 0.0 {
            reference_checks = Some(checks);
            continue;
        }
        let closed = mean_dtv_l2sq_closed_form(&params, first.mean_u, first.mean_v);
        rows.push(ApRow {
            data,
            eps: lane.eps,
            l2_qt: lane.l2_qt_sq.sqrt(),
            sup_l2: lane.sup_l2,
            mean_dtv_l2: checks.mean_dtv_l2sq.sqrt(),
            mean_dtv_l2_closed: closed.sqrt(),
            checks,
        });
    }
    Ok((rows, reference_checks.expect("reference lane"), series))
}

pub fn run_testcase2(config: &RunConfig, out: &Path) -> Result<Testcase2Outcome, ExperimentError> {
    let start = Instant::now();
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| ExperimentError::Invalid("missing [sweep] section".into()))?;
    let results: Vec<_> = sweep
        .data
        .par_iter()
        .map(|&d| run_class(config, d, out).map(|r| (d, r)))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut reference = Vec::new();
    let mut series = Vec::new();
    writeln!(series, "{SERIES_HEADER}")?;
    for (d, (r, checks, s)) in results {
        rows.extend(r);
        reference.push((d, checks));
        series.extend(s);
    }
    write_file(&out.join("ap_timeseries.csv"), |w| w.write_all(&series))?;
    write_file(&out.join("ap_summary.csv"), |w| {
        writeln!(w, "{}", ApRow::HEADER)?;
        rows.iter().try_for_each(|r| r.write(&mut *w))
    })?;

    let mesh = crate::meshes::build_mesh(&config.mesh, config.seed)?;
    let manifest = json!({
        "testcase": config.testcase,
        "config": config,
        "mesh": mesh_summary(&mesh),
        "files": {"summary": "ap_summary.csv", "timeseries": "ap_timeseries.csv"},
        "reference_checks": reference.iter().map(|(d, c)| json!({"data": d, "checks": checks_summary(c)})).collect::<Vec<_>>(),
        "elapsed_seconds": start.elapsed().as_secs_f64(),
    });
    write_manifest(out, &manifest)?;
    Ok(Testcase2Outcome {
        rows,
        reference,
        manifest,
    })
}
