//! Per-step evaluation of the observables along a run, with the runtime
//! checks of the scheme's structural properties.

use std::io::{self, Write};

use super::{
    ap_record, dissipation, remove_mean, entropy, mean, mean_w_closed_form, relative_entropy, weighted_density_norm_sq,
    DiagnosticsError, DualNorm, DualityStep, EntropyTerms,
};
use crate::mesh::{DiscreteField, Mesh};
use crate::scheme::{Observer, SchemeError, State, Stepper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// Keep every `stride`-th record (the initial and final ones are always
    /// kept). Checks run on every step regardless.
    pub stride: usize,
    /// Evaluate the dual norm and the duality inequality.
    pub dual_norm: bool,
    /// Report the relative entropy to the homogeneous state of this mass.
    pub relative_to: Option<f64>,
    pub entropy_slack: f64,
    pub duality_slack: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            stride: 1,
            dual_norm: true,
            relative_to: None,
            entropy_slack: 1e-12,
            duality_slack: 1e-10,
        }
    }
}

/// Observables at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub step: usize,
    pub time: f64,
    /// Step that led here; 0 for the initial record.
    pub dt: f64,
    pub mean_u: f64,
    pub mean_v: f64,
    pub entropy: EntropyTerms,
    /// `D^n`; NaN for the initial record.
    pub dissipation: f64,
    pub max_u: f64,
    pub max_v: f64,
    /// `N(u^n - <u0>)`; NaN when not evaluated.
    pub dual_norm: f64,
    /// `|u sqrt(gamma(v))|^2_{L^2}`.
    pub u_sqrt_gamma_l2sq: f64,
    /// `<(v^n - v^{n-1}) / dt>`; NaN for the initial record.
    pub mean_w: f64,
    /// `|(v^n - v^{n-1}) / dt|_{L^2}`; NaN for the initial record.
    pub w_l2: f64,
    pub relative_entropy: Option<f64>,
}

/// Records of one run, in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservableSeries {
    pub records: Vec<Record>,
}

const HEADER: &str = "step,t,dt,mean_u,mean_v,entropy,dissipation,boltzmann,quadratic,cross,gradient,max_u,max_v,dual_norm,u_sqrt_gamma_l2sq,mean_w,w_l2";

impl ObservableSeries {
    pub fn has_relative_entropy(&self) -> bool {
        self.records.first().is_some_and(|r| r.relative_entropy.is_some())
    }

    pub fn header(&self) -> String {
        if self.has_relative_entropy() {
            format!("{HEADER},relative_entropy")
        } else {
            HEADER.to_string()
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.header())?;
        let with_rel = self.has_relative_entropy();
        for r in &self.records {
            let e = &r.entropy;
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.time,
                r.dt,
                r.mean_u,
                r.mean_v,
                e.total(),
                r.dissipation,
                e.boltzmann,
                e.quadratic,
                e.cross,
                e.gradient,
                r.max_u,
                r.max_v,
                r.dual_norm,
                r.u_sqrt_gamma_l2sq,
                r.mean_w,
                r.w_l2
            )?;
            if with_rel {
                write!(out, ",{}", r.relative_entropy.unwrap_or(f64::NAN))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Outcome of the runtime checks over every step of a run. Relative
/// quantities are scaled as documented per field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checks {
    pub steps: usize,
    /// Whether entropy decay is a property of the motility (exponential).
    pub entropy_checked: bool,
    /// Steps with `H^n > H^{n-1} + slack (1 + |H^{n-1}|)`.
    pub entropy_violations: usize,
    /// Largest `(H^n - H^{n-1}) / (1 + |H^{n-1}|)`.
    pub max_entropy_increase: f64,
    /// Steps with `H^n + dt D^n > H^{n-1} + slack (1 + |H^{n-1}|)`.
    pub budget_violations: usize,
    pub max_budget_excess: f64,
    pub duality_violations: usize,
    /// Largest `(lhs - rhs) / max(lhs, rhs)` of the duality step.
    pub max_duality_excess: f64,
    pub min_u: f64,
    pub min_v: f64,
    /// `max |<u^n> - <u0>| / <u0>`.
    pub max_mass_drift: f64,
    /// `max |<v^n> - closed form|`, relative to `max(|<v0>|, <u0>/beta)`.
    pub max_mean_v_error: f64,
    /// `max |<w^n> - closed form|`, relative to the largest closed-form value.
    pub max_mean_w_error: f64,
    /// `max_{n >= 1} |<w^n>|`, absolute.
    pub max_mean_w_after_first: f64,
    /// `sum dt <w^n>^2`.
    pub mean_dtv_l2sq: f64,
}

/// Observer computing a [`Record`] after every step and checking entropy
/// decay, the duality step, positivity and the mean identities.
#[derive(Debug)]
pub struct Monitor {
    config: MonitorConfig,
    dual: Option<DualNorm>,
    series: ObservableSeries,
    checks: Checks,
    mean_u0: f64,
    mean_v0: f64,
    /// Closed-form `<v^n>` of the current level.
    mean_v_closed: f64,
    mean_w_scale: f64,
    prev_entropy: f64,
    prev_dual_sq: f64,
    total_steps: usize,
}

impl Monitor {
    pub fn new(config: MonitorConfig) -> Self {
        Monitor {
            config: MonitorConfig {
                stride: config.stride.max(1),
                ..config
            },
            dual: None,
            series: ObservableSeries::default(),
            checks: Checks {
                steps: 0,
                entropy_checked: false,
                entropy_violations: 0,
                max_entropy_increase: f64::NEG_INFINITY,
                budget_violations: 0,
                max_budget_excess: f64::NEG_INFINITY,
                duality_violations: 0,
                max_duality_excess: f64::NEG_INFINITY,
                min_u: f64::INFINITY,
                min_v: f64::INFINITY,
                max_mass_drift: 0.0,
                max_mean_v_error: 0.0,
                max_mean_w_error: 0.0,
                max_mean_w_after_first: 0.0,
                mean_dtv_l2sq: 0.0,
            },
            mean_u0: f64::NAN,
            mean_v0: f64::NAN,
            mean_v_closed: f64::NAN,
            mean_w_scale: 0.0,
            prev_entropy: f64::NAN,
            prev_dual_sq: f64::NAN,
            total_steps: 0,
        }
    }

    pub fn series(&self) -> &ObservableSeries {
        &self.series
    }

    pub fn checks(&self) -> &Checks {
        &self.checks
    }

    pub fn finish(self) -> (ObservableSeries, Checks) {
        (self.series, self.checks)
    }

    fn evaluate(&mut self, stepper: &Stepper<'_>, prev: Option<&State>, state: &State, dt: Option<f64>) -> Result<(), DiagnosticsError> {
        let mesh = stepper.mesh();
        let params = stepper.params();
        let (u, v) = (state.u.on(mesh)?, state.v.on(mesh)?);
        let domain = mesh.domain_measure();
        let mean_u = mean(mesh, u);
        let mean_v = mean(mesh, v);
        let terms = entropy(mesh, params, &state.u, &state.v)?;
        let h = terms.total();
        let weighted_sq = weighted_density_norm_sq(mesh, params, u, v);
        let c = &mut self.checks;

        if prev.is_none() {
            self.mean_u0 = mean_u;
            self.mean_v0 = mean_v;
            self.mean_v_closed = mean_v;
            self.total_steps = params.schedule.n_steps();
            c.entropy_checked = params.motility.is_exponential();
            if self.config.dual_norm {
                self.dual = Some(DualNorm::new(mesh)?);
            }
        }
        let dual_sq = match &self.dual {
            Some(d) => {
                // Subtracting the current mean instead of <u0> drops the
                // mass drift, which would otherwise leave a nonzero mean.
                let shifted = DiscreteField::new(mesh, remove_mean(mesh, u))?;
                d.eval(mesh, &shifted)?.powi(2)
            }
            None => f64::NAN,
        };

        c.min_u = c.min_u.min(state.u.min());
        c.min_v = c.min_v.min(state.v.min());
        c.max_mass_drift = c.max_mass_drift.max((mean_u - self.mean_u0).abs() / self.mean_u0.abs());

        let (mut d_total, mut mean_w, mut w_l2) = (f64::NAN, f64::NAN, f64::NAN);
        if let (Some(prev), Some(dt)) = (prev, dt) {
            c.steps += 1;
            let d = dissipation(mesh, params, &state.u, &state.v, &prev.v, dt)?.total();
            d_total = d;
            let allowance = self.config.entropy_slack * (1.0 + self.prev_entropy.abs());
            let increase = h - self.prev_entropy;
            c.max_entropy_increase = c.max_entropy_increase.max(increase / (1.0 + self.prev_entropy.abs()));
            let excess = h + dt * d - self.prev_entropy;
            c.max_budget_excess = c.max_budget_excess.max(excess / (1.0 + self.prev_entropy.abs()));
            if c.entropy_checked {
                c.entropy_violations += usize::from(increase > allowance);
                c.budget_violations += usize::from(excess > allowance);
            }

            if self.dual.is_some() {
                let step = DualityStep::new(self.prev_dual_sq, dual_sq, weighted_sq, dt, domain, self.mean_u0);
                let rel = (step.lhs - step.rhs) / step.lhs.abs().max(step.rhs.abs());
                c.max_duality_excess = c.max_duality_excess.max(rel);
                if c.entropy_checked && !step.holds(self.config.duality_slack) {
                    c.duality_violations += 1;
                }
            }

            let pv = prev.v.on(mesh)?;
            let w: Vec<f64> = v.iter().zip(pv).map(|(a, b)| (a - b) / dt).collect();
            let ap = ap_record(mesh, &w);
            mean_w = ap.mean;
            w_l2 = ap.l2;
            let closed_w = mean_w_closed_form(params.eps, params.beta, self.mean_u0, self.mean_v_closed, dt);
            self.mean_w_scale = self.mean_w_scale.max(closed_w.abs());
            if self.mean_w_scale > 0.0 {
                c.max_mean_w_error = c.max_mean_w_error.max((mean_w - closed_w).abs() / self.mean_w_scale);
            }
            if c.steps >= 2 {
                c.max_mean_w_after_first = c.max_mean_w_after_first.max(mean_w.abs());
            }
            c.mean_dtv_l2sq += dt * mean_w * mean_w;

            let target = self.mean_u0 / params.beta;
            self.mean_v_closed = target + params.eps / (params.eps + params.beta * dt) * (self.mean_v_closed - target);
            let scale = self.mean_v0.abs().max(target.abs());
            c.max_mean_v_error = c.max_mean_v_error.max((mean_v - self.mean_v_closed).abs() / scale);
        }
        self.prev_entropy = h;
        self.prev_dual_sq = dual_sq;

        let keep = state.step % self.config.stride == 0 || state.step == self.total_steps;
        if keep {
            let relative_entropy = match self.config.relative_to {
                Some(mu) => Some(relative_entropy(mesh, params, &state.u, &state.v, mu)?),
                None => None,
            };
            self.series.records.push(Record {
                step: state.step,
                time: state.time,
                dt: dt.unwrap_or(0.0),
                mean_u,
                mean_v,
                entropy: terms,
                dissipation: d_total,
                max_u: state.u.max(),
                max_v: state.v.max(),
                dual_norm: dual_sq.sqrt(),
                u_sqrt_gamma_l2sq: weighted_sq,
                mean_w,
                w_l2,
                relative_entropy,
            });
        }
        Ok(())
    }
}

impl Observer for Monitor {
    fn observe(&mut self, stepper: &Stepper<'_>, prev: Option<&State>, state: &State, dt: Option<f64>) -> Result<(), SchemeError> {
        self.evaluate(stepper, prev, state, dt)
            .map_err(|e| SchemeError::Observer(e.to_string()))
    }
}

/// Runs a monitor over a finished trajectory held in memory, mostly for
/// tests and small studies.
pub fn monitor_states(
    mesh: &Mesh,
    params: &crate::scheme::SchemeParams,
    config: MonitorConfig,
    states: &[State],
) -> Result<(ObservableSeries, Checks), SchemeError> {
    let stepper = Stepper::new(mesh, params.clone())?;
    let mut monitor = Monitor::new(config);
    for (i, s) in states.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &states[j]);
        monitor.observe(&stepper, prev, s, prev.map(|p| s.time - p.time))?;
    }
    Ok(monitor.finish())
}
