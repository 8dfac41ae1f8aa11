//! The linearly implicit time stepper.
//!
//! Each step first solves `M_v v^n = m (eps v^{n-1} + dt u^{n-1})`, then
//! `M_u(v^n) u^n = m u^{n-1}`. `M_v` only depends on `dt` and is factorized
//! once per schedule segment; `M_u` is reassembled every step.

mod snapshot;

pub use snapshot::{write_snapshot_csv, write_vtk};

use crate::linsolve::{self, Factorized, MeshPattern, SolveError, SparseSystem};
use crate::mesh::{DiscreteField, Mesh, MeshError};

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("schedule covers t = {covered}, expected {expected}")]
    ScheduleMismatch { covered: f64, expected: f64 },
    #[error("step {step}: {source}")]
    Solve {
        step: usize,
        #[source]
        source: SolveError,
    },
    #[error("step {step}: non-finite value in {field}")]
    NonFinite { step: usize, field: &'static str },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("observer failed: {0}")]
    Observer(String),
}

/// Cell motility `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motility {
    /// `exp(-s)`.
    Exponential,
    /// `1 / (c + s^k)`.
    Algebraic { c: f64, k: f64 },
}

impl Motility {
    pub fn gamma(&self, s: f64) -> f64 {
        match *self {
            Motility::Exponential => (-s).exp(),
            Motility::Algebraic { c, k } => 1.0 / (c + s.max(0.0).powf(k)),
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Motility::Exponential)
    }

    fn validate(&self) -> Result<(), SchemeError> {
        match *self {
            Motility::Exponential => Ok(()),
            Motility::Algebraic { c, k } if c > 0.0 && k >= 1.0 && c.is_finite() && k.is_finite() => Ok(()),
            Motility::Algebraic { c, k } => Err(SchemeError::InvalidParams(format!(
                "algebraic motility needs c > 0 and k >= 1 (got c = {c}, k = {k})"
            ))),
        }
    }
}

/// `steps` time steps of size `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub dt: f64,
    pub steps: usize,
}

/// Piecewise constant time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, SchemeError> {
        for s in &segments {
            if !(s.dt > 0.0 && s.dt.is_finite()) {
                return Err(SchemeError::InvalidParams(format!("time step {} is not positive", s.dt)));
            }
        }
        Ok(Schedule {
            segments: segments.into_iter().filter(|s| s.steps > 0).collect(),
        })
    }

    pub fn constant(dt: f64, steps: usize) -> Result<Self, SchemeError> {
        Self::new(vec![Segment { dt, steps }])
    }

    /// Constant `dt` up to `t_final`; `t_final / dt` must be an integer up
    /// to round-off.
    pub fn uniform(dt: f64, t_final: f64) -> Result<Self, SchemeError> {
        Self::new(vec![Segment {
            dt,
            steps: step_count(t_final, dt)?,
        }])
    }

    /// `dt_fine` until `t_switch`, then `dt_coarse` until `t_final`.
    pub fn two_phase(dt_fine: f64, t_switch: f64, dt_coarse: f64, t_final: f64) -> Result<Self, SchemeError> {
        Self::new(vec![
            Segment {
                dt: dt_fine,
                steps: step_count(t_switch, dt_fine)?,
            },
            Segment {
                dt: dt_coarse,
                steps: step_count(t_final - t_switch, dt_coarse)?,
            },
        ])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_steps(&self) -> usize {
        self.segments.iter().map(|s| s.steps).sum()
    }

    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.dt * s.steps as f64).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.segments.len() <= 1
    }

    /// Time step of every step, in order.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.dt, s.steps))
    }
}

fn step_count(t: f64, dt: f64) -> Result<usize, SchemeError> {
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(SchemeError::InvalidParams(format!("cannot split [0, {t}] in steps of {dt}")));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(SchemeError::InvalidParams(format!(
            "{t} is not a multiple of the time step {dt}"
        )));
    }
    Ok(n as usize)
}

/// Default relative residual for the linear solves.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub motility: Motility,
    pub schedule: Schedule,
    pub solver_tol: f64,
}

impl SchemeParams {
    pub fn new(eps: f64, delta: f64, beta: f64, motility: Motility, schedule: Schedule) -> Self {
        SchemeParams {
            eps,
            delta,
            beta,
            motility,
            schedule,
            solver_tol: DEFAULT_SOLVER_TOL,
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let finite = [self.eps, self.delta, self.beta, self.solver_tol]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SchemeError::InvalidParams("non-finite parameter".into()));
        }
        if self.eps < 0.0 {
            return Err(SchemeError::InvalidParams(format!("eps = {} must be >= 0", self.eps)));
        }
        if self.beta <= 0.0 {
            return Err(SchemeError::InvalidParams(format!("beta = {} must be > 0", self.beta)));
        }
        if self.delta < 0.0 {
            return Err(SchemeError::InvalidParams(format!("delta = {} must be >= 0", self.delta)));
        }
        if self.solver_tol <= 0.0 {
            return Err(SchemeError::InvalidParams("solver tolerance must be > 0".into()));
        }
        self.motility.validate()
    }
}

/// `(u^n, v^n)` at step `n`, time `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: DiscreteField,
    pub v: DiscreteField,
    pub step: usize,
    pub time: f64,
}

impl State {
    /// Initial state. Without `v0`, `eps` must be zero and `v0` is taken
    /// from the stationary equation.
    pub fn initial(
        mesh: &Mesh,
        params: &SchemeParams,
        u0: DiscreteField,
        v0: Option<DiscreteField>,
    ) -> Result<Self, SchemeError> {
        u0.on(mesh)?;
        if u0.min() < 0.0 {
            return Err(SchemeError::InvalidParams("initial density has negative values".into()));
        }
        let v = match v0 {
            Some(v) => {
                v.on(mesh)?;
                v
            }
            None if params.eps == 0.0 => stationary_v_init(mesh, params, &u0)?,
            None => {
                return Err(SchemeError::InvalidParams(
                    "an initial chemical concentration is required when eps > 0".into(),
                ))
            }
        };
        Ok(State {
            u: u0,
            v,
            step: 0,
            time: 0.0,
        })
    }
}

/// `M_v`: diagonal `m(K)(eps + dt beta) + delta dt sum tau`, off-diagonal
/// `-delta dt tau`.
pub fn assemble_mv(pattern: &MeshPattern, mesh: &Mesh, params: &SchemeParams, dt: f64) -> SparseSystem {
    mv_with(pattern, mesh, params.eps, dt * params.beta, dt * params.delta)
}

fn mv_with(pattern: &MeshPattern, mesh: &Mesh, mass: f64, reaction: f64, diffusion: f64) -> SparseSystem {
    let mut values = vec![0.0; pattern.nnz()];
    for (k, m) in mesh.volumes().iter().enumerate() {
        values[pattern.diag_slot(k)] = m * (mass + reaction);
    }
    for e in pattern.edges() {
        let a = diffusion * e.tau;
        values[pattern.diag_slot(e.k)] += a;
        values[pattern.diag_slot(e.l)] += a;
        values[e.kl] = -a;
        values[e.lk] = -a;
    }
    pattern.build(values).expect("finite parameters give finite entries")
}

/// `M_u^n`: diagonal `m(K) + dt sum tau gamma(v_K)`, entry `(K, L)`
/// `-dt tau gamma(v_L)`. Column `K` sums to `m(K)`.
pub fn assemble_mu(
    pattern: &MeshPattern,
    mesh: &Mesh,
    params: &SchemeParams,
    dt: f64,
    v: &DiscreteField,
) -> Result<SparseSystem, SchemeError> {
    let v = v.on(mesh)?;
    let g: Vec<f64> = v.iter().map(|&s| params.motility.gamma(s)).collect();
    let mut values = vec![0.0; pattern.nnz()];
    for (k, m) in mesh.volumes().iter().enumerate() {
        values[pattern.diag_slot(k)] = *m;
    }
    for e in pattern.edges() {
        let (ak, al) = (dt * e.tau * g[e.k], dt * e.tau * g[e.l]);
        values[pattern.diag_slot(e.k)] += ak;
        values[pattern.diag_slot(e.l)] += al;
        values[e.kl] = -al;
        values[e.lk] = -ak;
    }
    pattern
        .build(values)
        .map_err(|source| SchemeError::Solve { step: 0, source })
}

/// Solves `-delta Lap v + beta v = u0` (the `eps = 0`, `dt = 1` version of
/// `M_v`), so that `beta <v> = <u0>`.
pub fn stationary_v_init(mesh: &Mesh, params: &SchemeParams, u0: &DiscreteField) -> Result<DiscreteField, SchemeError> {
    let u0 = u0.on(mesh)?;
    let pattern = MeshPattern::new(mesh);
    let a = mv_with(&pattern, mesh, 0.0, params.beta, params.delta);
    let b: Vec<f64> = u0.iter().zip(mesh.volumes()).map(|(u, m)| u * m).collect();
    let v = linsolve::solve(&a, &b, params.solver_tol).map_err(|source| SchemeError::Solve { step: 0, source })?;
    Ok(DiscreteField::new(mesh, v)?)
}

/// Advances states on one mesh, caching `M_v` between steps of equal size.
#[derive(Debug)]
pub struct Stepper<'m> {
    mesh: &'m Mesh,
    pattern: MeshPattern,
    params: SchemeParams,
    mv: Option<(f64, Factorized)>,
}

impl<'m> Stepper<'m> {
    pub fn new(mesh: &'m Mesh, params: SchemeParams) -> Result<Self, SchemeError> {
        params.validate()?;
        if params.delta == 0.0 {
            log::warn!("delta = 0: the chemical equation has no diffusion; this limit is very degenerate and comes without stability guarantees");
        }
        Ok(Stepper {
            mesh,
            pattern: MeshPattern::new(mesh),
            params,
            mv: None,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn pattern(&self) -> &MeshPattern {
        &self.pattern
    }

    /// One step of size `dt` from `state`.
    pub fn step(&mut self, state: &State, dt: f64) -> Result<State, SchemeError> {
        let n = state.step + 1;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SchemeError::InvalidParams(format!("time step {dt} is not positive")));
        }
        let u_prev = state.u.on(self.mesh)?;
        let v_prev = state.v.on(self.mesh)?;
        let volumes = self.mesh.volumes();
        let tol = self.params.solver_tol;
        let eps = self.params.eps;
        let solve_err = |source| SchemeError::Solve { step: n, source };

        if self.mv.as_ref().is_none_or(|(cached, _)| *cached != dt) {
            let mv = assemble_mv(&self.pattern, self.mesh, &self.params, dt);
            self.mv = Some((dt, Factorized::new(mv).map_err(solve_err)?));
        }
        let (_, mv) = self.mv.as_ref().unwrap();
        let bv: Vec<f64> = volumes
            .iter()
            .zip(u_prev.iter().zip(v_prev))
            .map(|(m, (u, v))| m * (eps * v + dt * u))
            .collect();
        let v = mv.solve(&bv, tol).map_err(solve_err)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SchemeError::NonFinite { step: n, field: "v" });
        }
        let v = DiscreteField::new(self.mesh, v)?;

        let mu = assemble_mu(&self.pattern, self.mesh, &self.params, dt, &v)?;
        let bu: Vec<f64> = volumes.iter().zip(u_prev).map(|(m, u)| m * u).collect();
        let u = linsolve::solve_with_guess(&mu, &bu, Some(u_prev), tol).map_err(solve_err)?;
        if u.iter().any(|x| !x.is_finite()) {
            return Err(SchemeError::NonFinite { step: n, field: "u" });
        }
        Ok(State {
            u: DiscreteField::new(self.mesh, u)?,
            v,
            step: n,
            time: state.time + dt,
        })
    }
}

/// Receives every state of a run: the initial one with `prev = None`,
/// then each new state together with its predecessor and time step.
pub trait Observer {
    fn observe(
        &mut self,
        stepper: &Stepper<'_>,
        prev: Option<&State>,
        state: &State,
        dt: Option<f64>,
    ) -> Result<(), SchemeError>;
}

/// Runs the whole schedule of `params`, which must end at `t_final`, and
/// returns the final state.
pub fn run(
    initial: State,
    mesh: &Mesh,
    params: &SchemeParams,
    t_final: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<State, SchemeError> {
    let covered = params.schedule.total_time();
    if (covered - t_final).abs() > 1e-9 * t_final.abs().max(1.0) {
        return Err(SchemeError::ScheduleMismatch {
            covered,
            expected: t_final,
        });
    }
    let mut stepper = Stepper::new(mesh, params.clone())?;
    for o in observers.iter_mut() {
        o.observe(&stepper, None, &initial, None)?;
    }
    let mut state = initial;
    for seg in params.schedule.segments() {
        let start = state.time;
        for i in 1..=seg.steps {
            let mut next = stepper.step(&state, seg.dt)?;
            // Avoids the drift of repeated additions.
            next.time = start + i as f64 * seg.dt;
            for o in observers.iter_mut() {
                o.observe(&stepper, Some(&state), &next, Some(seg.dt))?;
            }
            state = next;
        }
    }
    Ok(state)
}
