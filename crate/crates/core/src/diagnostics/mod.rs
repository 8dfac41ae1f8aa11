//! Structure-preserving observables: entropy and dissipation, the discrete
//! dual norm, the asymptotic-preserving quantities and the linear stability
//! threshold.

mod monitor;

pub use monitor::{monitor_states, Checks, Monitor, MonitorConfig, ObservableSeries, Record};

use crate::linsolve::{compensated_sum, smallest_nonzero_eigenvalue, NeumannSolver, SolveError};
use crate::mesh::{DiscreteField, Mesh, MeshError};
use crate::scheme::{Schedule, SchemeParams};

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("{field} has a negative value {value} in cell {cell}")]
    Negative { field: &'static str, cell: usize, value: f64 },
    #[error("{field} must be strictly positive (found {value} in cell {cell})")]
    NotPositive { field: &'static str, cell: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// `h(x) = x (log x - 1) + 1`, extended by `h(0) = 1`.
pub fn h(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x * (x.ln() - 1.0) + 1.0
    }
}

fn require_nonnegative(field: &'static str, values: &[f64]) -> Result<(), DiagnosticsError> {
    match values.iter().position(|&x| !(x >= 0.0)) {
        Some(cell) => Err(DiagnosticsError::Negative {
            field,
            cell,
            value: values[cell],
        }),
        None => Ok(()),
    }
}

/// Volume-weighted mean with a compensated sum.
pub fn mean(mesh: &Mesh, w: &[f64]) -> f64 {
    compensated_sum(mesh.volumes().iter().zip(w).map(|(m, x)| m * x)) / mesh.domain_measure()
}

/// The four parts of the discrete entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyTerms {
    /// `sum m(K) h(u_K)`.
    pub boltzmann: f64,
    /// `(beta / 2) sum m(K) v_K^2`.
    pub quadratic: f64,
    /// `-sum m(K) u_K v_K`.
    pub cross: f64,
    /// `(delta / 2) sum tau (D v)^2`.
    pub gradient: f64,
}

impl EntropyTerms {
    pub fn total(&self) -> f64 {
        self.boltzmann + self.quadratic + self.cross + self.gradient
    }
}

pub fn entropy(
    mesh: &Mesh,
    params: &SchemeParams,
    u: &DiscreteField,
    v: &DiscreteField,
) -> Result<EntropyTerms, DiagnosticsError> {
    let (u, v) = (u.on(mesh)?, v.on(mesh)?);
    require_nonnegative("u", u)?;
    let m = mesh.volumes();
    let boltzmann = compensated_sum(m.iter().zip(u).map(|(m, &u)| m * h(u)));
    let quadratic = 0.5 * params.beta * compensated_sum(m.iter().zip(v).map(|(m, v)| m * v * v));
    let cross = -compensated_sum(m.iter().zip(u.iter().zip(v)).map(|(m, (u, v))| m * u * v));
    let gradient = 0.5 * params.delta * gradient_energy(mesh, v);
    Ok(EntropyTerms {
        boltzmann,
        quadratic,
        cross,
        gradient,
    })
}

/// `sum_sigma tau (D_sigma w)^2`.
fn gradient_energy(mesh: &Mesh, w: &[f64]) -> f64 {
    compensated_sum(mesh.interior_edges().map(|(_, k, l, tau)| tau * (w[l] - w[k]).powi(2)))
}

/// The two parts of the discrete dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipation {
    /// `4 sum tau (D sqrt(u gamma(v)))^2`.
    pub flux: f64,
    /// `eps sum m(K) ((v^n - v^{n-1}) / dt)^2`.
    pub relaxation: f64,
}

impl Dissipation {
    pub fn total(&self) -> f64 {
        self.flux + self.relaxation
    }
}

pub fn dissipation(
    mesh: &Mesh,
    params: &SchemeParams,
    u: &DiscreteField,
    v: &DiscreteField,
    v_prev: &DiscreteField,
    dt: f64,
) -> Result<Dissipation, DiagnosticsError> {
    let (u, v, v_prev) = (u.on(mesh)?, v.on(mesh)?, v_prev.on(mesh)?);
    require_nonnegative("u", u)?;
    if !(dt > 0.0) {
        return Err(DiagnosticsError::InvalidArgument(format!("time step {dt}")));
    }
    let root: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(&u, &v)| (u * params.motility.gamma(v)).sqrt())
        .collect();
    let flux = 4.0 * gradient_energy(mesh, &root);
    let relaxation = if params.eps == 0.0 {
        0.0
    } else {
        let m = mesh.volumes();
        params.eps * compensated_sum(m.iter().zip(v.iter().zip(v_prev)).map(|(m, (a, b))| m * ((a - b) / dt).powi(2)))
    };
    Ok(Dissipation { flux, relaxation })
}

/// Relative entropy with respect to the homogeneous state `(mu, mu / beta)`.
pub fn relative_entropy(
    mesh: &Mesh,
    params: &SchemeParams,
    u: &DiscreteField,
    v: &DiscreteField,
    mu: f64,
) -> Result<f64, DiagnosticsError> {
    let (u, v) = (u.on(mesh)?, v.on(mesh)?);
    if !(mu > 0.0) {
        return Err(DiagnosticsError::InvalidArgument(format!("mu = {mu} must be > 0")));
    }
    if let Some(cell) = u.iter().position(|&x| !(x > 0.0)) {
        return Err(DiagnosticsError::NotPositive {
            field: "u",
            cell,
            value: u[cell],
        });
    }
    let (us, vs) = (mu, mu / params.beta);
    let bulk = compensated_sum(mesh.volumes().iter().zip(u.iter().zip(v)).map(|(m, (&u, &v))| {
        let (du, dv) = (u - us, v - vs);
        m * (du * (u / us).ln() + 0.5 * params.beta * dv * dv - du * dv)
    }));
    Ok(bulk + 0.5 * params.delta * gradient_energy(mesh, v))
}

/// `w - <w>`. Deviations at rounding level of `w` itself are set to zero:
/// what is left of a constant field after the subtraction is noise whose
/// mean is as large as the noise.
pub fn remove_mean(mesh: &Mesh, w: &[f64]) -> Vec<f64> {
    let m = mean(mesh, w);
    let once: Vec<f64> = w.iter().map(|x| x - m).collect();
    let size = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let spread = once.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if spread <= 8.0 * f64::EPSILON * size {
        return vec![0.0; w.len()];
    }
    let m = mean(mesh, &once);
    once.into_iter().map(|x| x - m).collect()
}

/// Evaluates the discrete dual norm `N(w) = |z|_{1,2}` where `z` is the
/// zero-mean solution of `-Lap z = w`.
#[derive(Debug, Clone)]
pub struct DualNorm {
    solver: NeumannSolver,
}

impl DualNorm {
    pub fn new(mesh: &Mesh) -> Result<Self, DiagnosticsError> {
        Ok(DualNorm {
            solver: NeumannSolver::new(mesh)?,
        })
    }

    /// `N(w)` together with the potential `z`.
    pub fn eval_with_potential(&self, mesh: &Mesh, w: &DiscreteField) -> Result<(f64, DiscreteField), DiagnosticsError> {
        w.on(mesh)?;
        let z = self.solver.solve(w)?;
        // |z|^2 = sum tau (Dz)^2 = sum m w z, but the edge form stays
        // accurate when z is small.
        Ok((gradient_energy(mesh, z.values()).sqrt(), z))
    }

    pub fn eval(&self, mesh: &Mesh, w: &DiscreteField) -> Result<f64, DiagnosticsError> {
        Ok(self.eval_with_potential(mesh, w)?.0)
    }
}

pub fn dual_norm(mesh: &Mesh, w: &DiscreteField) -> Result<f64, DiagnosticsError> {
    DualNorm::new(mesh)?.eval(mesh, w)
}

/// `sum m(K) u_K^2 gamma(v_K)`.
pub fn weighted_density_norm_sq(mesh: &Mesh, params: &SchemeParams, u: &[f64], v: &[f64]) -> f64 {
    compensated_sum(
        mesh.volumes()
            .iter()
            .zip(u.iter().zip(v))
            .map(|(m, (u, v))| m * u * u * params.motility.gamma(*v)),
    )
}

/// One step of the telescoped duality estimate:
/// `N(u^n - <u0>)^2 + 2 dt |u^n sqrt(gamma(v^n))|^2 <= N(u^{n-1} - <u0>)^2 + 2 dt m(Omega) <u0>^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityStep {
    pub lhs: f64,
    pub rhs: f64,
}

impl DualityStep {
    pub fn new(n_prev_sq: f64, n_sq: f64, weighted_sq: f64, dt: f64, domain: f64, mean_u0: f64) -> Self {
        DualityStep {
            lhs: n_sq + 2.0 * dt * weighted_sq,
            rhs: n_prev_sq + 2.0 * dt * domain * mean_u0 * mean_u0,
        }
    }

    /// Holds up to `slack` relative to the larger side.
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack * self.lhs.abs().max(self.rhs.abs())
    }
}

/// Closed-form `<v^n>` for any schedule:
/// `<v^n> - <u0>/beta = prod_k eps / (eps + beta dt_k) (<v0> - <u0>/beta)`.
pub fn mean_v_closed_form(eps: f64, beta: f64, mean_u0: f64, mean_v0: f64, dts: &[f64]) -> f64 {
    let factor: f64 = dts.iter().map(|dt| eps / (eps + beta * dt)).product();
    mean_u0 / beta + factor * (mean_v0 - mean_u0 / beta)
}

/// `<w^n>` with `w^n = (v^{n+1} - v^n) / dt_{n+1}`, given the closed-form
/// `<v^n>`: `(<u0> - beta <v^n>) / (eps + beta dt_{n+1})`.
pub fn mean_w_closed_form(eps: f64, beta: f64, mean_u0: f64, mean_vn: f64, dt_next: f64) -> f64 {
    (mean_u0 - beta * mean_vn) / (eps + beta * dt_next)
}

/// `sum_n dt_{n+1} <w^n>^2` over a whole schedule, from the closed forms.
pub fn mean_dtv_l2sq_closed_form(params: &SchemeParams, mean_u0: f64, mean_v0: f64) -> f64 {
    let (eps, beta) = (params.eps, params.beta);
    let mut mean_v = mean_v0;
    let mut total = 0.0;
    for dt in params.schedule.steps() {
        let w = mean_w_closed_form(eps, beta, mean_u0, mean_v, dt);
        total += dt * w * w;
        mean_v = mean_u0 / beta + eps / (eps + beta * dt) * (mean_v - mean_u0 / beta);
    }
    total
}

/// Upper bound `(m(Omega)/beta) ((<u0> - beta <v0>)/sqrt(eps))^2 (1 - (1+xi)^{-2 N})`
/// on `2 m(Omega) sum dt <w^n>^2`, for a constant time step and `eps > 0`.
pub fn massw2_bound(domain: f64, eps: f64, beta: f64, dt: f64, n_steps: usize, mean_u0: f64, mean_v0: f64) -> f64 {
    let xi = beta * dt / eps;
    let a = (mean_u0 - beta * mean_v0).powi(2) / eps;
    domain / beta * a * (1.0 - (1.0 + xi).powi(-2 * n_steps as i32))
}

/// Time steps of a schedule, collected.
pub fn time_steps(schedule: &Schedule) -> Vec<f64> {
    schedule.steps().collect()
}

/// One record of the trajectory-level AP quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApRecord {
    /// `<w^n>`.
    pub mean: f64,
    /// `|w^n|_{L^2}`.
    pub l2: f64,
    /// `|w^n - <w^n>|_{L^2}`.
    pub deviation_l2: f64,
}

/// `w^n = (v^{n+1} - v^n) / dt_{n+1}` along a stored trajectory.
pub fn ap_observables(mesh: &Mesh, vs: &[DiscreteField], dts: &[f64]) -> Result<Vec<ApRecord>, DiagnosticsError> {
    if vs.len() < 2 {
        return Err(DiagnosticsError::InvalidArgument("need at least two snapshots".into()));
    }
    if dts.len() + 1 != vs.len() {
        return Err(DiagnosticsError::InvalidArgument(format!(
            "{} snapshots need {} time steps, got {}",
            vs.len(),
            vs.len() - 1,
            dts.len()
        )));
    }
    vs.windows(2)
        .zip(dts)
        .map(|(pair, &dt)| {
            let (a, b) = (pair[0].on(mesh)?, pair[1].on(mesh)?);
            let w: Vec<f64> = a.iter().zip(b).map(|(a, b)| (b - a) / dt).collect();
            Ok(ap_record(mesh, &w))
        })
        .collect()
}

pub(crate) fn ap_record(mesh: &Mesh, w: &[f64]) -> ApRecord {
    let m = mesh.volumes();
    let mean = mean(mesh, w);
    let l2 = compensated_sum(m.iter().zip(w).map(|(m, w)| m * w * w)).sqrt();
    let deviation_l2 = compensated_sum(m.iter().zip(w).map(|(m, w)| m * (w - mean).powi(2))).sqrt();
    ApRecord { mean, l2, deviation_l2 }
}

/// `mu_c = beta + delta lambda_1`, with `lambda_1` the first nonzero
/// eigenvalue of the finite volume Laplacian on `mesh`.
pub fn stability_threshold(mesh: &Mesh, params: &SchemeParams) -> Result<f64, DiagnosticsError> {
    if params.delta == 0.0 {
        return Ok(params.beta);
    }
    Ok(params.beta + params.delta * smallest_nonzero_eigenvalue(mesh, 1e-10)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleReport {
    pub m: usize,
    pub r: usize,
    /// `N(pi u)` on the grid of `2m` cells.
    pub dual_norm: f64,
    /// `1 / sqrt(m)`.
    pub lower_bound: f64,
    /// `sqrt(2 / r)`, an upper bound for the continuous dual norm of `u`.
    pub continuous_upper_bound: f64,
}

impl CounterexampleReport {
    /// Certified lower bound on `N(pi u) / |u|`.
    pub fn ratio(&self) -> f64 {
        self.dual_norm / self.continuous_upper_bound
    }
}

/// The projection onto a uniform grid of `(-1, 1)` with `2m` cells is not
/// uniformly continuous for the dual norm: the projection of
/// `u = r 1_(0,1/r) - r 1_(-1/r,0)` is `m 1_(0,1/m) - m 1_(-1/m,0)`, whose
/// dual norm is at least `1/sqrt(m)` while `|u|` is at most `sqrt(2/r)`.
pub fn projection_counterexample(m: usize, r: usize) -> Result<CounterexampleReport, DiagnosticsError> {
    if m < 2 || r < m {
        return Err(DiagnosticsError::InvalidArgument(format!("need r >= m >= 2 (m = {m}, r = {r})")));
    }
    let mesh = Mesh::uniform_1d(-1.0, 1.0, 2 * m)?;
    let values: Vec<f64> = (0..2 * m)
        .map(|k| match k {
            _ if k + 1 == m => -(m as f64),
            _ if k == m => m as f64,
            _ => 0.0,
        })
        .collect();
    let w = DiscreteField::new(&mesh, values)?;
    let dual_norm = dual_norm(&mesh, &w)?;
    Ok(CounterexampleReport {
        m,
        r,
        dual_norm,
        lower_bound: 1.0 / (m as f64).sqrt(),
        continuous_upper_bound: (2.0 / r as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::{Motility, Schedule};

    fn params(eps: f64, delta: f64, beta: f64) -> SchemeParams {
        SchemeParams::new(eps, delta, beta, Motility::Exponential, Schedule::constant(0.1, 1).unwrap())
    }

    #[test]
    fn entropy_of_simple_states() {
        let mesh = Mesh::uniform_1d(0.0, 2.0, 5).unwrap();
        let p = params(1.0, 0.5, 2.0);
        let one = DiscreteField::constant(&mesh, 1.0);
        let zero = DiscreteField::zeros(&mesh);
        assert_eq!(entropy(&mesh, &p, &one, &zero).unwrap().total(), 0.0);
        assert!((entropy(&mesh, &p, &zero, &zero).unwrap().total() - 2.0).abs() < 1e-15);
        let mu = 3.0;
        let e = entropy(&mesh, &p, &DiscreteField::constant(&mesh, mu), &DiscreteField::constant(&mesh, mu / 2.0))
            .unwrap()
            .total();
        assert!((e - 2.0 * (h(mu) - mu * mu / 4.0)).abs() < 1e-13);
        assert!(entropy(&mesh, &p, &DiscreteField::constant(&mesh, -1.0), &zero).is_err());
    }

    #[test]
    fn dissipation_vanishes_at_equilibrium() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 4).unwrap();
        let p = params(1.0, 1.0, 1.0);
        let v = DiscreteField::constant(&mesh, 0.3);
        let d = dissipation(&mesh, &p, &DiscreteField::constant(&mesh, 2.0), &v, &v, 0.1).unwrap();
        assert_eq!(d.total(), 0.0);
    }

    #[test]
    fn two_cell_dual_norm() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 2).unwrap();
        let w = DiscreteField::new(&mesh, vec![1.0, -1.0]).unwrap();
        assert!((dual_norm(&mesh, &w).unwrap() - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn relative_entropy_vanishes_at_the_steady_state() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 3).unwrap();
        let p = params(1.0, 1.0, 4.0);
        let u = DiscreteField::constant(&mesh, 2.0);
        let v = DiscreteField::constant(&mesh, 0.5);
        assert_eq!(relative_entropy(&mesh, &p, &u, &v, 2.0).unwrap(), 0.0);
        assert!(relative_entropy(&mesh, &p, &u, &v, 0.0).is_err());
    }

    #[test]
    fn closed_forms_agree() {
        let p = SchemeParams::new(0.1, 1.0, 2.0, Motility::Exponential, Schedule::constant(0.05, 30).unwrap());
        let (mu0, mv0) = (0.7, 0.0);
        let dts = time_steps(&p.schedule);
        let xi = 2.0 * 0.05 / 0.1;
        let w0 = (mu0 - 2.0 * mv0) / (0.1 * (1.0 + xi));
        let v5 = mean_v_closed_form(0.1, 2.0, mu0, mv0, &dts[..5]);
        let w5 = mean_w_closed_form(0.1, 2.0, mu0, v5, 0.05);
        assert!((w5 - w0 / (1.0 + xi).powi(5)).abs() < 1e-14 * w0);
        let sum = mean_dtv_l2sq_closed_form(&p, mu0, mv0);
        let bound = massw2_bound(1.0, 0.1, 2.0, 0.05, 30, mu0, mv0);
        assert!(2.0 * sum <= bound);
        // The bound only drops the factor 1 / (1 + xi / 2).
        assert!((2.0 * sum * (1.0 + xi / 2.0) - bound).abs() < 1e-13 * bound);
    }

    #[test]
    fn counterexample_meets_its_lower_bound() {
        let r = projection_counterexample(2, 8).unwrap();
        assert!(r.dual_norm >= r.lower_bound);
        assert!(projection_counterexample(4, 3).is_err());
    }

    #[test]
    fn threshold_on_four_cells() {
        let mesh = Mesh::uniform_1d(0.0, 1.0, 4).unwrap();
        let mu = stability_threshold(&mesh, &params(1.0, 1.0, 1.0)).unwrap();
        let expected = 1.0 + 64.0 * (std::f64::consts::PI / 8.0).sin().powi(2);
        assert!((mu - expected).abs() < 1e-9 * expected);
        assert_eq!(stability_threshold(&mesh, &params(1.0, 0.0, 1.5)).unwrap(), 1.5);
    }
}
