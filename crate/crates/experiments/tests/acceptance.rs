//! Acceptance checks. Prints one PASS/FAIL line per criterion with the
//! measured values underneath, then a tally. The process exits 0 either
//! way; the lines are the verdict.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kslocal_core::diagnostics::{projection_counterexample, Checks, DualNorm, Monitor, MonitorConfig, ObservableSeries};
use kslocal_core::linsolve::smallest_nonzero_eigenvalue;
use kslocal_core::mesh::{delaunay, disk_mesh, discrete_seminorm, DiscreteField, DiskMeshSpec, Mesh};
use kslocal_core::scheme::{
    assemble_mu, assemble_mv, run, Motility, Observer, Schedule, SchemeError, SchemeParams, State, Stepper,
};
use kslocal_experiments::config::{self, Preparedness, RunConfig};
use kslocal_experiments::testcases::{run_single, run_testcase1, run_testcase2, run_testcase3, ApRow};

const J11: f64 = 1.841_183_781_340_659;

/// One finished run and what is known about its data.
#[derive(Debug, Clone)]
struct RunRecord {
    label: String,
    checks: Checks,
    eps: f64,
    beta: f64,
    mean_u0: f64,
    mean_v0: f64,
    exponential: bool,
    constant_dt: bool,
    positive_data: bool,
    dual_norm: bool,
    /// Smallest time step.
    dt_min: f64,
}

impl RunRecord {
    fn new(label: impl Into<String>, checks: Checks, params: &SchemeParams, series: &ObservableSeries, dual_norm: bool) -> Self {
        let first = series.records[0];
        RunRecord {
            label: label.into(),
            checks,
            eps: params.eps,
            beta: params.beta,
            mean_u0: first.mean_u,
            mean_v0: first.mean_v,
            exponential: params.motility.is_exponential(),
            constant_dt: params.schedule.is_constant(),
            positive_data: false,
            dual_norm,
            dt_min: params.schedule.steps().fold(f64::INFINITY, f64::min),
        }
    }

    fn positive(mut self, yes: bool) -> Self {
        self.positive_data = yes;
        self
    }

    /// `max |<v^n> - closed form|`, absolute.
    fn mean_v_error(&self) -> f64 {
        self.checks.max_mean_v_error * self.mean_v0.abs().max(self.mean_u0.abs() / self.beta)
    }

    /// Whether `<u0> - beta <v0>` is distinguishable from zero, so that the
    /// closed-form `<w^n>` gives a scale to be relative to.
    fn has_mean_w_scale(&self) -> bool {
        (self.mean_u0 - self.beta * self.mean_v0).abs() > 1e-8 * self.mean_u0.abs()
    }
}

#[derive(Debug, Default)]
struct MatrixAudit {
    /// Largest `|sum - expected|` over the diagonal entry.
    worst: f64,
    /// Largest `|sum - expected|` over the expected value.
    worst_strict: f64,
    sign_failures: usize,
    matrices: usize,
}

impl MatrixAudit {
    fn record(&mut self, sums: &[f64], expected: &[f64], diagonal: &[f64], z_matrix: bool) {
        for ((s, e), d) in sums.iter().zip(expected).zip(diagonal) {
            self.worst = self.worst.max((s - e).abs() / d.abs());
            self.worst_strict = self.worst_strict.max((s - e).abs() / e.abs());
        }
        self.sign_failures += usize::from(!z_matrix);
        self.matrices += 1;
    }

    fn audit(&mut self, stepper: &Stepper<'_>, v: &DiscreteField, dt: f64) {
        let (mesh, params, pattern) = (stepper.mesh(), stepper.params(), stepper.pattern());
        let mv = assemble_mv(pattern, mesh, params, dt);
        let expected: Vec<f64> = mesh.volumes().iter().map(|m| m * (params.eps + dt * params.beta)).collect();
        self.record(mv.row_sums(), &expected, &mv.diagonal(), mv.sign_summary().is_z_matrix_with_positive_diagonal());
        let mu = assemble_mu(pattern, mesh, params, dt, v).unwrap();
        self.record(&mu.column_sums(), mesh.volumes(), &mu.diagonal(), mu.sign_summary().is_z_matrix_with_positive_diagonal());
    }
}

impl Observer for MatrixAudit {
    fn observe(&mut self, stepper: &Stepper<'_>, _: Option<&State>, state: &State, dt: Option<f64>) -> Result<(), SchemeError> {
        if let Some(dt) = dt {
            self.audit(stepper, &state.v, dt);
        }
        Ok(())
    }
}

struct Verdicts {
    lines: Vec<(bool, String)>,
}

impl Verdicts {
    fn report(&mut self, name: &str, pass: bool, details: &[String]) {
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
        for d in details {
            println!("    {d}");
        }
        self.lines.push((pass, name.to_string()));
    }
}

fn preset(name: &str) -> RunConfig {
    config::load(name, false).unwrap()
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------- runs

fn random_runs(count: usize, audit: &mut MatrixAudit) -> Vec<RunRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let n = rng.random_range(2..=40);
        let length = rng.random_range(0.5..3.0);
        let eps = [0.0, 1e-3, 1.0][rng.random_range(0..3)];
        let dt = 10f64.powf(rng.random_range(-4.0..=0.0));
        let delta = 10f64.powf(rng.random_range(-3.0..=0.0));
        let beta = rng.random_range(0.05..5.0);
        let steps = rng.random_range(5..=30);
        let params = SchemeParams::new(eps, delta, beta, Motility::Exponential, Schedule::constant(dt, steps).unwrap());
        let mesh = Mesh::uniform_1d(0.0, length, n).unwrap();
        let u0: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let v0: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let state = State::initial(
            &mesh,
            &params,
            DiscreteField::new(&mesh, u0).unwrap(),
            Some(DiscreteField::new(&mesh, v0).unwrap()),
        )
        .unwrap();
        let mut monitor = Monitor::new(MonitorConfig::default());
        run(state, &mesh, &params, params.schedule.total_time(), &mut [&mut monitor, audit]).unwrap();
        let (series, checks) = monitor.finish();
        out.push(RunRecord::new(format!("random {i}"), checks, &params, &series, true).positive(true));
    }
    out
}

struct Tc1 {
    records: Vec<RunRecord>,
    orders: Vec<(usize, Option<f64>, Option<f64>)>,
    errors: Vec<(usize, f64)>,
    seconds: f64,
}

fn testcase1(config: &RunConfig, out: &Path) -> Tc1 {
    let start = Instant::now();
    let outcome = run_testcase1(config, out).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let params = config.scheme_params().unwrap();
    let records = outcome
        .checks
        .iter()
        .map(|(n, c)| {
            let series = read_series(&out.join(format!("n{n}/observables.csv")));
            RunRecord::new(format!("testcase1 n={n}"), *c, &params, &series, config.output.dual_norm)
        })
        .collect();
    Tc1 {
        records,
        orders: outcome.report.rows.iter().map(|r| (r.k, r.l2_order, r.linf_order)).collect(),
        errors: outcome.report.rows.iter().map(|r| (r.n_cells, r.l2)).collect(),
        seconds,
    }
}

/// The first record of an observables file, enough for [`RunRecord::new`].
fn read_series(path: &Path) -> ObservableSeries {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    let get = |name: &str| -> f64 { row[headers.iter().position(|h| h == name).unwrap()].parse().unwrap() };
    let mut series = ObservableSeries::default();
    series.records.push(kslocal_core::diagnostics::Record {
        step: 0,
        time: 0.0,
        dt: 0.0,
        mean_u: get("mean_u"),
        mean_v: get("mean_v"),
        entropy: kslocal_core::diagnostics::EntropyTerms {
            boltzmann: get("boltzmann"),
            quadratic: get("quadratic"),
            cross: get("cross"),
            gradient: get("gradient"),
        },
        dissipation: f64::NAN,
        max_u: get("max_u"),
        max_v: get("max_v"),
        dual_norm: f64::NAN,
        u_sqrt_gamma_l2sq: f64::NAN,
        mean_w: f64::NAN,
        w_l2: f64::NAN,
        relative_entropy: None,
    });
    series
}

fn ap_records(config: &RunConfig, rows: &[ApRow], reference: &[(Preparedness, Checks)], out: &Path, tag: &str) -> Vec<RunRecord> {
    let base = config.scheme_params().unwrap();
    let mut records = Vec::new();
    let label = kslocal_experiments::output::number_label;
    for r in rows {
        let p = SchemeParams { eps: r.eps, ..base.clone() };
        let series = read_series(&out.join(r.data.label()).join(format!("eps_{}/observables.csv", label(r.eps))));
        records.push(
            RunRecord::new(format!("{tag} {} eps={}", r.data.label(), r.eps), r.checks, &p, &series, config.output.dual_norm)
                .positive(r.data != Preparedness::Ip),
        );
    }
    for (d, c) in reference {
        let p = SchemeParams { eps: 0.0, ..base.clone() };
        let series = read_series(&out.join(d.label()).join("eps_0/observables.csv"));
        records.push(
            RunRecord::new(format!("{tag} {} eps=0", d.label()), *c, &p, &series, config.output.dual_norm)
                .positive(*d != Preparedness::Ip),
        );
    }
    records
}

// ---------------------------------------------------------------- oracles

fn dense_laplacian(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.n_cells();
    let mut a = DMatrix::zeros(n, n);
    for (_, k, l, tau) in mesh.interior_edges() {
        a[(k, k)] += tau;
        a[(l, l)] += tau;
        a[(k, l)] -= tau;
        a[(l, k)] -= tau;
    }
    a
}

/// `N(w)` from the dense bordered system `[A m; m^T 0]`.
fn oracle_dual_norm(mesh: &Mesh, w: &[f64]) -> f64 {
    let n = mesh.n_cells();
    let a = dense_laplacian(mesh);
    let m = mesh.volumes();
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(&a);
    let mut rhs = DVector::zeros(n + 1);
    for k in 0..n {
        big[(k, n)] = m[k];
        big[(n, k)] = m[k];
        rhs[k] = m[k] * w[k];
    }
    let z = big.lu().solve(&rhs).unwrap().rows(0, n).into_owned();
    z.dot(&(&a * &z)).sqrt()
}

fn small_meshes() -> Vec<Mesh> {
    let mut out = Vec::new();
    for n in 2..=8 {
        out.push(Mesh::uniform_1d(0.0, 1.0, n).unwrap());
        out.push(Mesh::uniform_1d(-2.0, 0.7, n).unwrap());
    }
    let hexagon: Vec<[f64; 2]> = std::iter::once([0.0, 0.0])
        .chain((0..6).map(|i| {
            let a = std::f64::consts::PI * i as f64 / 3.0;
            [a.cos(), a.sin()]
        }))
        .collect();
    let fan: Vec<[usize; 3]> = (0..6).map(|i| [0, 1 + i, 1 + (i + 1) % 6]).collect();
    out.push(Mesh::from_triangulation(&hexagon, &fan).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    while out.len() < 60 {
        let points: Vec<[f64; 2]> = (0..rng.random_range(4..=6)).map(|_| [rng.random(), rng.random()]).collect();
        let Ok(tris) = delaunay(&points) else { continue };
        if !(2..=8).contains(&tris.len()) {
            continue;
        }
        if let Ok(mesh) = Mesh::from_triangulation(&points, &tris) {
            if mesh.is_connected() {
                out.push(mesh);
            }
        }
    }
    out
}

// ---------------------------------------------------------------- main

fn main() {
    let total = Instant::now();
    let scratch = tempfile::tempdir().unwrap();
    let dir = |name: &str| scratch.path().join(name);
    let mut v = Verdicts { lines: Vec::new() };
    let mut records: Vec<RunRecord> = Vec::new();
    let mut audit = MatrixAudit::default();

    // Testcase 1, desk scale and the coarsest level at full scale.
    let tc1 = testcase1(&preset("testcase1"), &dir("tc1"));
    records.extend(tc1.records.iter().cloned());
    let mut full = preset("testcase1-paper");
    full.output.dual_norm = true;
    full.convergence.as_mut().unwrap().levels = vec![50];
    let tc1_full = testcase1(&full, &dir("tc1-full"));
    let k0 = tc1_full.errors[0].1;
    {
        let in_range = |o: Option<f64>| o.is_some_and(|o| (1.7..=2.3).contains(&o));
        let orders_ok = tc1.orders.iter().filter(|r| r.0 >= 1).all(|r| in_range(r.1) && in_range(r.2));
        let time_ok = tc1.seconds <= 300.0;
        let k0_ok = ((k0 - 6.4e-2) / 6.4e-2).abs() <= 0.25;
        let mut details: Vec<String> = tc1
            .orders
            .iter()
            .zip(&tc1.errors)
            .map(|((k, l2, li), (n, e))| format!("k={k} N={n} L2 error {e:.4e} L2 order {l2:?} Linf order {li:?}"))
            .collect();
        details.push(format!("desk runtime {:.1} s (limit 300 s)", tc1.seconds));
        details.push(format!(
            "full scale k=0 L2 error {k0:.4e} vs 6.4e-2 ({:+.1}%, limit 25%), {:.1} s",
            100.0 * (k0 - 6.4e-2) / 6.4e-2,
            tc1_full.seconds
        ));
        v.report("convergence orders", orders_ok && time_ok && k0_ok, &details);
    }
    records.extend(tc1_full.records.iter().cloned());

    // Testcase 2 as configured (fine initial layer), with the dual norm.
    let mut tc2 = preset("testcase2");
    tc2.output.dual_norm = true;
    let start = Instant::now();
    let tc2_out = run_testcase2(&tc2, &dir("tc2")).unwrap();
    let tc2_seconds = start.elapsed().as_secs_f64();
    records.extend(ap_records(&tc2, &tc2_out.rows, &tc2_out.reference, &dir("tc2"), "testcase2"));

    // The same sweep with a constant time step.
    let mut tc2c = preset("testcase2");
    tc2c.output.dual_norm = true;
    tc2c.time.initial_layer = None;
    let tc2c_out = run_testcase2(&tc2c, &dir("tc2-constant")).unwrap();
    records.extend(ap_records(&tc2c, &tc2c_out.rows, &tc2c_out.reference, &dir("tc2-constant"), "testcase2 constant dt"));

    // Testcase 3, desk scale.
    let tc3 = preset("testcase3");
    let tc3_params = tc3.scheme_params().unwrap();
    let tc3_out = run_testcase3(&tc3, &dir("tc3")).unwrap();
    for r in &tc3_out.runs {
        let label = format!("testcase3 {} x{}", r.perturbation, r.factor);
        records.push(RunRecord::new(label, r.simulation.checks, &tc3_params, &r.simulation.series, true).positive(true));
    }

    // Randomized 1D runs.
    let random = random_runs(1000, &mut audit);
    records.extend(random.iter().cloned());

    // Testcase 4 twice.
    let tc4 = preset("testcase4");
    let tc4_params = tc4.scheme_params().unwrap();
    let start = Instant::now();
    let tc4_a = run_single(&tc4, &dir("tc4-a"));
    let tc4_seconds = start.elapsed().as_secs_f64();
    let tc4_b = run_single(&tc4, &dir("tc4-b"));
    let tc4_record = tc4_a
        .as_ref()
        .ok()
        .map(|(sim, _)| RunRecord::new("testcase4", sim.checks, &tc4_params, &sim.series, false).positive(true));
    records.extend(tc4_record.clone());

    // Matrix sums on the final states of the 2D runs.
    for r in &tc3_out.runs {
        let mesh = kslocal_experiments::meshes::build_mesh(&tc3.mesh, tc3.seed).unwrap();
        let stepper = Stepper::new(&mesh, tc3_params.clone()).unwrap();
        let v = DiscreteField::new(&mesh, r.simulation.final_state.v.values().to_vec()).unwrap();
        audit.audit(&stepper, &v, 0.1);
    }
    if let Ok((sim, _)) = &tc4_a {
        let mesh = kslocal_experiments::meshes::build_mesh(&tc4.mesh, tc4.seed).unwrap();
        let stepper = Stepper::new(&mesh, tc4_params.clone()).unwrap();
        let v = DiscreteField::new(&mesh, sim.final_state.v.values().to_vec()).unwrap();
        audit.audit(&stepper, &v, 0.1);
    }

    // Entropy.
    {
        let checked: Vec<&RunRecord> = records.iter().filter(|r| r.exponential).collect();
        let violations: usize = checked.iter().map(|r| r.checks.entropy_violations).sum();
        let worst = checked.iter().map(|r| r.checks.max_entropy_increase).fold(f64::NEG_INFINITY, f64::max);
        v.report(
            "entropy monotonicity",
            violations == 0 && random.len() == 1000,
            &[
                format!("{} runs with exponential motility ({} randomized), {violations} violations", checked.len(), random.len()),
                format!("largest (H^n - H^(n-1)) / (1 + |H^(n-1)|) = {worst:.3e} (slack 1e-12)"),
            ],
        );
    }

    // Mass identities.
    {
        let mass = records.iter().map(|r| r.checks.max_mass_drift).fold(0.0, f64::max);
        let constant: Vec<&RunRecord> = records.iter().filter(|r| r.constant_dt).collect();
        let (worst_v, worst_label) = constant
            .iter()
            .map(|r| (r.mean_v_error(), r.label.as_str()))
            .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
        v.report(
            "mass identities",
            mass <= 1e-9 && worst_v <= 1e-9,
            &[
                format!("max |<u^n> - <u0>| / <u0> = {mass:.3e} over {} runs (limit 1e-9)", records.len()),
                format!(
                    "max |<v^n> - closed form| = {worst_v:.3e} over {} constant-dt runs, worst {worst_label} (limit 1e-9)",
                    constant.len()
                ),
            ],
        );
    }

    // Positivity and matrix structure.
    {
        let positive: Vec<&RunRecord> = records.iter().filter(|r| r.positive_data).collect();
        let min_u = positive.iter().map(|r| r.checks.min_u).fold(f64::INFINITY, f64::min);
        let min_v = positive.iter().map(|r| r.checks.min_v).fold(f64::INFINITY, f64::min);
        let min_u_all = records.iter().map(|r| r.checks.min_u).fold(f64::INFINITY, f64::min);
        let ok = min_u > 0.0 && min_v > 0.0 && audit.worst <= 1e-13 && audit.sign_failures == 0 && min_u_all > 0.0;
        v.report(
            "positivity and M-matrix structure",
            ok,
            &[
                format!("{} positive-data runs: min u {min_u:.3e}, min v {min_v:.3e}", positive.len()),
                format!("min u over all {} runs {min_u_all:.3e}", records.len()),
                format!(
                    "{} matrices: max |sum - expected| / diagonal = {:.3e} (limit 1e-13), sign pattern failures {}",
                    audit.matrices, audit.worst, audit.sign_failures
                ),
                format!("same, relative to the expected sum itself: {:.3e}", audit.worst_strict),
            ],
        );
    }

    // Dual norm oracle.
    {
        let meshes = small_meshes();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut worst, mut worst_sup, mut worst_attain, mut fields) = (0.0f64, 0.0f64, 0.0f64, 0);
        for mesh in &meshes {
            let dual = DualNorm::new(mesh).unwrap();
            for _ in 0..200 {
                let raw: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mean = raw.iter().zip(mesh.volumes()).map(|(x, m)| x * m).sum::<f64>() / mesh.domain_measure();
                let w: Vec<f64> = raw.iter().map(|x| x - mean).collect();
                let (n, z) = dual.eval_with_potential(mesh, &DiscreteField::new(mesh, w.clone()).unwrap()).unwrap();
                let expected = oracle_dual_norm(mesh, &w);
                worst = worst.max((n - expected).abs() / expected);
                // Attained at theta = z / N with unit seminorm.
                let theta = z.scale(1.0 / n).unwrap();
                let pairing: f64 = mesh.volumes().iter().zip(&w).zip(theta.values()).map(|((m, w), t)| m * w * t).sum();
                worst_attain = worst_attain
                    .max((pairing - n).abs() / n)
                    .max((discrete_seminorm(mesh, &theta, 2.0).unwrap() - 1.0).abs());
                let t: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let tf = DiscreteField::new(mesh, t.clone()).unwrap();
                let s = discrete_seminorm(mesh, &tf, 2.0).unwrap();
                if s > 1e-8 {
                    let p: f64 = mesh.volumes().iter().zip(&w).zip(&t).map(|((m, w), t)| m * w * t).sum();
                    worst_sup = worst_sup.max(p / s / n - 1.0);
                }
                fields += 1;
            }
        }
        v.report(
            "dual norm oracle",
            worst <= 1e-10 && worst_attain <= 1e-10 && worst_sup <= 1e-12,
            &[
                format!("{} meshes with at most 8 cells, {fields} zero-mean fields", meshes.len()),
                format!("max relative difference to the dense solve {worst:.3e} (limit 1e-10)"),
                format!("attainment at z / N: max deviation {worst_attain:.3e}; random directions exceed N by at most {worst_sup:.3e}"),
            ],
        );
    }

    // Duality.
    {
        let checked: Vec<&RunRecord> = records.iter().filter(|r| r.exponential && r.dual_norm).collect();
        let violations: usize = checked.iter().map(|r| r.checks.duality_violations).sum();
        let skipped: Vec<&str> = records.iter().filter(|r| r.exponential && !r.dual_norm).map(|r| r.label.as_str()).collect();
        let worst = checked.iter().map(|r| r.checks.max_duality_excess).fold(f64::NEG_INFINITY, f64::max);
        v.report(
            "per-step duality inequality",
            violations == 0 && skipped.is_empty(),
            &[
                format!("{} exponential-motility runs, {violations} violations", checked.len()),
                format!("largest (lhs - rhs) / max(lhs, rhs) = {worst:.3e}"),
                format!("runs without the dual norm: {skipped:?}"),
            ],
        );
    }

    // Asymptotic preserving closed forms.
    {
        let eps_pos: Vec<&RunRecord> = records.iter().filter(|r| r.constant_dt && r.eps > 0.0).collect();
        let scaled: Vec<&&RunRecord> = eps_pos.iter().filter(|r| r.has_mean_w_scale()).collect();
        let (w_err, w_label) = scaled
            .iter()
            .map(|r| (r.checks.max_mean_w_error, r.label.as_str()))
            .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
        let flat = eps_pos.len() - scaled.len();
        let eps0: Vec<&RunRecord> = records.iter().filter(|r| r.eps == 0.0).collect();
        let w0_worst = eps0
            .iter()
            .filter(|r| r.constant_dt)
            .max_by(|a, b| a.checks.max_mean_w_after_first.total_cmp(&b.checks.max_mean_w_after_first))
            .unwrap();
        let (w0, w0_label) = (w0_worst.checks.max_mean_w_after_first, w0_worst.label.as_str());
        // Rounding of <v> alone moves the difference quotient by this much.
        let floor = |r: &RunRecord| f64::EPSILON * (r.mean_u0 / r.beta) / r.dt_min;
        let above_floor = eps0
            .iter()
            .filter(|r| r.constant_dt && r.checks.max_mean_w_after_first > 1e-12)
            .map(|r| r.checks.max_mean_w_after_first / floor(r))
            .fold(0.0, f64::max);
        let over = eps0.iter().filter(|r| r.constant_dt && r.checks.max_mean_w_after_first > 1e-12).count();
        let (w0_layer, w0_layer_label) = eps0
            .iter()
            .filter(|r| !r.constant_dt)
            .map(|r| (r.checks.max_mean_w_after_first, r.label.as_str()))
            .fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
        let ip: Vec<(f64, f64)> = tc2_out
            .rows
            .iter()
            .filter(|r| r.data == Preparedness::Ip)
            .map(|r| (r.eps, r.mean_dtv_l2))
            .collect();
        let slope = log_slope(&ip);
        let closed_gap = tc2_out
            .rows
            .iter()
            .filter(|r| r.data == Preparedness::Ip)
            .map(|r| (r.mean_dtv_l2 - r.mean_dtv_l2_closed).abs() / r.mean_dtv_l2_closed)
            .fold(0.0, f64::max);
        let swp = tc2_out
            .rows
            .iter()
            .filter(|r| r.data == Preparedness::Swp)
            .map(|r| r.mean_dtv_l2)
            .fold(0.0, f64::max);
        let ok = w_err <= 1e-10 && w0 <= 1e-12 && (slope + 0.5).abs() <= 0.05 && swp <= 1e-8;
        v.report(
            "asymptotic preserving closed forms",
            ok,
            &[
                format!(
                    "<w^n> vs closed form, {} constant-dt runs with eps > 0: max relative error {w_err:.3e}, worst {w_label} (limit 1e-10)",
                    scaled.len()
                ),
                format!("{flat} further runs start at <u0> = beta <v0> to round-off and have no scale to be relative to"),
                format!(
                    "eps = 0, constant dt: max_(n>=1) |<w^n>| = {w0:.3e}, worst {w0_label} with dt {:.3e}, beta {:.3}, <u0>/beta {:.3} (limit 1e-12)",
                    w0_worst.dt_min,
                    w0_worst.beta,
                    w0_worst.mean_u0 / w0_worst.beta
                ),
                format!(
                    "{over} of {} constant-dt eps = 0 runs exceed 1e-12, all within {above_floor:.1} x machine epsilon * <v> / dt",
                    eps0.iter().filter(|r| r.constant_dt).count()
                ),
                format!("eps = 0 with the 1e-7 initial layer: {w0_layer:.3e} ({w0_layer_label}), not part of the verdict"),
                format!("IP slope of |<d_t v>|_L2(0,T) against eps: {slope:.4} (target -0.5 +- 0.05)"),
                format!("IP values vs closed form on the same time grid: max relative gap {closed_gap:.3e}"),
                format!("IP points {:?}", ip.iter().map(|(e, x)| format!("{e:e}:{x:.4e}")).collect::<Vec<_>>()),
                format!("SWP max over eps {swp:.3e} (limit 1e-8)"),
                format!("testcase2 with the dual norm took {tc2_seconds:.1} s"),
            ],
        );
    }

    // Stability threshold.
    {
        let mut grid_err = 0.0f64;
        for n in [50usize, 100, 200, 400, 800] {
            let mesh = Mesh::uniform_1d(0.0, 1.0, n).unwrap();
            let expected = 4.0 * (n * n) as f64 * (std::f64::consts::PI / (2.0 * n as f64)).sin().powi(2);
            let got = smallest_nonzero_eigenvalue(&mesh, 1e-10).unwrap();
            grid_err = grid_err.max((got - expected).abs() / expected);
        }
        let refined = disk_mesh(&DiskMeshSpec {
            n_boundary: 256,
            radius: 1.0,
            zeta: 0.1,
            seed: 0,
        })
        .unwrap();
        let disk_lambda = smallest_nonzero_eigenvalue(&refined, 1e-10).unwrap();
        let disk_err = (disk_lambda - J11 * J11).abs() / (J11 * J11);
        let find = |factor: f64| tc3_out.runs.iter().find(|r| r.perturbation == "j1" && r.factor == factor).unwrap();
        let (a, c) = (find(0.9), find(4.0));
        let a_ok = a.decay.is_some_and(|d| d.strictly_decreasing && d.rate < 0.0);
        let c_ok = c.first_above_twice_mu.is_some();
        v.report(
            "stability threshold",
            grid_err <= 1e-8 && disk_err <= 0.02 && a_ok && c_ok,
            &[
                format!("uniform grids N = 50..800: max relative error to 4 N^2 sin^2(pi / 2N) {grid_err:.3e} (limit 1e-8)"),
                format!(
                    "disk with 256 boundary points, {} cells: lambda1 {disk_lambda:.6} vs {:.6} ({:.3}%, limit 2%)",
                    refined.n_cells(),
                    J11 * J11,
                    100.0 * disk_err
                ),
                format!(
                    "desk disk, {} cells: lambda1 {:.6}, threshold {:.6}",
                    tc3_out.manifest["mesh"]["cells"], tc3_out.lambda1, tc3_out.threshold
                ),
                format!("case (a) mu = 0.9 threshold: fit {:?}", a.decay),
                format!(
                    "case (c) mu = 4 threshold: max u / mu peaked at {:.6}, first time above 2 mu {:?} (T = 2000)",
                    c.peak_over_mu, c.first_above_twice_mu
                ),
                format!(
                    "mu = 1.1 threshold: max u / mu peaked at {:.3}, first time above 2 mu {:?}",
                    find(1.1).peak_over_mu,
                    find(1.1).first_above_twice_mu
                ),
            ],
        );
    }

    // Counterexample.
    {
        let reports: Vec<_> = [4usize, 16, 64].iter().map(|&m| projection_counterexample(m, 2 * m * m).unwrap()).collect();
        let bounds = reports.iter().all(|r| r.dual_norm >= r.lower_bound);
        let growth: Vec<f64> = reports.windows(2).map(|w| w[1].ratio() / w[0].ratio()).collect();
        v.report(
            "projection counterexample",
            bounds && growth.iter().all(|&g| g >= 1.9),
            &reports
                .iter()
                .map(|r| {
                    format!(
                        "m={} r={}: N(pi u) = {:.6e} >= 1/sqrt(m) = {:.6e}, ratio bound {:.4}",
                        r.m,
                        r.r,
                        r.dual_norm,
                        r.lower_bound,
                        r.ratio()
                    )
                })
                .chain(std::iter::once(format!("growth per 4x in m: {growth:?} (limit 1.9)")))
                .collect::<Vec<_>>(),
        );
    }

    // Testcase 4.
    {
        let mut details = Vec::new();
        let mut ok = false;
        match (&tc4_a, &tc4_b, &tc4_record) {
            (Ok((sim, manifest)), Ok(_), Some(rec)) => {
                let finite = sim.final_state.u.values().iter().chain(sim.final_state.v.values()).all(|x| x.is_finite())
                    && sim.series.records.iter().all(|r| r.entropy.total().is_finite() && r.max_u.is_finite());
                let mut files = Vec::new();
                collect_files(&dir("tc4-a"), &mut files);
                let mut differing = Vec::new();
                for f in &files {
                    let rel = f.strip_prefix(dir("tc4-a")).unwrap();
                    if rel == Path::new("manifest.json") {
                        continue;
                    }
                    if std::fs::read(f).ok() != std::fs::read(dir("tc4-b").join(rel)).ok() {
                        differing.push(rel.display().to_string());
                    }
                }
                let csvs = files.iter().filter(|f| f.extension().is_some_and(|e| e == "csv")).count();
                ok = finite && rec.checks.max_mass_drift <= 1e-9 && rec.checks.min_u > 0.0 && rec.checks.min_v > 0.0 && differing.is_empty();
                details.push(format!("{} cells, {} steps, {tc4_seconds:.1} s", manifest["mesh"]["cells"], rec.checks.steps));
                details.push(format!("all values finite: {finite}"));
                details.push(format!("mass drift {:.3e} (limit 1e-9)", rec.checks.max_mass_drift));
                details.push(format!("min u {:.4e}, min v {:.4e}", rec.checks.min_u, rec.checks.min_v));
                details.push(format!("rerun with seed {}: {csvs} CSV files, differing {differing:?}", tc4.seed));
            }
            (a, b, _) => {
                details.push(format!("first run: {:?}", a.as_ref().err()));
                details.push(format!("second run: {:?}", b.as_ref().err()));
            }
        }
        v.report("testcase 4 robustness", ok, &details);
    }

    let passed = v.lines.iter().filter(|(p, _)| *p).count();
    println!(
        "{passed}/{} criteria pass ({:.0} s)",
        v.lines.len(),
        total.elapsed().as_secs_f64()
    );
    for (_, name) in v.lines.iter().filter(|(p, _)| !*p) {
        println!("failing: {name}");
    }
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out);
        } else {
            out.push(p);
        }
    }
}
