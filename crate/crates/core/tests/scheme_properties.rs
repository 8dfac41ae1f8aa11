use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use kslocal_core::diagnostics::{
    mean, mean_v_closed_form, mean_w_closed_form, monitor_states, projection_counterexample, MonitorConfig,
};
use kslocal_core::linsolve::{smallest_nonzero_eigenvalue, MeshPattern};
use kslocal_core::mesh::{disk_mesh, DiscreteField, DiskMeshSpec, Mesh};
use kslocal_core::scheme::{
    assemble_mu, assemble_mv, stationary_v_init, Motility, Schedule, SchemeParams, State, Stepper,
};

fn params(eps: f64, delta: f64, beta: f64, dt: f64, steps: usize) -> SchemeParams {
    SchemeParams::new(eps, delta, beta, Motility::Exponential, Schedule::constant(dt, steps).unwrap())
}

/// Runs `dts` from `(u0, v0)` and returns all states.
fn trajectory(mesh: &Mesh, p: &SchemeParams, u0: Vec<f64>, v0: Vec<f64>, dts: &[f64]) -> Vec<State> {
    let mut stepper = Stepper::new(mesh, p.clone()).unwrap();
    let mut states = vec![State::initial(
        mesh,
        p,
        DiscreteField::new(mesh, u0).unwrap(),
        Some(DiscreteField::new(mesh, v0).unwrap()),
    )
    .unwrap()];
    for &dt in dts {
        let next = stepper.step(states.last().unwrap(), dt).unwrap();
        states.push(next);
    }
    states
}

/// Largest `|sum - expected|` relative to the diagonal entry, the largest
/// term of the sum.
fn relative_row_sum_error(sums: &[f64], expected: &[f64], diagonal: &[f64]) -> f64 {
    sums.iter()
        .zip(expected)
        .zip(diagonal)
        .map(|((s, e), d)| (s - e).abs() / d.abs())
        .fold(0.0, f64::max)
}

#[test]
fn eigenvalue_of_uniform_grids() {
    for n in [4usize, 10, 37, 100] {
        let mesh = Mesh::uniform_1d(0.0, 1.0, n).unwrap();
        let expected = 4.0 * (n * n) as f64 * (std::f64::consts::PI / (2.0 * n as f64)).sin().powi(2);
        let got = smallest_nonzero_eigenvalue(&mesh, 1e-12).unwrap();
        assert!((got - expected).abs() <= 1e-8 * expected, "{n}: {got} vs {expected}");
    }
}

#[test]
fn eigenvalue_of_a_disk_mesh_is_near_the_bessel_value() {
    let mesh = disk_mesh(&DiskMeshSpec {
        n_boundary: 96,
        ..DiskMeshSpec::default()
    })
    .unwrap();
    let lambda = smallest_nonzero_eigenvalue(&mesh, 1e-10).unwrap();
    let bessel = 1.841_183_781_340_659f64.powi(2);
    assert!((lambda - bessel).abs() < 0.02 * bessel, "{lambda}");
}

#[test]
fn stationary_initialisation_matches_a_dense_solve() {
    let mesh = Mesh::uniform_1d(0.0, 1.0, 7).unwrap();
    let p = params(0.0, 0.3, 2.0, 0.1, 1);
    let u0: Vec<f64> = (0..7).map(|k| 1.0 + (k as f64).sin()).collect();
    let v = stationary_v_init(&mesh, &p, &DiscreteField::new(&mesh, u0.clone()).unwrap()).unwrap();
    let n = 7;
    let m = mesh.volumes();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = p.beta * m[k];
    }
    for (_, k, l, tau) in mesh.interior_edges() {
        a[(k, k)] += p.delta * tau;
        a[(l, l)] += p.delta * tau;
        a[(k, l)] -= p.delta * tau;
        a[(l, k)] -= p.delta * tau;
    }
    let b = DVector::from_iterator(n, (0..n).map(|k| m[k] * u0[k]));
    let expected = a.lu().solve(&b).unwrap();
    for k in 0..n {
        assert!((v.values()[k] - expected[k]).abs() < 1e-11);
    }
    assert!((p.beta * mean(&mesh, v.values()) - mean(&mesh, &u0)).abs() < 1e-12);
}

#[test]
fn mean_of_v_follows_the_product_formula_for_variable_steps() {
    let mesh = Mesh::uniform_1d(0.0, 2.0, 9).unwrap();
    let p = params(0.7, 0.2, 1.3, 0.1, 1);
    let u0: Vec<f64> = (0..9).map(|k| 0.5 + 0.1 * k as f64).collect();
    let v0: Vec<f64> = (0..9).map(|k| 2.0 - 0.15 * k as f64).collect();
    let dts = [0.01, 0.3, 0.3, 1.0, 0.05, 0.7];
    let states = trajectory(&mesh, &p, u0.clone(), v0.clone(), &dts);
    let (mu0, mv0) = (mean(&mesh, &u0), mean(&mesh, &v0));
    for n in 0..states.len() {
        let closed = mean_v_closed_form(p.eps, p.beta, mu0, mv0, &dts[..n]);
        assert!((mean(&mesh, states[n].v.values()) - closed).abs() < 1e-12);
        if n + 1 < states.len() {
            let w = (mean(&mesh, states[n + 1].v.values()) - mean(&mesh, states[n].v.values())) / dts[n];
            assert!((w - mean_w_closed_form(p.eps, p.beta, mu0, closed, dts[n])).abs() < 1e-10);
        }
    }
}

#[test]
fn counterexample_ratio_grows_with_m() {
    let mut previous = None;
    for m in [4usize, 16, 64] {
        let report = projection_counterexample(m, 2 * m * m).unwrap();
        assert!(report.dual_norm >= report.lower_bound);
        if let Some(prev) = previous {
            assert!(report.ratio() >= 1.9 * prev);
        }
        previous = Some(report.ratio());
    }
}

fn positive_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..5.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assembled_matrices_have_the_expected_sums(
        n in 2usize..30,
        dt in 1e-4f64..1.0,
        eps in prop::sample::select(vec![0.0, 1e-3, 1.0]),
        delta in 1e-3f64..2.0,
        beta in 0.05f64..5.0,
        seed_v in prop::collection::vec(-3.0f64..3.0, 30),
    ) {
        let mesh = Mesh::uniform_1d(0.0, 1.7, n).unwrap();
        let p = params(eps, delta, beta, dt, 1);
        let pattern = MeshPattern::new(&mesh);
        let mv = assemble_mv(&pattern, &mesh, &p, dt);
        let expected: Vec<f64> = mesh.volumes().iter().map(|m| m * (eps + dt * beta)).collect();
        prop_assert!(relative_row_sum_error(mv.row_sums(), &expected, &mv.diagonal()) <= 1e-13);
        prop_assert!(mv.sign_summary().is_z_matrix_with_positive_diagonal());
        let v = DiscreteField::new(&mesh, seed_v[..n].to_vec()).unwrap();
        let mu = assemble_mu(&pattern, &mesh, &p, dt, &v).unwrap();
        prop_assert!(relative_row_sum_error(&mu.column_sums(), mesh.volumes(), &mu.diagonal()) <= 1e-13);
        prop_assert!(mu.sign_summary().is_z_matrix_with_positive_diagonal());
    }

    #[test]
    fn random_runs_keep_the_structure(
        n in 2usize..24,
        u0 in positive_field(24),
        v0 in positive_field(24),
        dts in prop::collection::vec(1e-4f64..1.0, 1..12),
        eps in prop::sample::select(vec![0.0, 1e-3, 1.0]),
        delta in 1e-2f64..1.0,
        beta in 0.1f64..3.0,
    ) {
        let mesh = Mesh::uniform_1d(0.0, 1.0, n).unwrap();
        let p = params(eps, delta, beta, 0.1, 1);
        let states = trajectory(&mesh, &p, u0[..n].to_vec(), v0[..n].to_vec(), &dts);
        let (_, checks) = monitor_states(&mesh, &p, MonitorConfig::default(), &states).unwrap();
        prop_assert_eq!(checks.entropy_violations, 0);
        prop_assert_eq!(checks.duality_violations, 0);
        prop_assert!(checks.max_mass_drift <= 1e-9);
        prop_assert!(checks.max_mean_v_error <= 1e-9);
        prop_assert!(checks.min_u > 0.0 && checks.min_v > 0.0);
    }
}

#[test]
fn homogeneous_state_stays_put_under_algebraic_motility() {
    let mesh = disk_mesh(&DiskMeshSpec {
        n_boundary: 24,
        ..DiskMeshSpec::default()
    })
    .unwrap();
    let p = SchemeParams::new(
        1.0,
        0.5,
        2.0,
        Motility::Algebraic { c: 1.0, k: 2.0 },
        Schedule::constant(0.5, 4).unwrap(),
    );
    let n = mesh.n_cells();
    let states = trajectory(&mesh, &p, vec![3.0; n], vec![1.5; n], &[0.5; 4]);
    for s in &states {
        for (u, v) in s.u.values().iter().zip(s.v.values()) {
            assert!((u - 3.0).abs() < 1e-12 && (v - 1.5).abs() < 1e-12);
        }
    }
}
