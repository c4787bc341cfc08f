mod common;

use common::*;
use wentzell_core::analysis::*;
use wentzell_core::evolution::*;
use wentzell_core::io::{read_snapshot, write_snapshot};
use wentzell_core::stationary::*;
use wentzell_core::*;

#[test]
fn saved_equilibrium_restarts_in_at_most_two_newton_steps() {
    let m = model(8.0, 4.0, 16, 17);
    let (_, sol) = find_equilibrium(
        &m,
        &PairField::zeros(m.grid()),
        MinimizeOptions::default(),
        NewtonOptions { tol: 1e-10, ..Default::default() },
    )
    .unwrap();
    assert!(sol.converged);
    let mut buf = Vec::new();
    write_snapshot(&mut buf, m.grid(), &sol.psi).unwrap();
    let (_, psi) = read_snapshot(buf.as_slice()).unwrap();
    let again = newton_refine(&m, &psi, NewtonOptions { tol: 1e-10, ..Default::default() }).unwrap();
    assert!(again.converged);
    assert!(again.newton_iters <= 2, "{} iterations", again.newton_iters);
}

#[test]
fn constant_zero_trajectory_stays_put() {
    let m = model(1.0, 1.0, 8, 8);
    let z = PairField::zeros(m.grid());
    let traj = evolve(
        &m,
        &z,
        StepperConfig::default(),
        EvolveConfig { t_end: 0.05, series_stride: 1, snapshot_stride: 5 },
        None,
    )
    .unwrap();
    for r in &traj.energy_reports {
        assert!((r.e_total - 0.25).abs() < 1e-15);
    }
    let rep = ls_probe(&m, &traj, &z, &LsProbeOptions::default()).unwrap();
    assert!(rep.insufficient);
    assert!(rep.fitted_theta.is_none());
}

#[test]
fn newton_scheme_dissipates_and_matches_semi_implicit_in_the_limit() {
    let m = model(1.0, 1.0, 12, 12);
    let u0 = PairField::from_fn(m.grid(), |x, y| 0.3 * (6.283 * x).cos() * y);
    let run = |scheme, dt| {
        evolve(
            &m,
            &u0,
            StepperConfig { scheme, dt, ..Default::default() },
            EvolveConfig { t_end: 0.1, series_stride: 1, snapshot_stride: 0 },
            None,
        )
        .unwrap()
    };
    let a = run(Scheme::NewtonImplicit, 1e-3);
    let b = run(Scheme::StabilizedSemiImplicit, 1e-3);
    assert!(a.max_energy_increase <= ENERGY_GUARD_TOL);
    let e = a.energies();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    // both are first-order approximations of the same flow
    let diff = a.final_state.sub(&b.final_state).max_abs();
    assert!(diff < 1e-2, "schemes differ by {diff}");
}

#[test]
fn trajectory_limit_is_reported_with_its_distance() {
    let m = model(1.0, 1.0, 8, 8);
    let u0 = PairField::from_fn(m.grid(), |x, _| 0.05 * (6.283 * x).cos());
    let traj = evolve(
        &m,
        &u0,
        StepperConfig { dt: 1e-2, ..Default::default() },
        EvolveConfig { t_end: 60.0, series_stride: 100, snapshot_stride: 0 },
        None,
    )
    .unwrap();
    let sol = omega_limit(&m, &traj.final_state, NewtonOptions::default()).unwrap();
    assert_eq!(sol.method, Method::TrajectoryLimit);
    assert!(sol.distance_x.unwrap() < 1e-4);
    // a state far from equilibrium is refused with advice
    let far = PairField::from_fn(m.grid(), |x, _| (6.283 * x).cos());
    match omega_limit(&m, &far, NewtonOptions::default()) {
        Err(Error::Precondition(msg)) => assert!(msg.contains("run longer")),
        other => panic!("expected a precondition error, got {other:?}"),
    }
}
