use nalgebra::{Matrix2, Vector2};

use giant_cavity_filter::covariance::Integrator;
use giant_cavity_filter::model::{build_model, markovian_limit, reference_params, Coefficients};
use giant_cavity_filter::oracle::{
    augmented_kalman, build_augmented, build_augmented_with_depth, care_residual, riccati_markov,
};
use giant_cavity_filter::sim::{draw_noise, simulate, simulate_with_noise, Prehistory, SimConfig};
use giant_cavity_filter::StateSpaceModel;

fn reference() -> StateSpaceModel {
    build_model(&reference_params()).unwrap()
}

#[test]
fn stacked_simulation_reproduces_direct_recursion() {
    let m = reference();
    let h = m.delay() / 20.0;
    for prehistory in [Prehistory::Zero, Prehistory::HoldInitial] {
        let mut cfg = SimConfig::new(1e-7, h, 21, Vector2::new(-4.0, 4.0));
        cfg.prehistory = prehistory;
        let direct = simulate(&m, &cfg).unwrap();
        let am = build_augmented_with_depth(&m, h, 2).unwrap();
        let (states, measurements) = am.simulate(cfg.x0, prehistory, direct.noise()).unwrap();
        assert_eq!(states.len(), direct.states().len());
        for (a, b) in states.iter().zip(direct.states()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{a} vs {b}");
        }
        for (a, b) in measurements.iter().zip(direct.measurements()) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
    }
}

#[test]
fn three_step_hand_run_on_zero_delay_model() {
    let m = markovian_limit(&reference());
    let h = 1.5e-10;
    let grid = giant_cavity_filter::TimeGrid::from_counts(h, 0, 3).unwrap();
    let noise = draw_noise(&grid, 8, 1.0);
    let x0 = Vector2::new(1.0, -2.0);
    let y = simulate_with_noise(&m, &grid, x0, Prehistory::Zero, noise)
        .unwrap()
        .measurements()
        .to_vec();

    let xhat0 = Vector2::new(0.5, 0.5);
    let p0 = Matrix2::new(2.0, 0.3, 0.3, 1.0);
    let out = augmented_kalman(
        &build_augmented(&m, h).unwrap(),
        &y,
        xhat0,
        &p0,
        Prehistory::Zero,
    )
    .unwrap();

    let c = m.coefficients();
    let f = Matrix2::identity() + c.a * h;
    let g = c.b;
    let hm = c.c * h;
    let d = c.d_d;
    let mut x = xhat0;
    let mut p = p0;
    for (k, dy) in y.iter().enumerate() {
        let s = hm * p * hm.transpose() + d * d.transpose() * h;
        let cross = f * p * hm.transpose() + g * d.transpose() * h;
        let gain = cross * s.try_inverse().unwrap();
        x = f * x + gain * (dy - hm * x);
        p = f * p * f.transpose() + g * g.transpose() * h - gain * s * gain.transpose();
        println!("step {k}: x = {:?}, P = {:?}", x.as_slice(), p.as_slice());
        assert!((out.estimates[k + 1] - x).norm() <= 1e-12 * x.norm());
        assert!((out.covariance[k + 1] - p).norm() <= 1e-12 * p.norm());
    }
}

#[test]
fn exact_start_without_noise_tracks_exactly() {
    let m = reference();
    let h = m.delay() / 10.0;
    let x0 = Vector2::new(-4.0, 4.0);
    let mut cfg = SimConfig::new(1e-7, h, 0, x0);
    cfg.noise_variance_scale = 0.0;
    let traj = simulate(&m, &cfg).unwrap();
    let am = build_augmented(&m, h).unwrap();
    let out = augmented_kalman(
        &am,
        traj.measurements(),
        x0,
        &Matrix2::identity(),
        Prehistory::Zero,
    )
    .unwrap();
    for (a, b) in out.estimates.iter().zip(traj.states()) {
        assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
    }
}

#[test]
fn oracle_cross_covariance_available_at_delay() {
    let m = reference();
    let h = m.delay() / 10.0;
    let traj = simulate(&m, &SimConfig::new(3.0 * m.delay(), h, 4, Vector2::zeros())).unwrap();
    let am = build_augmented_with_depth(&m, h, 2).unwrap();
    let out = augmented_kalman(
        &am,
        traj.measurements(),
        Vector2::zeros(),
        &Matrix2::identity(),
        Prehistory::Zero,
    )
    .unwrap();
    assert_eq!(out.cross.len(), 2);
    let n = am.delay_steps();
    // zero prehistory: x_{-N} is known exactly, so nothing correlates with it
    assert_eq!(out.cross[0][0], Matrix2::zeros());
    assert!(out.cross[0][n].norm() > 0.0);
    assert!(out.cross[1][2 * n].norm() > 0.0);
}

#[test]
fn stationary_riccati_solves_algebraic_equation() {
    let m = markovian_limit(&reference());
    let h = 1.5e-10;
    let ric = riccati_markov(&m, &Matrix2::identity(), 5000.0 * h, h, Integrator::Rk4).unwrap();
    let p = ric.covariance.last().unwrap();
    let residual = care_residual(&m, p).unwrap();
    assert!(residual.norm() < 1e-6, "residual {residual}");
}

#[test]
fn lyapunov_limit_decays_monotonically() {
    let base = *markovian_limit(&reference()).coefficients();
    let zero = Matrix2::zeros();
    let m = StateSpaceModel::new(
        Coefficients {
            b: zero,
            b_d: zero,
            c: zero,
            c_d: zero,
            ..base
        },
        0.0,
    )
    .unwrap();
    let ric = riccati_markov(
        &m,
        &Matrix2::new(2.0, 0.5, 0.5, 1.0),
        1e-8,
        1e-11,
        Integrator::Euler,
    )
    .unwrap();
    let traces: Vec<f64> = ric.covariance.iter().map(|p| p.trace()).collect();
    assert!(traces.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn riccati_requires_zero_delay() {
    assert!(riccati_markov(
        &reference(),
        &Matrix2::identity(),
        1e-8,
        1e-10,
        Integrator::Euler
    )
    .is_err());
}
