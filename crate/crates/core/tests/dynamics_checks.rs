use num_complex::Complex64;
use qpiston::dynamics::{state_distance, RunOptions};
use qpiston::{
    pressure, simulate, simulate_with, thermal_state, MixedState, Mode, PureState, QuantumState,
    SimParams, WallState,
};
use qpiston_oracle as oracle;
use std::f64::consts::PI;

fn compression_params(k: usize, total_time: f64, dt: f64) -> (SimParams, QuantumState) {
    let ground: QuantumState = PureState::ground(k).into();
    let mut params = SimParams {
        truncation: k,
        total_time,
        dt,
        ..SimParams::default()
    };
    params.external_pressure = 1.1 * pressure(&ground, 1.0, &params).unwrap();
    (params, ground)
}

fn final_point(params: &SimParams, initial: &QuantumState) -> (QuantumState, WallState) {
    let tr = simulate(params, Mode::SelfConsistent, initial).unwrap();
    (tr.final_state, tr.final_wall)
}

#[test]
fn halving_the_step_shrinks_the_error_sixteenfold() {
    let dts = [2e-3, 1e-3, 5e-4];
    let runs: Vec<_> = dts
        .iter()
        .map(|&dt| {
            let (p, g) = compression_params(8, 0.4, dt);
            final_point(&p, &g)
        })
        .collect();
    let e1 = state_distance(&runs[0], &runs[1]);
    let e2 = state_distance(&runs[1], &runs[2]);
    let ratio = e1 / e2;
    assert!((12.0..=20.0).contains(&ratio), "error ratio {ratio} ({e1:e} / {e2:e})");
}

#[test]
fn replay_reproduces_the_self_consistent_run() {
    let (params, ground) = compression_params(20, 0.5, 1e-4);
    let base = simulate(&params, Mode::SelfConsistent, &ground).unwrap();
    let replay = simulate(&params, Mode::Replay(&base), &ground).unwrap();
    let (QuantumState::Pure(a), QuantumState::Pure(b)) = (&base.final_state, &replay.final_state)
    else {
        panic!("pure runs expected");
    };
    let worst = (a.amplitudes() - b.amplitudes()).camax();
    assert!(worst <= 1e-6, "amplitude mismatch {worst:e}");
    for (x, y) in base.samples.iter().zip(&replay.samples) {
        assert_eq!(x.length, y.length);
    }
}

#[test]
fn density_matrix_tracks_the_pure_run() {
    let (params, ground) = compression_params(10, 0.3, 1e-4);
    let pure = simulate(&params, Mode::SelfConsistent, &ground).unwrap();
    let mixed = simulate(&params, Mode::SelfConsistent, &QuantumState::Mixed(ground.to_mixed())).unwrap();
    let QuantumState::Pure(c) = &pure.final_state else {
        panic!()
    };
    let rho = MixedState::from_pure(c);
    let QuantumState::Mixed(r) = &mixed.final_state else {
        panic!()
    };
    assert!((rho.matrix() - r.matrix()).camax() <= 1e-10);
    assert!((pure.final_wall.length - mixed.final_wall.length).abs() <= 1e-12);
}

/// Dilated-frame amplitudes of the exact moving-box solution
/// `ψ = √(2/L) sin(nπx/L) exp(i[m V x²/(2ħL) − n²π²ħ t/(2m L0 L)])` (L0 = 1).
fn chirped_eigenstate(n: usize, k: usize, velocity: f64, t: f64) -> Vec<Complex64> {
    let length = 1.0 + velocity * t;
    let nf = n as f64;
    let phase = |z: f64| velocity * length * z * z / 2.0 - nf * nf * PI * PI * t / (2.0 * length);
    (1..=k)
        .map(|j| {
            let jf = j as f64;
            let basis = |z: f64| 2.0 * (jf * PI * z).sin() * (nf * PI * z).sin();
            let re = oracle::integrate(|z| basis(z) * phase(z).cos(), 0.0, 1.0, 1e-13);
            let im = oracle::integrate(|z| basis(z) * phase(z).sin(), 0.0, 1.0, 1e-13);
            Complex64::new(re, im)
        })
        .collect()
}

#[test]
fn constant_velocity_matches_exact_moving_box_solution() {
    let k = 40;
    for velocity in [0.5, -0.5] {
        let t = 0.5;
        // The exact solution starts from the chirped state, not from |1>.
        let start = PureState::normalized(nalgebra::DVector::from_vec(chirped_eigenstate(1, k, velocity, 0.0))).unwrap();
        let params = SimParams {
            truncation: k,
            total_time: t,
            dt: 2e-5,
            ..SimParams::default()
        };
        let tr = simulate(&params, Mode::ConstantVelocity(velocity), &start.into()).unwrap();
        let QuantumState::Pure(c) = &tr.final_state else {
            panic!()
        };
        let exact = chirped_eigenstate(1, k, velocity, t);
        let worst = c
            .amplitudes()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "V={velocity}: worst amplitude error {worst:e}");
    }
}

#[test]
fn slow_expansion_follows_the_instantaneous_ground_state() {
    let params = SimParams {
        truncation: 20,
        total_time: 5.0,
        dt: 1e-4,
        ..SimParams::default()
    };
    let ground: QuantumState = PureState::ground(20).into();
    let tr = simulate(&params, Mode::ConstantVelocity(0.1), &ground).unwrap();
    let p1 = tr.samples.iter().map(|s| s.populations[0]).fold(1.0, f64::min);
    assert!(p1 >= 0.999, "{p1}");
    assert!((tr.last().length - 1.5).abs() < 1e-12);
}

#[test]
fn thermal_run_conserves_trace_and_purity() {
    let mut params = SimParams {
        truncation: 20,
        total_time: 0.5,
        ..SimParams::default()
    };
    let basis = params.basis().unwrap();
    let th: QuantumState = thermal_state(0.1, 1.0, &basis).unwrap().state.into();
    params.external_pressure = 0.9 * pressure(&th, 1.0, &params).unwrap();
    let purity0 = th.purity();
    let tr = simulate_with(&params, Mode::SelfConsistent, &th, RunOptions::default(), |_, _| {})
        .unwrap();
    assert!((tr.final_state.norm() - 1.0).abs() <= 1e-8);
    assert!(tr.samples.iter().all(|s| (s.purity - purity0).abs() <= 1e-8));
}

#[test]
fn identical_inputs_give_identical_runs() {
    let (params, ground) = compression_params(12, 0.2, 1e-4);
    let a = simulate(&params, Mode::SelfConsistent, &ground).unwrap();
    let b = simulate(&params, Mode::SelfConsistent, &ground).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.length.to_bits(), y.length.to_bits());
        assert_eq!(x.velocity.to_bits(), y.velocity.to_bits());
        assert_eq!(x.energy.to_bits(), y.energy.to_bits());
    }
}
