use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use qpiston::dynamics::amplitude_derivatives;
use qpiston::thermo::{entropy_production, friction_work};
use qpiston::{
    dephase, hermitian_residual, select_time_step, simulate, thermal_state, Basis, FrictionMode, MixedState, Mode,
    PureState, QuantumState, SimParams,
};

fn amplitudes(size: usize) -> impl Strategy<Value = DVector<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), size).prop_filter_map(
        "non-zero vector",
        move |v| {
            let c = DVector::from_iterator(size, v.into_iter().map(|(r, i)| Complex64::new(r, i)));
            (c.norm() > 1e-3).then(|| c.unscale(c.norm()))
        },
    )
}

fn density(size: usize) -> impl Strategy<Value = MixedState> {
    // Convex mixture of three random pure states.
    (amplitudes(size), amplitudes(size), amplitudes(size), 0.0f64..1.0, 0.0f64..1.0).prop_map(
        move |(a, b, c, x, y)| {
            let weights = [x, (1.0 - x) * y, (1.0 - x) * (1.0 - y)];
            let mut rho = DMatrix::<Complex64>::zeros(size, size);
            for (v, w) in [a, b, c].iter().zip(weights) {
                rho += v * v.adjoint() * Complex64::new(w, 0.0);
            }
            MixedState::new(rho).unwrap()
        },
    )
}

const DIM: usize = 6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_hamiltonian_is_hermitian(length in 0.1f64..5.0, velocity in -50.0f64..50.0, k in 2usize..25) {
        let basis = Basis::new(k, 1.0).unwrap();
        let h = basis.effective_hamiltonian(length, velocity).unwrap();
        prop_assert!(hermitian_residual(&h) <= 1e-12 * (1.0 + h.norm()));
    }

    #[test]
    fn amplitude_flow_preserves_norm(c in amplitudes(10), length in 0.2f64..3.0, velocity in -5.0f64..5.0) {
        let basis = Basis::new(10, 1.0).unwrap();
        let state = PureState::new(c.clone()).unwrap();
        let dc = amplitude_derivatives(&state, length, velocity, basis.overlap()).unwrap();
        let inner = c.dotc(&dc).re;
        prop_assert!(inner.abs() <= 1e-10 * (1.0 + dc.norm()), "Re<c, dc> = {inner:e}");
    }

    #[test]
    fn levels_scale_as_inverse_square_length(n in 1usize..30, length in 0.05f64..10.0) {
        let basis = Basis::new(30, 1.0).unwrap();
        let e1 = basis.energy(n, 1.0);
        let el = basis.energy(n, length);
        prop_assert!((el * length * length - e1).abs() <= 1e-12 * e1);
    }

    #[test]
    fn dephasing_keeps_trace_hermiticity_and_never_raises_purity(
        rho in density(DIM), length in 0.5f64..2.0, velocity in -3.0f64..3.0, gdt in 0.0f64..5.0,
    ) {
        let basis = Basis::new(DIM, 1.0).unwrap();
        let h = basis.effective_hamiltonian(length, velocity).unwrap();
        let out = dephase(&rho, &h, 1.0, gdt).unwrap();
        prop_assert!((out.trace() - 1.0).abs() <= 1e-12);
        prop_assert!(hermitian_residual(out.matrix()) <= 1e-14);
        prop_assert!(out.purity() <= rho.purity() + 1e-12);
        prop_assert!(out.check_positive().is_ok());
    }

    #[test]
    fn relative_entropy_is_non_negative(rho in density(DIM), beta in 0.01f64..2.0, length in 0.5f64..2.0) {
        let basis = Basis::new(DIM, 1.0).unwrap();
        let s = entropy_production(&QuantumState::Mixed(rho), beta, &basis, length).unwrap();
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn thermal_state_has_zero_entropy_production(beta in 0.01f64..2.0, length in 0.5f64..2.0) {
        let basis = Basis::new(12, 1.0).unwrap();
        let th: QuantumState = thermal_state(beta, length, &basis).unwrap().state.into();
        let s = entropy_production(&th, beta, &basis, length).unwrap();
        prop_assert!(s.abs() <= 1e-10, "{s:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_runs_at_selected_step_conserve_norm_and_keep_friction_work_monotone(
        c in amplitudes(8), ratio in 0.8f64..1.2, mode in 0usize..3,
    ) {
        let friction_mode = [FrictionMode::None, FrictionMode::Symmetric, FrictionMode::ExpansionOnly][mode];
        let state: QuantumState = PureState::new(c).unwrap().into();
        let mut params = SimParams {
            truncation: 8,
            total_time: 0.2,
            friction_mode,
            ..SimParams::default()
        };
        params.external_pressure = ratio * qpiston::pressure(&state, 1.0, &params).unwrap();
        params.dt = select_time_step(&params, &state).unwrap();
        let tr = simulate(&params, Mode::SelfConsistent, &state).unwrap();
        prop_assert!((tr.final_state.norm() - 1.0).abs() <= 1e-8);
        let w = friction_work(&tr, &params);
        prop_assert!(w.windows(2).all(|p| p[1] >= p[0]));
        prop_assert!(tr.samples.iter().all(|s| s.length > 0.0));
    }
}
