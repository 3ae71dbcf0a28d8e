//! Closed forms checked against independent numerics from `qpiston-oracle`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qpiston::state::{log_partition_function, partition_function};
use qpiston::thermo::{
    free_energy_difference, internal_energy, jarzynski_check, work_distribution_at,
    TransitionTable,
};
use qpiston::{
    energy_levels, overlap_matrix, pressure, thermal_state, wavefunction, Basis, Frame,
    PureState, QuantumState, SimParams,
};
use qpiston_oracle as oracle;
use std::f64::consts::PI;

#[test]
fn overlap_matrix_matches_quadrature_up_to_forty_levels() {
    let overlap = overlap_matrix(40).unwrap();
    let mut worst: f64 = 0.0;
    for n in 1..=40 {
        for k in 1..=40 {
            let q = oracle::overlap_by_quadrature(n, k);
            worst = worst.max((overlap.get(n, k) - q).abs());
        }
    }
    assert!(worst <= 1e-10, "worst deviation {worst:e}");
}

#[test]
fn overlap_plus_transpose_is_minus_identity() {
    let i = overlap_matrix(40).unwrap();
    let m = i.as_matrix();
    assert_eq!(m + m.transpose(), -DMatrix::<f64>::identity(40, 40));
}

#[test]
fn levels_match_oracle() {
    for length in [0.5, 1.0, 1.7] {
        let e = energy_levels(12, length).unwrap();
        for (i, &v) in e.iter().enumerate() {
            let o = oracle::box_level(i + 1, length);
            assert!((v - o).abs() <= 1e-12 * o);
        }
    }
}

#[test]
fn thermal_populations_match_boltzmann_sums() {
    let basis = Basis::new(20, 1.0).unwrap();
    for (beta, length) in [(0.1, 1.0), (0.1, 1.2), (1.0, 0.8), (0.01, 1.0)] {
        let thermal = thermal_state(beta, length, &basis).unwrap();
        let expected = oracle::boltzmann_populations(beta, length, 20);
        for (p, q) in thermal.state.populations().iter().zip(&expected) {
            assert!((p - q).abs() <= 1e-13, "beta={beta} L={length}");
        }
        let z = oracle::partition_sum(beta, length, 20);
        assert!((partition_function(beta, length, &basis).unwrap() - z).abs() <= 1e-12 * z);
        assert!((log_partition_function(beta, length, &basis).unwrap() - z.ln()).abs() <= 1e-12);
    }
}

#[test]
fn free_energy_difference_pinned_by_direct_sums() {
    let basis = Basis::new(20, 1.0).unwrap();
    let z0 = oracle::partition_sum(0.1, 1.0, 20);
    let zt = oracle::partition_sum(0.1, 1.2, 20);
    let expected = -(zt / z0).ln() / 0.1;
    let got = free_energy_difference(0.1, 1.2, 1.0, &basis).unwrap();
    assert!((got - expected).abs() <= 1e-11, "{got} vs {expected}");
    // Truncated sums evaluated separately in double precision.
    assert!((got - (-2.861_621_646_494_595)).abs() < 1e-12, "{got}");
}

fn random_state(size: usize, seed: u64) -> PureState {
    // Small deterministic LCG; the draw quality is irrelevant here.
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let amps = DVector::from_fn(size, |i, _| {
        Complex64::new(next(), next()) / (1.0 + i as f64)
    });
    PureState::normalized(amps).unwrap()
}

#[test]
fn pressure_matches_kinetic_energy_by_quadrature() {
    // <p^2> = ∫ |ψ'(x)|² dx on [0, L], with ψ'(x) evaluated from the series.
    let params = SimParams {
        truncation: 6,
        ..SimParams::default()
    };
    for (seed, length) in [(1u64, 1.0), (7, 0.7), (11, 1.6)] {
        let state = random_state(6, seed);
        let c = state.amplitudes().clone();
        let dpsi = |x: f64| -> Complex64 {
            let z = x / length;
            let mut v = Complex64::new(0.0, 0.0);
            for (i, a) in c.iter().enumerate() {
                let k = (i + 1) as f64 * PI;
                v += a * (2f64.sqrt() * k * (k * z).cos() / length);
            }
            v / length.sqrt()
        };
        let p2 = oracle::integrate(|x| dpsi(x).norm_sqr(), 0.0, length, 1e-13);
        let expected = p2 / (1.0 * length * params.section);
        let got = pressure(&QuantumState::Pure(state), length, &params).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
    }
}

#[test]
fn physical_wavefunction_is_normalised_by_simpson() {
    let state = random_state(8, 3);
    let length = 1.4;
    let norm = oracle::simpson(
        |x| wavefunction(&state, length, &[x], Frame::Physical).unwrap()[0].norm_sqr(),
        0.0,
        length,
        2000,
    );
    assert!((norm - 1.0).abs() < 1e-10);
}

#[test]
fn thermal_energy_is_boltzmann_average() {
    let basis = Basis::new(20, 1.0).unwrap();
    let state: QuantumState = thermal_state(0.1, 1.0, &basis).unwrap().state.into();
    let p = oracle::boltzmann_populations(0.1, 1.0, 20);
    let expected: f64 = p
        .iter()
        .enumerate()
        .map(|(i, w)| w * oracle::box_level(i + 1, 1.0))
        .sum();
    let got = internal_energy(&state, &basis, 1.0).unwrap();
    assert!((got - expected).abs() <= 1e-12 * expected);
}

#[test]
fn two_level_sudden_quench_work_statistics() {
    // State frozen while L jumps 1 -> 2: p(m|n) = δ_mn in the dilated basis.
    let basis = Basis::new(2, 1.0).unwrap();
    let table = TransitionTable::from_matrices(
        vec![0.0, 1e-9],
        vec![1.0, 2.0],
        &[DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
    )
    .unwrap();
    let beta = 0.1;
    let dist = work_distribution_at(&table, 1, beta, &basis).unwrap();
    dist.validate().unwrap();
    let mut nonzero: Vec<_> = dist.outcomes.iter().filter(|o| o.probability > 0.0).collect();
    nonzero.sort_by_key(|o| o.initial);
    assert_eq!(nonzero.len(), 2);
    let pops = oracle::boltzmann_populations(beta, 1.0, 2);
    for o in nonzero {
        assert_eq!(o.initial, o.final_level);
        let e1 = oracle::box_level(o.initial, 1.0);
        assert!((o.work - (-0.75 * e1)).abs() <= 1e-12 * e1);
        assert!((o.probability - pops[o.initial - 1]).abs() <= 1e-14);
    }
    // Jarzynski is exact for a sudden quench with the same truncation.
    let df = free_energy_difference(beta, 2.0, 1.0, &basis).unwrap();
    let j = jarzynski_check(&dist, beta, df);
    assert!(j.difference.abs() <= 1e-14, "{j:?}");
}

#[test]
fn physical_overlap_matches_simpson_on_the_common_interval() {
    use qpiston::physical_overlap;
    let a = random_state(7, 5);
    let b = random_state(9, 8);
    for (la, lb) in [(1.0, 1.0), (1.0, 1.5), (0.6, 1.0), (1.3, 1.3 + 1e-9)] {
        let common = f64::min(la, lb);
        let f = |x: f64| {
            let pa = wavefunction(&a, la, &[x], Frame::Physical).unwrap()[0];
            let pb = wavefunction(&b, lb, &[x], Frame::Physical).unwrap()[0];
            pa.conj() * pb
        };
        let re = oracle::simpson(|x| f(x).re, 0.0, common, 4000);
        let im = oracle::simpson(|x| f(x).im, 0.0, common, 4000);
        let got = physical_overlap(&a, la, &b, lb).unwrap();
        assert!((got - Complex64::new(re, im)).norm() <= 1e-9, "{la} {lb}: {got} vs {re} {im}");
    }
    let g = PureState::ground(5);
    assert!((physical_overlap(&g, 1.0, &g, 1.0).unwrap().re - 1.0).abs() <= 1e-14);
}
