//! Thermodynamic bookkeeping along a run.
//!
//! Equilibrium references (`ρ_eq`, `Z`, the levels `E_m(t)` and the fidelity
//! target) use the physical box Hamiltonian `Ĥ(t) = p̂²/(2mL²)`, which is
//! diagonal in the fixed basis. `H*` only appears in [`hstar_basis_observables`]
//! and in the optional [`FidelityTarget::Effective`].
//!
//! Work follows the two-point-measurement convention `w = E_m(t) - E_n(0)`,
//! i.e. positive when work is done on the particle.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{check_length, Basis, HBAR};
use crate::dynamics::{simulate_with, Mode, RunOptions, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, hermitian_eigen};
use crate::state::{
    log_partition_function, MixedState, PureState, QuantumState, SimParams, POSITIVITY_FLOOR,
};

/// Eigenvalues of ρ below this contribute nothing to `tr ρ log ρ`.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;
/// Largest phase `E_n dt / ħ` per replay step of the level a replay starts
/// in. RK4 loses about `z⁶/72` of the norm per step at phase `z`.
pub const REPLAY_MAX_PHASE: f64 = 0.15;
/// Largest phase per replay step of the top level, inside the RK4 stability
/// interval `|z| < 2.8`.
pub const REPLAY_MAX_TOP_PHASE: f64 = 2.0;

pub fn internal_energy(state: &QuantumState, basis: &Basis, length: f64) -> Result<f64> {
    check_length(length)?;
    Ok(state
        .populations()
        .iter()
        .enumerate()
        .map(|(i, p)| p * basis.energy(i + 1, length))
        .sum())
}

/// `S(ρ ‖ e^{-βĤ(L)}/Z)`.
pub fn entropy_production(
    state: &QuantumState,
    beta: f64,
    basis: &Basis,
    length: f64,
) -> Result<f64> {
    let log_z = log_partition_function(beta, length, basis)?;
    let energy = internal_energy(state, basis, length)?;
    // -tr ρ log ρ_eq = β U + ln Z
    let cross = beta * energy + log_z;
    let neg_entropy = match state {
        QuantumState::Pure(_) => 0.0,
        QuantumState::Mixed(m) => {
            let values = m.eigenvalues();
            if let Some(&lowest) = values.first() {
                if lowest < POSITIVITY_FLOOR {
                    return Err(Error::Positivity { eigenvalue: lowest });
                }
            }
            values
                .iter()
                .filter(|&&l| l > EIGENVALUE_FLOOR)
                .map(|&l| l * l.ln())
                .sum()
        }
    };
    let s = neg_entropy + cross;
    // Klein's inequality; anything below zero at this size is rounding.
    Ok(if s < 0.0 && s > -1e-12 { 0.0 } else { s })
}

/// Accumulated `|W_fric(t)| = ∫ γ f(V) V² dt` at every sample, trapezoidal in
/// time. Non-decreasing by construction.
pub fn friction_work(trajectory: &Trajectory, params: &SimParams) -> Vec<f64> {
    let power = |v: f64| params.friction * params.friction_mode.factor(v) * v * v;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(trajectory.samples.len());
    out.push(0.0);
    for w in trajectory.samples.windows(2) {
        let dt = w[1].t - w[0].t;
        acc += 0.5 * dt * (power(w[0].velocity) + power(w[1].velocity));
        out.push(acc);
    }
    out
}

/// `ΔF = -(1/β) ln(Z(L_t)/Z(L_0))` with truncated partition functions.
pub fn free_energy_difference(beta: f64, length_t: f64, length_0: f64, basis: &Basis) -> Result<f64> {
    let log_zt = log_partition_function(beta, length_t, basis)?;
    let log_z0 = log_partition_function(beta, length_0, basis)?;
    Ok(-(log_zt - log_z0) / beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkOutcome {
    /// 1-based initial level.
    pub initial: usize,
    /// 1-based final level.
    pub final_level: usize,
    pub work: f64,
    pub probability: f64,
}

/// Two-point-measurement work statistics at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution {
    pub time: f64,
    pub outcomes: Vec<WorkOutcome>,
}

impl WorkDistribution {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(o) = self.outcomes.iter().find(|o| o.probability < 0.0) {
            return Err(Error::Validation(format!(
                "negative work probability {} for {} -> {}",
                o.probability, o.initial, o.final_level
            )));
        }
        let total = self.total_probability();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!(
                "work probabilities sum to {total}"
            )));
        }
        Ok(())
    }

    /// `w,prob` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w,prob\n");
        for o in &self.outcomes {
            out.push_str(&format!("{:.11e},{:.11e}\n", o.work, o.probability));
        }
        out
    }
}

/// Conditional probabilities `p(m, t | n)` at every sample of a recorded run,
/// obtained by replaying the recorded wall motion from each eigenstate.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub times: Vec<f64>,
    pub lengths: Vec<f64>,
    size: usize,
    // [n][sample * size + m], 0-based
    rows: Vec<Vec<f64>>,
}

impl TransitionTable {
    /// Builds a table from per-sample matrices with entry `(n-1, m-1)` equal
    /// to `p(m, t | n)`.
    pub fn from_matrices(times: Vec<f64>, lengths: Vec<f64>, matrices: &[DMatrix<f64>]) -> Result<Self> {
        let size = matrices.first().map_or(0, |m| m.nrows());
        if times.len() != matrices.len() || lengths.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                found: times.len().min(lengths.len()),
            });
        }
        if let Some(bad) = matrices.iter().find(|m| m.nrows() != size || m.ncols() != size) {
            return Err(Error::DimensionMismatch {
                expected: size,
                found: bad.nrows().max(bad.ncols()),
            });
        }
        let rows = (0..size)
            .map(|n| {
                matrices
                    .iter()
                    .flat_map(|p| (0..size).map(move |m| p[(n, m)]))
                    .collect()
            })
            .collect();
        Ok(Self {
            times,
            lengths,
            size,
            rows,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn samples(&self) -> usize {
        self.times.len()
    }

    /// `p(m, t_sample | n)`, 1-based levels.
    pub fn probability(&self, sample: usize, n: usize, m: usize) -> f64 {
        self.rows[n - 1][sample * self.size + (m - 1)]
    }

    /// Largest `|Σ_m p(m,t|n) - 1|` over all samples and `n`.
    pub fn marginal_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            for chunk in row.chunks(self.size) {
                worst = worst.max((chunk.iter().sum::<f64>() - 1.0).abs());
            }
        }
        worst
    }
}

/// Replays `base` once per basis state (in parallel, merged in level order).
/// Samples line up with those of `base` when `params` shares its `dt`. The
/// replay of level `n` uses `params.dt` halved until, at the shortest
/// recorded length, level `n` turns by at most [`REPLAY_MAX_PHASE`] and the
/// top level by at most [`REPLAY_MAX_TOP_PHASE`] per step.
pub fn transition_probabilities(base: &Trajectory, params: &SimParams) -> Result<TransitionTable> {
    transition_probabilities_every(base, params, 1)
}

/// As [`transition_probabilities`], keeping only every `every`-th sample of
/// `base` in the table.
pub fn transition_probabilities_every(base: &Trajectory, params: &SimParams, every: usize) -> Result<TransitionTable> {
    let size = params.truncation;
    let stride = (base.sample_spacing() / params.dt).round() as usize;
    if every == 0 || stride == 0 || ((stride as f64) * params.dt - base.sample_spacing()).abs() > 1e-9 * params.dt {
        return Err(Error::InvalidConfiguration(format!(
            "replay step {} does not divide the record spacing {}",
            params.dt,
            base.sample_spacing()
        )));
    }
    let basis = Basis::new(size, params.particle_mass)?;
    let l_min = base.min_length();
    let top = basis.energy(size, l_min);
    let rows: Vec<Result<Vec<f64>>> = (1..=size)
        .into_par_iter()
        .map(|n| {
            let own = basis.energy(n, l_min);
            let mut p = params.clone();
            let mut refine = 1;
            while (own * p.dt / HBAR > REPLAY_MAX_PHASE || top * p.dt / HBAR > REPLAY_MAX_TOP_PHASE) && refine < 1 << 12 {
                p.dt *= 0.5;
                refine *= 2;
            }
            let options = RunOptions {
                stride: stride * every * refine,
                keep_states: false,
            };
            let initial: QuantumState = PureState::eigenstate(size, n)?.into();
            let mut row = Vec::new();
            simulate_with(&p, Mode::Replay(base), &initial, options, |s, _| {
                row.extend_from_slice(&s.populations)
            })?;
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(bad) = rows.iter().find(|r| r.len() != rows[0].len()) {
        return Err(Error::DimensionMismatch {
            expected: rows[0].len(),
            found: bad.len(),
        });
    }
    let samples = rows[0].len() / size;
    let kept: Vec<&crate::dynamics::Sample> = base.samples.iter().step_by(every).take(samples).collect();
    Ok(TransitionTable {
        times: kept.iter().map(|s| s.t).collect(),
        lengths: kept.iter().map(|s| s.length).collect(),
        size,
        rows,
    })
}

/// Work distribution at one sample of a transition table, for a thermal
/// initial state at inverse temperature `beta`.
pub fn work_distribution_at(
    table: &TransitionTable,
    sample: usize,
    beta: f64,
    basis: &Basis,
) -> Result<WorkDistribution> {
    let l0 = table.lengths[0];
    let lt = table.lengths[sample];
    let log_z0 = log_partition_function(beta, l0, basis)?;
    let mut outcomes = Vec::with_capacity(table.size * table.size);
    for n in 1..=table.size {
        let e0 = basis.energy(n, l0);
        let pn = (-beta * e0 - log_z0).exp();
        for m in 1..=table.size {
            outcomes.push(WorkOutcome {
                initial: n,
                final_level: m,
                work: basis.energy(m, lt) - e0,
                probability: pn * table.probability(sample, n, m),
            });
        }
    }
    Ok(WorkDistribution {
        time: table.times[sample],
        outcomes,
    })
}

/// Work distribution at the recorded time `t` of `base`.
pub fn work_distribution(
    base: &Trajectory,
    beta: f64,
    params: &SimParams,
    t: f64,
) -> Result<WorkDistribution> {
    let sample = base.sample_index(t).ok_or_else(|| {
        Error::InvalidConfiguration(format!("t = {t} is not a sample time of the base run"))
    })?;
    let mut p = params.clone();
    p.total_time = base.samples[sample].t;
    if sample == 0 {
        p.total_time = p.dt;
    }
    let table = transition_probabilities(base, &p)?;
    let basis = p.basis()?;
    let dist = work_distribution_at(&table, sample, beta, &basis)?;
    dist.validate()?;
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarzynskiCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub difference: f64,
}

/// `⟨e^{-βw}⟩` against `e^{-βΔF}`.
pub fn jarzynski_check(dist: &WorkDistribution, beta: f64, delta_f: f64) -> JarzynskiCheck {
    let lhs: f64 = dist
        .outcomes
        .iter()
        .map(|o| o.probability * (-beta * o.work).exp())
        .sum();
    let rhs = (-beta * delta_f).exp();
    JarzynskiCheck {
        lhs,
        rhs,
        difference: lhs - rhs,
    }
}

/// `(⟨W⟩, ⟨W⟩ - ΔF)`.
pub fn mean_work_and_irreversible(dist: &WorkDistribution, delta_f: f64) -> (f64, f64) {
    let mean: f64 = dist.outcomes.iter().map(|o| o.probability * o.work).sum();
    (mean, mean - delta_f)
}

/// Which ground state the fidelity refers to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityTarget {
    /// Ground state of `Ĥ(t)`, i.e. basis state 1.
    #[default]
    Physical,
    /// Ground state of `H*(t)`.
    Effective,
}

/// `|⟨g|ψ⟩|`, or `√⟨g|ρ|g⟩` for mixed states, against the ground state of
/// `Ĥ(t)`.
pub fn ground_state_fidelity(state: &QuantumState) -> f64 {
    match state {
        QuantumState::Pure(p) => p.amplitudes()[0].norm(),
        QuantumState::Mixed(m) => m.matrix()[(0, 0)].re.max(0.0).sqrt(),
    }
}

/// Same as [`ground_state_fidelity`] but against the lowest eigenvector of
/// `h_star`.
pub fn effective_ground_state_fidelity(state: &QuantumState, h_star: &DMatrix<Complex64>) -> Result<f64> {
    check_hermitian(h_star, "H*")?;
    let eig = hermitian_eigen(h_star);
    let g: DVector<Complex64> = eig.vectors.column(0).into_owned();
    Ok(match state {
        QuantumState::Pure(p) => g.dotc(p.amplitudes()).norm(),
        QuantumState::Mixed(m) => (g.adjoint() * m.matrix() * &g)[(0, 0)].re.max(0.0).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HStarObservables {
    /// Populations in the `H*` eigenbasis, ascending energy.
    pub populations: Vec<f64>,
    /// `|ρ_{01}|` between the two lowest `H*` eigenstates.
    pub coherence: f64,
    pub purity: f64,
}

pub fn hstar_basis_observables(rho: &MixedState, h_star: &DMatrix<Complex64>) -> Result<HStarObservables> {
    check_hermitian(h_star, "H*")?;
    if h_star.nrows() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: h_star.nrows(),
        });
    }
    let eig = hermitian_eigen(h_star);
    let q = &eig.vectors;
    let r = q.adjoint() * rho.matrix() * q;
    Ok(HStarObservables {
        populations: (0..r.nrows()).map(|i| r[(i, i)].re).collect(),
        coherence: if r.nrows() > 1 { r[(0, 1)].norm() } else { 0.0 },
        purity: rho.purity(),
    })
}

/// Thermodynamic quantities at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoRecord {
    pub t: f64,
    pub entropy_production: f64,
    pub friction_work: f64,
    pub delta_f: f64,
    /// `U(t) - U(0)`.
    pub delta_u: f64,
    /// Two-point-measurement quantities; present only when a transition table
    /// was supplied.
    pub mean_work: Option<f64>,
    pub irreversible_work: Option<f64>,
    pub jarzynski_lhs: Option<f64>,
    pub jarzynski_rhs: Option<f64>,
    pub fidelity_ground: f64,
    pub purity: f64,
}

/// Collects the state-dependent quantities during a run (via the observer
/// hook of [`simulate_with`]) and assembles [`ThermoRecord`]s afterwards.
pub struct ThermoRecorder {
    beta: f64,
    basis: Basis,
    target: FidelityTarget,
    entropy: Vec<f64>,
    fidelity: Vec<f64>,
    error: Option<Error>,
}

impl ThermoRecorder {
    pub fn new(beta: f64, basis: Basis, target: FidelityTarget) -> Self {
        Self {
            beta,
            basis,
            target,
            entropy: Vec::new(),
            fidelity: Vec::new(),
            error: None,
        }
    }

    pub fn observe(&mut self, sample: &crate::dynamics::Sample, state: &QuantumState) {
        if self.error.is_some() {
            return;
        }
        let fidelity = match self.target {
            FidelityTarget::Physical => Ok(ground_state_fidelity(state)),
            FidelityTarget::Effective => self
                .basis
                .effective_hamiltonian(sample.length, sample.velocity)
                .and_then(|h| effective_ground_state_fidelity(state, &h)),
        };
        match (
            entropy_production(state, self.beta, &self.basis, sample.length),
            fidelity,
        ) {
            (Ok(s), Ok(f)) => {
                self.entropy.push(s);
                self.fidelity.push(f);
            }
            (Err(e), _) | (_, Err(e)) => self.error = Some(e),
        }
    }

    pub fn finish(self, trajectory: &Trajectory, table: Option<&TransitionTable>) -> Result<Vec<ThermoRecord>> {
        if let Some(e) = self.error {
            return Err(e);
        }
        if self.entropy.len() != trajectory.samples.len() {
            return Err(Error::DimensionMismatch {
                expected: trajectory.samples.len(),
                found: self.entropy.len(),
            });
        }
        let l0 = trajectory.samples[0].length;
        let u0 = trajectory.samples[0].energy;
        let mut out = Vec::with_capacity(trajectory.samples.len());
        for (i, s) in trajectory.samples.iter().enumerate() {
            let delta_f = free_energy_difference(self.beta, s.length, l0, &self.basis)?;
            let mut record = ThermoRecord {
                t: s.t,
                entropy_production: self.entropy[i],
                friction_work: s.friction_work,
                delta_f,
                delta_u: s.energy - u0,
                mean_work: None,
                irreversible_work: None,
                jarzynski_lhs: None,
                jarzynski_rhs: None,
                fidelity_ground: self.fidelity[i],
                purity: s.purity,
            };
            if let Some(table) = table {
                if i < table.samples() {
                    let dist = work_distribution_at(table, i, self.beta, &self.basis)?;
                    let (w, w_irr) = mean_work_and_irreversible(&dist, delta_f);
                    let j = jarzynski_check(&dist, self.beta, delta_f);
                    record.mean_work = Some(w);
                    record.irreversible_work = Some(w_irr);
                    record.jarzynski_lhs = Some(j.lhs);
                    record.jarzynski_rhs = Some(j.rhs);
                }
            }
            out.push(record);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, Sample};
    use crate::state::thermal_state;
    use crate::FrictionMode;
    use std::f64::consts::PI;

    fn basis(k: usize) -> Basis {
        Basis::new(k, 1.0).unwrap()
    }

    #[test]
    fn internal_energy_examples() {
        let b = basis(4);
        let g: QuantumState = PureState::ground(4).into();
        assert!((internal_energy(&g, &b, 1.0).unwrap() - PI * PI / 2.0).abs() < 1e-12);
        let s = PureState::normalized(DVector::from_vec(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ]))
        .unwrap();
        let u = internal_energy(&s.into(), &b, 1.0).unwrap();
        assert!((u - 5.0 * PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn thermal_energy_is_weighted_sum() {
        let b = basis(20);
        let t = thermal_state(0.1, 1.0, &b).unwrap();
        let expected: f64 = t
            .state
            .populations()
            .iter()
            .enumerate()
            .map(|(i, p)| p * b.energy(i + 1, 1.0))
            .sum();
        let u = internal_energy(&t.state.into(), &b, 1.0).unwrap();
        assert!((u - expected).abs() < 1e-12);
    }

    #[test]
    fn entropy_production_of_equilibrium_is_zero() {
        let b = basis(20);
        let t = thermal_state(0.1, 1.3, &b).unwrap();
        let s = entropy_production(&t.state.into(), 0.1, &b, 1.3).unwrap();
        assert!(s.abs() < 1e-12, "{s}");
    }

    #[test]
    fn entropy_production_of_pure_ground_state() {
        let b = basis(20);
        let z = crate::state::partition_function(0.1, 1.0, &b).unwrap();
        let expected = 0.1 * PI * PI / 2.0 + z.ln();
        let pure: QuantumState = PureState::ground(20).into();
        let s = entropy_production(&pure, 0.1, &b, 1.0).unwrap();
        assert!((s - expected).abs() < 1e-12);
        let mixed: QuantumState = MixedState::from_pure(&PureState::ground(20)).into();
        let s = entropy_production(&mixed, 0.1, &b, 1.0).unwrap();
        assert!((s - expected).abs() < 1e-12);
    }

    #[test]
    fn free_energy_examples() {
        let b = basis(20);
        assert_eq!(free_energy_difference(0.1, 1.0, 1.0, &b).unwrap(), 0.0);
        assert!(free_energy_difference(0.1, 1.2, 1.0, &b).unwrap() < 0.0);
        assert!(free_energy_difference(0.1, 0.9, 1.0, &b).unwrap() > 0.0);
    }

    fn synthetic(velocities: &[f64], dt: f64, mode: FrictionMode) -> (Trajectory, SimParams) {
        let params = SimParams {
            friction: 2.0,
            friction_mode: mode,
            truncation: 2,
            ..SimParams::default()
        };
        let samples = velocities
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample {
                t: i as f64 * dt,
                length: 1.0,
                velocity: v,
                energy: 0.0,
                pressure: 0.0,
                friction_work: 0.0,
                purity: 1.0,
                populations: vec![1.0, 0.0],
                energy_residual: 0.0,
            })
            .collect();
        let tr = Trajectory {
            params: params.clone(),
            mode: "synthetic".into(),
            stride: 1,
            samples,
            final_state: PureState::ground(2).into(),
            final_wall: Default::default(),
            states: None,
        };
        (tr, params)
    }

    #[test]
    fn friction_work_examples() {
        let (tr, p) = synthetic(&[0.5; 11], 0.1, FrictionMode::Symmetric);
        let w = friction_work(&tr, &p);
        assert!((w[10] - 2.0 * 0.25 * 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|x| x[1] >= x[0]));

        let (tr, p) = synthetic(&[0.5; 11], 0.1, FrictionMode::None);
        assert!(friction_work(&tr, &p).iter().all(|&x| x == 0.0));

        let (tr, p) = synthetic(&[-0.3, -0.5, -0.7, -0.1], 0.1, FrictionMode::ExpansionOnly);
        assert!(friction_work(&tr, &p).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jarzynski_and_mean_work_on_trivial_distribution() {
        let dist = WorkDistribution {
            time: 0.0,
            outcomes: vec![
                WorkOutcome {
                    initial: 1,
                    final_level: 1,
                    work: 0.0,
                    probability: 0.7,
                },
                WorkOutcome {
                    initial: 2,
                    final_level: 2,
                    work: 0.0,
                    probability: 0.3,
                },
            ],
        };
        dist.validate().unwrap();
        let j = jarzynski_check(&dist, 0.1, 0.0);
        assert_eq!((j.lhs, j.rhs, j.difference), (1.0, 1.0, 0.0));
        assert_eq!(mean_work_and_irreversible(&dist, 0.0), (0.0, 0.0));
        assert!(dist.to_csv().starts_with("w,prob\n"));
    }

    #[test]
    fn static_box_has_no_transitions() {
        let params = SimParams {
            truncation: 4,
            total_time: 0.02,
            ..SimParams::default()
        };
        let base = simulate(&params, Mode::ConstantVelocity(0.0), &PureState::ground(4).into()).unwrap();
        let dist = work_distribution(&base, 0.1, &params, 0.02).unwrap();
        for o in &dist.outcomes {
            if o.initial == o.final_level {
                assert_eq!(o.work, 0.0);
            } else {
                assert!(o.probability < 1e-20);
            }
        }
        let j = jarzynski_check(&dist, 0.1, 0.0);
        assert!((j.lhs - 1.0).abs() < 1e-12);
        let at_zero = work_distribution(&base, 0.1, &params, 0.0).unwrap();
        assert!(at_zero.outcomes.iter().all(|o| o.work == 0.0 || o.probability == 0.0));
        assert!(work_distribution(&base, 0.1, &params, 0.012_345).is_err());
    }

    #[test]
    fn fidelity_examples() {
        assert_eq!(ground_state_fidelity(&PureState::ground(3).into()), 1.0);
        assert_eq!(ground_state_fidelity(&PureState::eigenstate(3, 2).unwrap().into()), 0.0);
        let b = basis(3);
        let h = b.effective_hamiltonian(1.0, 0.0).unwrap();
        let f = effective_ground_state_fidelity(&PureState::ground(3).into(), &h).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hstar_observables_examples() {
        let b = basis(4);
        let h = b.effective_hamiltonian(1.0, 0.0).unwrap();
        let rho = MixedState::diagonal(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        let obs = hstar_basis_observables(&rho, &h).unwrap();
        for (a, e) in obs.populations.iter().zip([0.4, 0.3, 0.2, 0.1]) {
            assert!((a - e).abs() < 1e-12);
        }
        let pure = MixedState::from_pure(&PureState::ground(4));
        assert!((hstar_basis_observables(&pure, &h).unwrap().purity - 1.0).abs() < 1e-14);
        let mixed = MixedState::diagonal(&[0.25; 4]).unwrap();
        assert!((hstar_basis_observables(&mixed, &h).unwrap().purity - 0.25).abs() < 1e-14);
    }
}
