//! Coupled wall/particle integration.
//!
//! The joint vector `(c or ρ, L, V)` is advanced with fixed-step classical
//! RK4. For density matrices with a non-zero dephasing rate each unitary step
//! is followed by an exact dephasing substep in the eigenbasis of `H*` at the
//! end of the step.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{check_length, Basis, OverlapMatrix, HBAR, INITIAL_LENGTH};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, complex_product, degenerate_blocks, hermitian_eigen};
use crate::state::{FrictionMode, MixedState, PureState, QuantumState, SimParams, WallState};
use crate::thermo;

/// Largest tolerated one-step change of `‖c‖²` or `tr ρ`.
pub const STEP_DRIFT_LIMIT: f64 = 1e-6;
/// Eigenvalue gap below which `H*` levels are treated as one degenerate block.
pub const DEGENERACY_GAP: f64 = 1e-10;
/// Bound on the time-integrated interpolation error of a replayed wall record.
pub const REPLAY_TOLERANCE: f64 = 1e-6;
/// Target for the Richardson error estimate used by [`select_time_step`].
pub const RICHARDSON_TARGET: f64 = 1e-8;
const POSITIVITY_CHECK_INTERVAL: usize = 100;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Pressure of the particle on the wall, `⟨p̂²⟩/(m L Σ)`.
///
/// `p̂²` is diagonal in the basis, with `⟨p̂²⟩ = (1/L²) Σ pop_n (nπħ)²` in the
/// physical frame; equivalently `2U/(LΣ)`.
pub fn pressure(state: &QuantumState, length: f64, params: &SimParams) -> Result<f64> {
    check_length(length)?;
    let pi_hbar = std::f64::consts::PI * HBAR;
    let p2: f64 = state
        .populations()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let n = (i + 1) as f64;
            p * n * n * pi_hbar * pi_hbar
        })
        .sum::<f64>()
        / (length * length);
    Ok(p2 / (params.particle_mass * length * params.section))
}

/// `(dL/dt, dV/dt)` for a wall driven by the internal energy `energy`.
pub fn wall_derivatives(wall: &WallState, energy: f64, params: &SimParams) -> (f64, f64) {
    let v = wall.velocity;
    let friction = params.friction * params.friction_mode.factor(v) * v;
    let force = 2.0 * energy / wall.length - params.section * params.external_pressure - friction;
    (v, force / params.wall_mass)
}

/// Amplitude equations written term by term:
/// `ċ_n = -i n²π²ħ/(2mL²) c_n + (V/2L)(c_n + 2 Σ_k I[n][k] c_k)` with `m = 1`.
///
/// The propagator uses the equivalent `-(i/ħ) H* c` form instead.
pub fn amplitude_derivatives(
    state: &PureState,
    length: f64,
    velocity: f64,
    overlap: &OverlapMatrix,
) -> Result<DVector<Complex64>> {
    check_length(length)?;
    let k = overlap.size();
    if state.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: state.dim(),
        });
    }
    let c = state.amplitudes();
    let pi2 = std::f64::consts::PI.powi(2);
    let mut out = DVector::zeros(k);
    for n in 1..=k {
        let nf = n as f64;
        let mut coupling = Complex64::new(0.0, 0.0);
        for j in 1..=k {
            coupling += c[j - 1] * overlap.get(n, j);
        }
        out[n - 1] = -I * (nf * nf * pi2 * HBAR / (2.0 * length * length)) * c[n - 1]
            + (velocity / (2.0 * length)) * (c[n - 1] + 2.0 * coupling);
    }
    Ok(out)
}

/// `-(i/ħ)[H*, ρ]`.
pub fn density_derivative(rho: &DMatrix<Complex64>, h_star: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (h_star * rho - rho * h_star) * (-I / HBAR)
}

/// Exact pure-dephasing update over `dt` in the eigenbasis of `h_star`:
/// every coherence between distinct (non-degenerate) levels is multiplied by
/// `e^{-Γ dt/2}`.
pub fn dephase(
    rho: &MixedState,
    h_star: &DMatrix<Complex64>,
    gamma: f64,
    dt: f64,
) -> Result<MixedState> {
    check_hermitian(h_star, "H*")?;
    if !(gamma >= 0.0) {
        return Err(Error::Validation(format!(
            "dephasing rate must be non-negative, got {gamma}"
        )));
    }
    if h_star.nrows() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: h_star.nrows(),
        });
    }
    if gamma == 0.0 {
        return Ok(rho.clone());
    }
    Ok(MixedState::from_raw(dephase_unchecked(rho.matrix(), h_star, gamma * dt)))
}

fn dephase_unchecked(
    rho: &DMatrix<Complex64>,
    h_star: &DMatrix<Complex64>,
    gamma_dt: f64,
) -> DMatrix<Complex64> {
    let eig = hermitian_eigen(h_star);
    let blocks = degenerate_blocks(&eig.values, DEGENERACY_GAP);
    let q = &eig.vectors;
    let mut in_eigenbasis = complex_product(&complex_product(&q.adjoint(), rho), q);
    let damping = (-0.5 * gamma_dt).exp();
    for i in 0..in_eigenbasis.nrows() {
        for j in 0..in_eigenbasis.ncols() {
            if blocks[i] != blocks[j] {
                in_eigenbasis[(i, j)] *= damping;
            }
        }
    }
    let mut out = complex_product(&complex_product(q, &in_eigenbasis), &q.adjoint());
    // Restore exact Hermiticity lost to rounding in the two transforms.
    let n = out.nrows();
    for i in 0..n {
        out[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)].conj());
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}

/// What drives the wall during a run.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Wall obeys Newton's law with the quantum pressure.
    SelfConsistent,
    /// `L(t) = L₀ + V t`.
    ConstantVelocity(f64),
    /// `(L, V)` linearly interpolated from a recorded run.
    Replay(&'a Trajectory),
}

impl Mode<'_> {
    pub fn label(&self) -> String {
        match self {
            Mode::SelfConsistent => "self_consistent".into(),
            Mode::ConstantVelocity(v) => format!("constant_velocity({v})"),
            Mode::Replay(_) => "replay".into(),
        }
    }
}

/// One recorded point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub length: f64,
    pub velocity: f64,
    /// Internal energy `U = ⟨Ĥ(t)⟩`.
    pub energy: f64,
    pub pressure: f64,
    /// Accumulated `|W_fric|`.
    pub friction_work: f64,
    pub purity: f64,
    /// Fixed-basis populations, index `n - 1`.
    pub populations: Vec<f64>,
    /// `U + MV²/2 + ΣP₀(L - L₀) + |W_fric|` minus its initial value. Not
    /// conserved by the model; diagnostic only.
    pub energy_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: SimParams,
    pub mode: String,
    pub stride: usize,
    pub samples: Vec<Sample>,
    pub final_state: QuantumState,
    pub final_wall: WallState,
    /// Full state at every sample, when requested.
    pub states: Option<Vec<QuantumState>>,
}

impl Trajectory {
    pub fn sample_spacing(&self) -> f64 {
        self.params.dt * self.stride as f64
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_abs_velocity(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.velocity.abs()))
    }

    pub fn min_length(&self) -> f64 {
        self.samples.iter().fold(f64::INFINITY, |m, s| m.min(s.length))
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("a trajectory always holds its initial sample")
    }

    /// Index of the sample recorded at time `t` (within a hundredth of a step).
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        let h = self.sample_spacing();
        let idx = (t / h).round();
        if idx < 0.0 || (idx * h - t).abs() > 1e-2 * self.params.dt {
            return None;
        }
        let idx = idx as usize;
        (idx < self.samples.len()).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Record every `stride`-th step.
    pub stride: usize,
    /// Keep the full quantum state of every sample in the trajectory.
    pub keep_states: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            keep_states: false,
        }
    }
}

/// Linear interpolation of a recorded wall trajectory.
#[derive(Debug, Clone)]
pub struct WallRecord {
    spacing: f64,
    lengths: Vec<f64>,
    velocities: Vec<f64>,
}

impl WallRecord {
    /// Builds the interpolant, rejecting records that do not reach `until` or
    /// whose interpolation error estimate exceeds [`REPLAY_TOLERANCE`].
    pub fn from_trajectory(trajectory: &Trajectory, until: f64) -> Result<Self> {
        let spacing = trajectory.sample_spacing();
        let lengths: Vec<f64> = trajectory.samples.iter().map(|s| s.length).collect();
        let velocities: Vec<f64> = trajectory.samples.iter().map(|s| s.velocity).collect();
        let covered = spacing * (lengths.len().saturating_sub(1)) as f64;
        if covered + 1e-9 * until.max(1.0) < until {
            return Err(Error::InvalidConfiguration(format!(
                "replay record covers [0, {covered}] but the run needs [0, {until}]"
            )));
        }
        let estimate = Self::error_estimate(spacing, &velocities, until);
        if estimate > REPLAY_TOLERANCE {
            return Err(Error::ReplayResolution {
                estimate,
                tolerance: REPLAY_TOLERANCE,
            });
        }
        Ok(Self {
            spacing,
            lengths,
            velocities,
        })
    }

    /// `∫ (|δL| + |δV|) dt` over `[0, until]`, where `δ` is the midpoint
    /// error `h²|f''|/8` of linear interpolation and the second derivatives
    /// come from finite differences of `V`. Integrating rather than taking the
    /// worst interval keeps isolated kinks (friction switching on at `V = 0`)
    /// from rejecting records whose replay is still accurate.
    fn error_estimate(spacing: f64, velocities: &[f64], until: f64) -> f64 {
        let intervals = ((until / spacing).ceil() as usize).min(velocities.len().saturating_sub(1));
        let curvature = |i: usize| {
            let at = |j: usize| {
                (j >= 1 && j + 1 < velocities.len())
                    .then(|| (velocities[j + 1] - 2.0 * velocities[j] + velocities[j - 1]).abs())
                    .unwrap_or(0.0)
            };
            at(i).max(at(i + 1))
        };
        (0..intervals)
            .map(|i| {
                let in_length = spacing * (velocities[i + 1] - velocities[i]).abs() / 8.0;
                let in_velocity = curvature(i) / 8.0;
                spacing * (in_length + in_velocity)
            })
            .sum()
    }

    pub fn at(&self, t: f64) -> WallState {
        let last = self.lengths.len() - 1;
        let x = (t / self.spacing).max(0.0);
        let i = (x.floor() as usize).min(last.saturating_sub(1));
        let frac = if last == 0 { 0.0 } else { (x - i as f64).min(1.0) };
        let j = (i + 1).min(last);
        WallState {
            length: self.lengths[i] + frac * (self.lengths[j] - self.lengths[i]),
            velocity: self.velocities[i] + frac * (self.velocities[j] - self.velocities[i]),
        }
    }
}

/// How the wall is advanced inside one step.
pub enum Drive<'a> {
    Coupled,
    Prescribed(&'a dyn Fn(f64) -> WallState),
}

#[derive(Clone)]
enum Amplitudes {
    Pure(DVector<Complex64>),
    Mixed(DMatrix<Complex64>),
}

impl Amplitudes {
    fn of(state: &QuantumState) -> Self {
        match state {
            QuantumState::Pure(p) => Amplitudes::Pure(p.amplitudes().clone()),
            QuantumState::Mixed(m) => Amplitudes::Mixed(m.matrix().clone()),
        }
    }

    fn into_state(self) -> QuantumState {
        match self {
            Amplitudes::Pure(c) => QuantumState::Pure(PureState::from_raw(c)),
            Amplitudes::Mixed(r) => QuantumState::Mixed(MixedState::from_raw(r)),
        }
    }

    fn plus_scaled(&self, k: &Amplitudes, h: f64) -> Amplitudes {
        let h = Complex64::new(h, 0.0);
        match (self, k) {
            (Amplitudes::Pure(a), Amplitudes::Pure(b)) => Amplitudes::Pure(a + b * h),
            (Amplitudes::Mixed(a), Amplitudes::Mixed(b)) => Amplitudes::Mixed(a + b * h),
            _ => unreachable!("stages share the representation of the initial state"),
        }
    }

    fn rk4_combine(&self, k: [&Amplitudes; 4], dt: f64) -> Amplitudes {
        let w = |x: f64| Complex64::new(x * dt / 6.0, 0.0);
        match (self, k) {
            (
                Amplitudes::Pure(a),
                [Amplitudes::Pure(k1), Amplitudes::Pure(k2), Amplitudes::Pure(k3), Amplitudes::Pure(k4)],
            ) => Amplitudes::Pure(a + k1 * w(1.0) + k2 * w(2.0) + k3 * w(2.0) + k4 * w(1.0)),
            (
                Amplitudes::Mixed(a),
                [Amplitudes::Mixed(k1), Amplitudes::Mixed(k2), Amplitudes::Mixed(k3), Amplitudes::Mixed(k4)],
            ) => Amplitudes::Mixed(a + k1 * w(1.0) + k2 * w(2.0) + k3 * w(2.0) + k4 * w(1.0)),
            _ => unreachable!("stages share the representation of the initial state"),
        }
    }

    fn populations_dot(&self, energies: &DVector<f64>) -> f64 {
        match self {
            Amplitudes::Pure(c) => c.iter().zip(energies.iter()).map(|(c, e)| c.norm_sqr() * e).sum(),
            Amplitudes::Mixed(r) => (0..r.nrows()).map(|i| r[(i, i)].re * energies[i]).sum(),
        }
    }

    fn norm(&self) -> f64 {
        match self {
            Amplitudes::Pure(c) => c.norm_squared(),
            Amplitudes::Mixed(r) => r.trace().re,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Amplitudes::Pure(c) => c.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            Amplitudes::Mixed(r) => r.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }
}

/// Fixed-step integrator bound to one parameter set and basis.
pub struct Propagator {
    params: SimParams,
    basis: Basis,
}

struct Stage {
    quantum: Amplitudes,
    length: f64,
    velocity: f64,
}

impl Propagator {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let basis = params.basis()?;
        Ok(Self { params, basis })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    fn quantum_derivative(&self, q: &Amplitudes, length: f64, velocity: f64) -> Amplitudes {
        let energies = self.basis.energies_unchecked(length);
        let rate = Complex64::new(velocity / length, 0.0);
        match q {
            Amplitudes::Pure(c) => {
                let mut out = self.basis.coupling() * c * rate;
                for i in 0..c.len() {
                    out[i] -= I * (energies[i] / HBAR) * c[i];
                }
                Amplitudes::Pure(out)
            }
            Amplitudes::Mixed(rho) => {
                // C is real antisymmetric and ρ Hermitian, so ρC = -(Cρ)† and
                // the commutator needs a single product.
                let c = self.basis.coupling_real();
                let x = (c * rho.map(|z| z.re)).zip_map(&(c * rho.map(|z| z.im)), Complex64::new);
                let n = rho.nrows();
                let out = DMatrix::from_fn(n, n, |i, j| {
                    (x[(i, j)] + x[(j, i)].conj()) * rate
                        - I * ((energies[i] - energies[j]) / HBAR) * rho[(i, j)]
                });
                Amplitudes::Mixed(out)
            }
        }
    }

    fn derivative(&self, t: f64, stage: &Stage, drive: &Drive) -> Result<Stage> {
        match drive {
            Drive::Coupled => {
                if !(stage.length > 0.0) {
                    return Err(Error::WallCrash {
                        t,
                        length: stage.length,
                    });
                }
                let energies = self.basis.energies_unchecked(stage.length);
                let energy = stage.quantum.populations_dot(&energies);
                let wall = WallState {
                    length: stage.length,
                    velocity: stage.velocity,
                };
                let (dl, dv) = wall_derivatives(&wall, energy, &self.params);
                Ok(Stage {
                    quantum: self.quantum_derivative(&stage.quantum, stage.length, stage.velocity),
                    length: dl,
                    velocity: dv,
                })
            }
            Drive::Prescribed(f) => {
                let wall = f(t);
                if !(wall.length > 0.0) {
                    return Err(Error::WallCrash {
                        t,
                        length: wall.length,
                    });
                }
                Ok(Stage {
                    quantum: self.quantum_derivative(&stage.quantum, wall.length, wall.velocity),
                    length: 0.0,
                    velocity: 0.0,
                })
            }
        }
    }

    fn rk4(&self, t: f64, y0: &Stage, h: f64, drive: &Drive) -> Result<Stage> {
        let advance = |k: &Stage, a: f64| Stage {
            quantum: y0.quantum.plus_scaled(&k.quantum, a),
            length: y0.length + a * k.length,
            velocity: y0.velocity + a * k.velocity,
        };
        let k1 = self.derivative(t, y0, drive)?;
        let k2 = self.derivative(t + 0.5 * h, &advance(&k1, 0.5 * h), drive)?;
        let k3 = self.derivative(t + 0.5 * h, &advance(&k2, 0.5 * h), drive)?;
        let k4 = self.derivative(t + h, &advance(&k3, h), drive)?;
        let combine = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        Ok(Stage {
            quantum: y0
                .quantum
                .rk4_combine([&k1.quantum, &k2.quantum, &k3.quantum, &k4.quantum], h),
            length: y0.length + combine(k1.length, k2.length, k3.length, k4.length),
            velocity: y0.velocity + combine(k1.velocity, k2.velocity, k3.velocity, k4.velocity),
        })
    }

    fn has_velocity_kink(&self, drive: &Drive) -> bool {
        matches!(drive, Drive::Coupled)
            && self.params.friction_mode == FrictionMode::ExpansionOnly
            && self.params.friction > 0.0
    }

    /// Fraction of the step at which `V` vanishes, by Illinois regula falsi
    /// on sub-steps from `y0`.
    fn velocity_zero(&self, t: f64, y0: &Stage, dt: f64, v1: f64, drive: &Drive) -> Result<f64> {
        let (mut a, mut fa) = (0.0, y0.velocity);
        let (mut b, mut fb) = (1.0, v1);
        let scale = fa.abs().max(fb.abs());
        let mut side = 0;
        let mut theta = (a * fb - b * fa) / (fb - fa);
        for _ in 0..60 {
            let f = self.rk4(t, y0, theta * dt, drive)?.velocity;
            if f.abs() <= 1e-15 * scale || (b - a) <= 1e-13 {
                break;
            }
            if f * fb > 0.0 {
                (b, fb) = (theta, f);
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                (a, fa) = (theta, f);
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            theta = (a * fb - b * fa) / (fb - fa);
        }
        Ok(theta)
    }

    /// Advances `(state, wall)` from `t` to `t + dt`.
    pub fn step(
        &self,
        t: f64,
        state: &QuantumState,
        wall: &WallState,
        drive: &Drive,
    ) -> Result<(QuantumState, WallState)> {
        if state.dim() != self.basis.size() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.size(),
                found: state.dim(),
            });
        }
        let dt = self.params.dt;
        let y0 = Stage {
            quantum: Amplitudes::of(state),
            length: wall.length,
            velocity: wall.velocity,
        };
        let mut y1 = self.rk4(t, &y0, dt, drive)?;
        if self.has_velocity_kink(drive) && y0.velocity * y1.velocity < 0.0 {
            // The friction force has a kink at V = 0; stepping across it costs
            // RK4 its order, so the step is split at the zero of V.
            let theta = self.velocity_zero(t, &y0, dt, y1.velocity, drive)?;
            let mid = self.rk4(t, &y0, theta * dt, drive)?;
            y1 = self.rk4(t + theta * dt, &mid, (1.0 - theta) * dt, drive)?;
        }
        let t_next = t + dt;
        let quantum = y1.quantum;
        let next_wall = match drive {
            Drive::Coupled => WallState {
                length: y1.length,
                velocity: y1.velocity,
            },
            Drive::Prescribed(f) => f(t_next),
        };
        if !(next_wall.length > 0.0) {
            return Err(Error::WallCrash {
                t: t_next,
                length: next_wall.length,
            });
        }
        if !quantum.is_finite() || !next_wall.velocity.is_finite() {
            return Err(Error::IntegratorInstability {
                t: t_next,
                quantity: "state",
                drift: f64::INFINITY,
            });
        }
        let drift = (quantum.norm() - y0.quantum.norm()).abs();
        if drift > STEP_DRIFT_LIMIT {
            return Err(Error::IntegratorInstability {
                t: t_next,
                quantity: if state.is_mixed() { "trace" } else { "norm" },
                drift,
            });
        }

        let gamma = self.params.dephasing_rate;
        let quantum = match quantum {
            Amplitudes::Mixed(rho) if gamma > 0.0 => {
                let h_star = self
                    .basis
                    .effective_hamiltonian_unchecked(next_wall.length, next_wall.velocity);
                Amplitudes::Mixed(dephase_unchecked(&rho, &h_star, gamma * dt))
            }
            other => other,
        };
        Ok((quantum.into_state(), next_wall))
    }

    fn sample(&self, t: f64, state: &QuantumState, wall: &WallState) -> Result<Sample> {
        Ok(Sample {
            t,
            length: wall.length,
            velocity: wall.velocity,
            energy: thermo::internal_energy(state, &self.basis, wall.length)?,
            pressure: pressure(state, wall.length, &self.params)?,
            friction_work: 0.0,
            purity: state.purity(),
            populations: state.populations(),
            energy_residual: 0.0,
        })
    }
}

/// One self-consistent RK4 step (plus dephasing for density matrices).
pub fn step(
    state: &QuantumState,
    wall: &WallState,
    params: &SimParams,
) -> Result<(QuantumState, WallState)> {
    Propagator::new(params.clone())?.step(0.0, state, wall, &Drive::Coupled)
}

pub fn simulate(params: &SimParams, mode: Mode, initial: &QuantumState) -> Result<Trajectory> {
    simulate_with(params, mode, initial, RunOptions::default(), |_, _| {})
}

/// Runs from `t = 0` to `params.total_time`, calling `observer` on every
/// recorded sample together with the state at that sample.
pub fn simulate_with<F>(
    params: &SimParams,
    mode: Mode,
    initial: &QuantumState,
    options: RunOptions,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&Sample, &QuantumState),
{
    let propagator = Propagator::new(params.clone())?;
    if options.stride == 0 {
        return Err(Error::InvalidConfiguration("stride must be at least 1".into()));
    }
    if initial.dim() != params.truncation {
        return Err(Error::DimensionMismatch {
            expected: params.truncation,
            found: initial.dim(),
        });
    }
    if (initial.norm() - 1.0).abs() > crate::state::NORM_TOLERANCE {
        return Err(Error::InvalidState(format!(
            "initial state has norm {}, expected 1",
            initial.norm()
        )));
    }

    let record;
    let constant;
    let drive = match mode {
        Mode::SelfConsistent => Drive::Coupled,
        Mode::ConstantVelocity(v) => {
            let end = INITIAL_LENGTH + v * params.total_time;
            if !(end > 0.0) {
                return Err(Error::WallCrash {
                    t: -INITIAL_LENGTH / v,
                    length: 0.0,
                });
            }
            constant = move |t: f64| WallState {
                length: INITIAL_LENGTH + v * t,
                velocity: v,
            };
            Drive::Prescribed(&constant)
        }
        Mode::Replay(trajectory) => {
            let r = WallRecord::from_trajectory(trajectory, params.total_time)?;
            record = move |t: f64| r.at(t);
            Drive::Prescribed(&record)
        }
    };

    let mut wall = match &drive {
        Drive::Coupled => WallState::at_rest(INITIAL_LENGTH),
        Drive::Prescribed(f) => f(0.0),
    };
    let mut state = initial.clone();
    let steps = params.steps();
    let mut samples = Vec::with_capacity(steps / options.stride + 1);
    let mut states = options.keep_states.then(Vec::new);

    let mut record_sample = |t: f64, state: &QuantumState, wall: &WallState| -> Result<()> {
        let s = propagator.sample(t, state, wall)?;
        observer(&s, state);
        samples.push(s);
        if let Some(states) = states.as_mut() {
            states.push(state.clone());
        }
        Ok(())
    };

    record_sample(0.0, &state, &wall)?;
    for i in 0..steps {
        let t = i as f64 * params.dt;
        let (next, next_wall) = propagator.step(t, &state, &wall, &drive)?;
        state = next;
        wall = next_wall;
        let done = i + 1 == steps;
        if let QuantumState::Mixed(m) = &state {
            if (i + 1) % POSITIVITY_CHECK_INTERVAL == 0 || done {
                m.check_positive()?;
            }
        }
        if (i + 1) % options.stride == 0 {
            record_sample((i + 1) as f64 * params.dt, &state, &wall)?;
        }
    }

    let mut trajectory = Trajectory {
        params: params.clone(),
        mode: mode.label(),
        stride: options.stride,
        samples,
        final_state: state,
        final_wall: wall,
        states,
    };
    fill_work_columns(&mut trajectory);
    Ok(trajectory)
}

fn fill_work_columns(trajectory: &mut Trajectory) {
    let work = thermo::friction_work(trajectory, &trajectory.params);
    let p = &trajectory.params;
    let total = |s: &Sample, w: f64| {
        s.energy
            + 0.5 * p.wall_mass * s.velocity * s.velocity
            + p.section * p.external_pressure * (s.length - INITIAL_LENGTH)
            + w
    };
    let reference = total(&trajectory.samples[0], 0.0);
    for (s, w) in trajectory.samples.iter_mut().zip(work) {
        s.friction_work = w;
        s.energy_residual = total(s, w) - reference;
    }
}

/// Halves `params.dt` until the Richardson estimate over the first 100 steps
/// of a self-consistent run drops below [`RICHARDSON_TARGET`]. Returns the
/// chosen step.
pub fn select_time_step(params: &SimParams, initial: &QuantumState) -> Result<f64> {
    const PROBE_STEPS: usize = 100;
    const MAX_HALVINGS: usize = 10;
    let mut dt = params.dt;
    for _ in 0..MAX_HALVINGS {
        let coarse = probe(params, initial, dt, PROBE_STEPS)?;
        let fine = probe(params, initial, 0.5 * dt, 2 * PROBE_STEPS)?;
        let estimate = state_distance(&coarse, &fine) / 15.0;
        if estimate <= RICHARDSON_TARGET {
            return Ok(dt);
        }
        log::info!("Richardson estimate {estimate:e} at dt = {dt}; halving");
        dt *= 0.5;
    }
    Err(Error::IntegratorInstability {
        t: 0.0,
        quantity: "Richardson estimate",
        drift: f64::NAN,
    })
}

fn probe(
    params: &SimParams,
    initial: &QuantumState,
    dt: f64,
    steps: usize,
) -> Result<(QuantumState, WallState)> {
    let mut p = params.clone();
    p.dt = dt;
    p.total_time = dt * steps as f64;
    let propagator = Propagator::new(p)?;
    let mut state = initial.clone();
    let mut wall = WallState::default();
    for i in 0..steps {
        (state, wall) = propagator.step(i as f64 * dt, &state, &wall, &Drive::Coupled)?;
    }
    Ok((state, wall))
}

/// Largest component-wise difference between two joint states.
pub fn state_distance(a: &(QuantumState, WallState), b: &(QuantumState, WallState)) -> f64 {
    let q = match (&a.0, &b.0) {
        (QuantumState::Pure(x), QuantumState::Pure(y)) => (x.amplitudes() - y.amplitudes()).camax(),
        (QuantumState::Mixed(x), QuantumState::Mixed(y)) => (x.matrix() - y.matrix()).camax(),
        _ => f64::INFINITY,
    };
    q.max((a.1.length - b.1.length).abs())
        .max((a.1.velocity - b.1.velocity).abs())
}
