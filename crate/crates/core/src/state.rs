//! Run parameters, wall state and quantum states over the truncated basis.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{check_length, level, Basis, INITIAL_LENGTH};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, hermitian_eigen};

pub const NORM_TOLERANCE: f64 = 1e-8;
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_FLOOR: f64 = -1e-8;

/// How viscous friction acts on the wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionMode {
    None,
    /// `-γV` in both directions.
    Symmetric,
    /// `-γ h(V) V`, friction only while the box expands; `h(0) = 0`.
    ExpansionOnly,
}

impl FrictionMode {
    /// Multiplier on `γV` at wall velocity `velocity`.
    pub fn factor(self, velocity: f64) -> f64 {
        match self {
            FrictionMode::None => 0.0,
            FrictionMode::Symmetric => 1.0,
            FrictionMode::ExpansionOnly => {
                if velocity > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrictionMode::None => "none",
            FrictionMode::Symmetric => "symmetric",
            FrictionMode::ExpansionOnly => "expansion_only",
        }
    }
}

impl std::str::FromStr for FrictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FrictionMode::None),
            "symmetric" => Ok(FrictionMode::Symmetric),
            "expansion_only" => Ok(FrictionMode::ExpansionOnly),
            other => Err(Error::InvalidConfiguration(format!(
                "friction_mode: unknown value {other:?} (expected none, symmetric or expansion_only)"
            ))),
        }
    }
}

/// Physical and numerical parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub particle_mass: f64,
    pub wall_mass: f64,
    /// Cross-section of the moving wall.
    pub section: f64,
    /// Viscous friction coefficient γ.
    pub friction: f64,
    pub external_pressure: f64,
    pub dephasing_rate: f64,
    pub beta: f64,
    pub truncation: usize,
    pub dt: f64,
    pub total_time: f64,
    pub friction_mode: FrictionMode,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            particle_mass: 1.0,
            wall_mass: 0.05,
            section: 1.0,
            friction: 10.0,
            external_pressure: 0.0,
            dephasing_rate: 0.0,
            beta: 0.1,
            truncation: 20,
            dt: 1e-4,
            total_time: 2.0,
            friction_mode: FrictionMode::ExpansionOnly,
        }
    }
}

impl SimParams {
    /// Checks every constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("particle_mass", self.particle_mass),
            ("wall_mass", self.wall_mass),
            ("section", self.section),
            ("dt", self.dt),
            ("total_time", self.total_time),
            ("beta", self.beta),
        ];
        for (key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfiguration(format!(
                    "{key} must be positive and finite, got {value}"
                )));
            }
        }
        let non_negative = [
            ("friction", self.friction),
            ("external_pressure", self.external_pressure),
            ("dephasing_rate", self.dephasing_rate),
        ];
        for (key, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfiguration(format!(
                    "{key} must be non-negative and finite, got {value}"
                )));
            }
        }
        if self.truncation < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "truncation must be at least 2, got {}",
                self.truncation
            )));
        }
        if self.dt > self.total_time {
            return Err(Error::InvalidConfiguration(format!(
                "dt ({}) exceeds total_time ({})",
                self.dt, self.total_time
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Basis> {
        Basis::new(self.truncation, self.particle_mass)
    }

    /// Number of integration steps covering `total_time`.
    pub fn steps(&self) -> usize {
        (self.total_time / self.dt).round() as usize
    }
}

/// Classical wall: box length and its rate of change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallState {
    pub length: f64,
    pub velocity: f64,
}

impl WallState {
    pub fn at_rest(length: f64) -> Self {
        Self {
            length,
            velocity: 0.0,
        }
    }
}

impl Default for WallState {
    fn default() -> Self {
        Self::at_rest(INITIAL_LENGTH)
    }
}

/// Amplitudes `c_n` over the fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm_squared();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalises `amplitudes` before wrapping them.
    pub fn normalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalise a zero vector".into()));
        }
        Ok(Self {
            amplitudes: amplitudes / Complex64::new(norm, 0.0),
        })
    }

    /// Eigenstate `n` (1-based) of the initial Hamiltonian.
    pub fn eigenstate(size: usize, n: usize) -> Result<Self> {
        if n == 0 || n > size {
            return Err(Error::InvalidState(format!(
                "eigenstate index {n} outside 1..={size}"
            )));
        }
        let mut amplitudes = DVector::zeros(size);
        amplitudes[n - 1] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn ground(size: usize) -> Self {
        Self::eigenstate(size, 1).expect("size >= 1")
    }

    pub(crate) fn from_raw(amplitudes: DVector<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Density matrix over the fixed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    rho: DMatrix<Complex64>,
}

impl MixedState {
    /// Validates Hermiticity, unit trace and positivity (within tolerance).
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self> {
        check_hermitian(&rho, "density matrix")?;
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > NORM_TOLERANCE || trace.im.abs() > NORM_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "density matrix has trace {trace}, expected 1"
            )));
        }
        let state = Self { rho };
        state.check_positive()?;
        Ok(state)
    }

    pub fn from_pure(pure: &PureState) -> Self {
        let c = pure.amplitudes();
        Self {
            rho: c * c.adjoint(),
        }
    }

    /// Diagonal state with the given populations, which must sum to 1.
    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let rho = DMatrix::from_fn(populations.len(), populations.len(), |i, j| {
            if i == j {
                Complex64::new(populations[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self::new(rho)
    }

    pub(crate) fn from_raw(rho: DMatrix<Complex64>) -> Self {
        Self { rho }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.rho[(i, i)].re).collect()
    }

    /// `tr ρ²`; for Hermitian ρ this is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.rho.norm_squared()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.rho).values
    }

    pub fn check_positive(&self) -> Result<()> {
        let lowest = self.eigenvalues().first().copied().unwrap_or(0.0);
        if lowest < POSITIVITY_FLOOR {
            return Err(Error::Positivity { eigenvalue: lowest });
        }
        Ok(())
    }
}

/// Either representation; the dynamics handles both.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(PureState),
    Mixed(MixedState),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(p) => p.dim(),
            QuantumState::Mixed(m) => m.dim(),
        }
    }

    /// Diagonal of the state in the fixed basis.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(p) => p.populations(),
            QuantumState::Mixed(m) => m.populations(),
        }
    }

    /// `‖c‖²` or `tr ρ`.
    pub fn norm(&self) -> f64 {
        match self {
            QuantumState::Pure(p) => p.norm_squared(),
            QuantumState::Mixed(m) => m.trace(),
        }
    }

    pub fn purity(&self) -> f64 {
        match self {
            QuantumState::Pure(p) => p.norm_squared().powi(2),
            QuantumState::Mixed(m) => m.purity(),
        }
    }

    pub fn to_mixed(&self) -> MixedState {
        match self {
            QuantumState::Pure(p) => MixedState::from_pure(p),
            QuantumState::Mixed(m) => m.clone(),
        }
    }

    pub fn is_mixed(&self) -> bool {
        matches!(self, QuantumState::Mixed(_))
    }
}

impl From<PureState> for QuantumState {
    fn from(p: PureState) -> Self {
        QuantumState::Pure(p)
    }
}

impl From<MixedState> for QuantumState {
    fn from(m: MixedState) -> Self {
        QuantumState::Mixed(m)
    }
}

/// Initial preparations used by the scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    Ground,
    Eigenstate { n: usize },
    Thermal { beta: f64 },
}

impl InitialState {
    pub fn prepare(&self, basis: &Basis, length: f64) -> Result<QuantumState> {
        match *self {
            InitialState::Ground => Ok(PureState::ground(basis.size()).into()),
            InitialState::Eigenstate { n } => Ok(PureState::eigenstate(basis.size(), n)?.into()),
            InitialState::Thermal { beta } => Ok(thermal_state(beta, length, basis)?.state.into()),
        }
    }
}

/// Truncated Gibbs state of the box Hamiltonian.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub state: MixedState,
    pub partition_function: f64,
}

pub fn partition_function(beta: f64, length: f64, basis: &Basis) -> Result<f64> {
    Ok(log_partition_function(beta, length, basis)?.exp())
}

/// `ln Z`, summed relative to the ground level so that it stays finite at
/// large `β`.
pub fn log_partition_function(beta: f64, length: f64, basis: &Basis) -> Result<f64> {
    check_beta(beta)?;
    check_length(length)?;
    let ground = basis.energy(1, length);
    let shifted: f64 = (1..=basis.size())
        .map(|n| (-beta * (basis.energy(n, length) - ground)).exp())
        .sum();
    Ok(-beta * ground + shifted.ln())
}

/// `e^{-βE_n(L)}/Z` on the diagonal, `Z` summed over the retained levels.
pub fn thermal_state(beta: f64, length: f64, basis: &Basis) -> Result<ThermalState> {
    let log_z = log_partition_function(beta, length, basis)?;
    let populations: Vec<f64> = (1..=basis.size())
        .map(|n| (-beta * basis.energy(n, length) - log_z).exp())
        .collect();
    Ok(ThermalState {
        state: MixedState::diagonal(&populations)?,
        partition_function: log_z.exp(),
    })
}

/// Weight of the Boltzmann sum beyond the retained levels, relative to the
/// retained part.
pub fn partition_tail_fraction(beta: f64, length: f64, basis: &Basis) -> Result<f64> {
    let log_z = log_partition_function(beta, length, basis)?;
    let mut tail = 0.0;
    let mut n = basis.size() + 1;
    loop {
        let term = (-beta * level(n, length, basis.particle_mass()) - log_z).exp();
        tail += term;
        if term <= tail * 1e-17 || term == 0.0 {
            break;
        }
        n += 1;
    }
    Ok(tail)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "inverse temperature must be positive, got {beta}"
        )))
    }
}

/// Reference frame for reconstructing the wavefunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// `φ(z) = Σ c_n √2 sin(nπz)` on `[0, 1]`.
    Transformed,
    /// `ψ(x) = φ(x/L)/√L` on `[0, L]`.
    Physical,
}

pub fn wavefunction(
    state: &PureState,
    length: f64,
    grid: &[f64],
    frame: Frame,
) -> Result<Vec<Complex64>> {
    check_length(length)?;
    let upper = match frame {
        Frame::Transformed => 1.0,
        Frame::Physical => length,
    };
    grid.iter()
        .map(|&x| {
            if !(0.0..=upper).contains(&x) {
                return Err(Error::Domain { x, upper });
            }
            let (z, scale) = match frame {
                Frame::Transformed => (x, 1.0),
                Frame::Physical => (x / length, 1.0 / length.sqrt()),
            };
            let mut value = Complex64::new(0.0, 0.0);
            for (i, c) in state.amplitudes().iter().enumerate() {
                let n = (i + 1) as f64;
                value += c * (std::f64::consts::SQRT_2 * (n * PI * z).sin());
            }
            Ok(value * scale)
        })
        .collect()
}

/// `⟨ψ_a|ψ_b⟩` for two physical-frame wavefunctions living in boxes
/// `[0, length_a]` and `[0, length_b]`, each vanishing outside its box.
pub fn physical_overlap(a: &PureState, length_a: f64, b: &PureState, length_b: f64) -> Result<Complex64> {
    check_length(length_a)?;
    check_length(length_b)?;
    let common = length_a.min(length_b);
    // ∫₀ˡ sin(αx) sin(βx) dx = [S(α-β) - S(α+β)]/2 with S(x) = sin(xl)/x.
    let s = |x: f64| {
        if (x * common).abs() < 1e-6 {
            common * (1.0 - (x * common).powi(2) / 6.0)
        } else {
            (x * common).sin() / x
        }
    };
    let scale = 2.0 / (length_a * length_b).sqrt();
    let mut total = Complex64::new(0.0, 0.0);
    for (i, ca) in a.amplitudes().iter().enumerate() {
        let alpha = (i + 1) as f64 * PI / length_a;
        for (j, cb) in b.amplitudes().iter().enumerate() {
            let beta = (j + 1) as f64 * PI / length_b;
            let integral = 0.5 * (s(alpha - beta) - s(alpha + beta));
            total += ca.conj() * cb * (scale * integral);
        }
    }
    Ok(total)
}

impl QuantumState {
    /// Plain-text record: `n re im` per line for pure states, `n k re im` for
    /// density matrices, 1-based indices.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        match self {
            QuantumState::Pure(p) => {
                for (i, c) in p.amplitudes().iter().enumerate() {
                    let _ = writeln!(out, "{} {:.17e} {:.17e}", i + 1, c.re, c.im);
                }
            }
            QuantumState::Mixed(m) => {
                let rho = m.matrix();
                for i in 0..rho.nrows() {
                    for j in 0..rho.ncols() {
                        let z = rho[(i, j)];
                        let _ = writeln!(out, "{} {} {:.17e} {:.17e}", i + 1, j + 1, z.re, z.im);
                    }
                }
            }
        }
        out
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut pure: Vec<(usize, Complex64)> = Vec::new();
        let mut mixed: Vec<(usize, usize, Complex64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: &str| Error::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let idx = |s: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(n) if n >= 1 => Ok(n),
                    _ => Err(bad("indices must be positive integers")),
                }
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("expected a number"));
            match fields.len() {
                3 if mixed.is_empty() => {
                    pure.push((idx(fields[0])?, Complex64::new(num(fields[1])?, num(fields[2])?)))
                }
                4 if pure.is_empty() => mixed.push((
                    idx(fields[0])?,
                    idx(fields[1])?,
                    Complex64::new(num(fields[2])?, num(fields[3])?),
                )),
                _ => return Err(bad("inconsistent field count")),
            }
        }
        if !pure.is_empty() {
            let size = pure.iter().map(|p| p.0).max().unwrap_or(0);
            let mut c = DVector::zeros(size);
            for (n, z) in pure {
                c[n - 1] = z;
            }
            return Ok(PureState::new(c)?.into());
        }
        if !mixed.is_empty() {
            let size = mixed.iter().map(|m| m.0.max(m.1)).max().unwrap_or(0);
            let mut rho = DMatrix::zeros(size, size);
            for (n, k, z) in mixed {
                rho[(n - 1, k - 1)] = z;
            }
            return Ok(MixedState::new(rho)?.into());
        }
        Err(Error::Parse {
            line: 0,
            reason: "empty state record".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(k: usize) -> Basis {
        Basis::new(k, 1.0).unwrap()
    }

    #[test]
    fn params_validation_names_the_key() {
        let mut p = SimParams::default();
        p.validate().unwrap();
        p.wall_mass = -1.0;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("wall_mass"), "{err}");
        let mut p = SimParams::default();
        p.friction = -0.1;
        assert!(p.validate().unwrap_err().to_string().contains("friction"));
        let mut p = SimParams::default();
        p.truncation = 1;
        assert!(p.validate().unwrap_err().to_string().contains("truncation"));
    }

    #[test]
    fn friction_factor_heaviside_convention() {
        assert_eq!(FrictionMode::ExpansionOnly.factor(0.0), 0.0);
        assert_eq!(FrictionMode::ExpansionOnly.factor(-1.0), 0.0);
        assert_eq!(FrictionMode::ExpansionOnly.factor(1e-12), 1.0);
        assert_eq!(FrictionMode::Symmetric.factor(-1.0), 1.0);
        assert_eq!(FrictionMode::None.factor(3.0), 0.0);
    }

    #[test]
    fn thermal_state_zero_temperature_limit() {
        let t = thermal_state(1e3, 1.0, &basis(10)).unwrap();
        let p = t.state.populations();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1..].iter().all(|&x| x < 1e-12));
    }

    #[test]
    fn thermal_population_ratio() {
        let t = thermal_state(0.1, 1.0, &basis(20)).unwrap();
        let p = t.state.populations();
        let expected = (-0.15 * PI * PI).exp();
        assert!((p[1] / p[0] - expected).abs() < 1e-14);
        assert!((p[1] / p[0] - 0.2276).abs() < 1e-4);
        assert!((t.state.trace() - 1.0).abs() < 1e-14);
        assert!(p.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn partition_function_scaling() {
        let b = basis(20);
        let z2l = partition_function(0.4, 2.0, &b).unwrap();
        let zl = partition_function(0.1, 1.0, &b).unwrap();
        assert!((z2l - zl).abs() < 1e-14 * zl);
    }

    #[test]
    fn truncation_tail_is_negligible_for_default_runs() {
        let tail = partition_tail_fraction(0.1, 0.8, &basis(20)).unwrap();
        assert!(tail < 1e-12, "{tail}");
        let tail = partition_tail_fraction(0.001, 1.0, &basis(5)).unwrap();
        assert!(tail > 0.1);
    }

    #[test]
    fn wavefunction_examples() {
        let g = PureState::ground(5);
        let v = wavefunction(&g, 1.0, &[0.5, 0.0, 1.0], Frame::Transformed).unwrap();
        assert!((v[0].re - 2f64.sqrt()).abs() < 1e-14);
        assert!(v[1].norm() < 1e-14 && v[2].norm() < 1e-14);
        let v = wavefunction(&g, 4.0, &[2.0], Frame::Physical).unwrap();
        assert!((v[0].re - 2f64.sqrt() / 2.0).abs() < 1e-14);
        assert!(matches!(
            wavefunction(&g, 1.0, &[1.5], Frame::Transformed),
            Err(Error::Domain { .. })
        ));
        assert!(wavefunction(&g, 2.0, &[1.5], Frame::Physical).is_ok());
    }

    #[test]
    fn wavefunction_is_normalised() {
        let c = DVector::from_vec(vec![
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ]);
        let s = PureState::new(c).unwrap();
        let n = 2000;
        let grid: Vec<f64> = (0..=n).map(|i| 1.7 * i as f64 / n as f64).collect();
        let psi = wavefunction(&s, 1.7, &grid, Frame::Physical).unwrap();
        let h = 1.7 / n as f64;
        let integral: f64 = psi.windows(2).map(|w| 0.5 * h * (w[0].norm_sqr() + w[1].norm_sqr())).sum();
        assert!((integral - 1.0).abs() < 1e-5);
    }

    #[test]
    fn mixed_state_validation() {
        assert!(MixedState::diagonal(&[0.5, 0.4]).is_err());
        assert!(matches!(
            MixedState::diagonal(&[1.1, -0.1]),
            Err(Error::Positivity { .. })
        ));
        let m = MixedState::diagonal(&[0.25; 4]).unwrap();
        assert!((m.purity() - 0.25).abs() < 1e-15);
        assert!(PureState::new(DVector::from_element(2, Complex64::new(1.0, 0.0))).is_err());
        assert!(PureState::eigenstate(3, 4).is_err());
    }

    #[test]
    fn state_record_round_trip() {
        let c = DVector::from_vec(vec![
            Complex64::new(0.6, 0.1),
            Complex64::new(-0.1, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        let pure = PureState::normalized(c).unwrap();
        let q: QuantumState = pure.clone().into();
        assert_eq!(QuantumState::from_record(&q.to_record()).unwrap(), q);
        let m: QuantumState = MixedState::from_pure(&pure).into();
        assert_eq!(QuantumState::from_record(&m.to_record()).unwrap(), m);
        let first = q.to_record().lines().next().unwrap().to_string();
        assert!(first.starts_with("1 "));
        assert!(QuantumState::from_record("1 0.5\n").is_err());
        assert!(QuantumState::from_record("0 1.0 0.0\n").is_err());
    }
}
