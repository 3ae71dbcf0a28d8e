//! Truncated eigenbasis of the initial box Hamiltonian.
//!
//! Working units are `ħ = 1` and `L₀ = 1`; the particle mass enters only
//! through the kinetic prefactor `ħ²/(2m)`. Quantum numbers are 1-based
//! everywhere in the public API (`n = 1` is the ground state); storage is
//! 0-based.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reduced Planck constant in working units.
pub const HBAR: f64 = 1.0;
/// Initial box length in working units.
pub const INITIAL_LENGTH: f64 = 1.0;

/// `I[n][k] = ∫₀¹ x φ_n(x) ∂ₓφ_k(x) dx` for `φ_k(x) = √2 sin(kπx)`.
///
/// Independent of the box length and of time, so it is built once per run
/// and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    entries: DMatrix<f64>,
}

impl OverlapMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Entry `I[n][k]`, 1-based.
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.entries[(n - 1, k - 1)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Closed-form overlap matrix of the first `size` box eigenstates.
pub fn overlap_matrix(size: usize) -> Result<OverlapMatrix> {
    if size < 2 {
        return Err(Error::InvalidConfiguration(format!(
            "truncation order must be at least 2, got {size}"
        )));
    }
    let entries = DMatrix::from_fn(size, size, |i, j| overlap_entry(i + 1, j + 1));
    Ok(OverlapMatrix { entries })
}

fn overlap_entry(n: usize, k: usize) -> f64 {
    if n == k {
        return -0.5;
    }
    let (nf, kf) = (n as f64, k as f64);
    let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2.0 * nf * kf / (kf * kf - nf * nf)
}

/// `E_n(L) = n²π²ħ²/(2mL²)` for `n = 1..=size`, with `m = 1`.
pub fn energy_levels(size: usize, length: f64) -> Result<Vec<f64>> {
    check_length(length)?;
    Ok((1..=size).map(|n| level(n, length, 1.0)).collect())
}

#[inline]
pub(crate) fn level(n: usize, length: f64, particle_mass: f64) -> f64 {
    let nf = n as f64;
    nf * nf * PI * PI * HBAR * HBAR / (2.0 * particle_mass * length * length)
}

pub(crate) fn check_length(length: f64) -> Result<()> {
    if length > 0.0 && length.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "box length must be positive, got {length}"
        )))
    }
}

/// The truncated basis used by a run: its size, the particle mass and the
/// cached overlap matrix. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Basis {
    particle_mass: f64,
    overlap: Arc<OverlapMatrix>,
    // I with its (constant) diagonal removed, promoted to complex once so the
    // propagator never rebuilds it.
    coupling: Arc<DMatrix<Complex64>>,
    coupling_real: Arc<DMatrix<f64>>,
}

impl Basis {
    pub fn new(size: usize, particle_mass: f64) -> Result<Self> {
        if !(particle_mass > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "particle_mass must be positive, got {particle_mass}"
            )));
        }
        let overlap = overlap_matrix(size)?;
        let coupling_real =
            DMatrix::from_fn(size, size, |i, j| if i == j { 0.0 } else { overlap.entries[(i, j)] });
        Ok(Self {
            particle_mass,
            overlap: Arc::new(overlap),
            coupling: Arc::new(coupling_real.map(|x| Complex64::new(x, 0.0))),
            coupling_real: Arc::new(coupling_real),
        })
    }

    pub fn size(&self) -> usize {
        self.overlap.size()
    }

    pub fn particle_mass(&self) -> f64 {
        self.particle_mass
    }

    pub fn overlap(&self) -> &OverlapMatrix {
        &self.overlap
    }

    /// Off-diagonal part of the overlap matrix as a complex matrix.
    pub(crate) fn coupling(&self) -> &DMatrix<Complex64> {
        &self.coupling
    }

    /// Same as [`Basis::coupling`], real and antisymmetric.
    pub(crate) fn coupling_real(&self) -> &DMatrix<f64> {
        &self.coupling_real
    }

    /// Level `n` (1-based) of the physical Hamiltonian at box length `length`.
    pub fn energy(&self, n: usize, length: f64) -> f64 {
        level(n, length, self.particle_mass)
    }

    pub fn energies(&self, length: f64) -> Result<DVector<f64>> {
        check_length(length)?;
        Ok(self.energies_unchecked(length))
    }

    pub(crate) fn energies_unchecked(&self, length: f64) -> DVector<f64> {
        DVector::from_fn(self.size(), |i, _| self.energy(i + 1, length))
    }

    /// Generator of the fixed-domain dynamics, `c' = -(i/ħ) H* c`.
    ///
    /// Diagonal: the box spectrum at `length`. Off-diagonal: `iħ(V/L) I[n][k]`,
    /// which is Hermitian because the off-diagonal part of `I` is real and
    /// antisymmetric.
    pub fn effective_hamiltonian(&self, length: f64, velocity: f64) -> Result<DMatrix<Complex64>> {
        check_length(length)?;
        Ok(self.effective_hamiltonian_unchecked(length, velocity))
    }

    pub(crate) fn effective_hamiltonian_unchecked(
        &self,
        length: f64,
        velocity: f64,
    ) -> DMatrix<Complex64> {
        let scale = Complex64::new(0.0, HBAR * velocity / length);
        let mut h = self.coupling.as_ref() * scale;
        for i in 0..self.size() {
            h[(i, i)] = Complex64::new(self.energy(i + 1, length), 0.0);
        }
        h
    }
}
