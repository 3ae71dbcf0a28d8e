//! A quantum particle in a one-dimensional box whose wall moves classically.
//!
//! The wall obeys Newton's law under the particle's pressure, a constant
//! external pressure and viscous friction. The particle is propagated in the
//! fixed-domain (dilated) frame over the lowest `K` eigenstates of the initial
//! box, optionally with pure dephasing in the instantaneous eigenbasis of the
//! effective Hamiltonian. [`thermo`] turns recorded runs into entropy
//! production, friction work, free-energy differences and two-point work
//! statistics.

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod io;
mod linalg;
pub mod state;
pub mod thermo;

pub use basis::{energy_levels, overlap_matrix, Basis, OverlapMatrix, HBAR, INITIAL_LENGTH};
pub use dynamics::{
    dephase, pressure, select_time_step, simulate, simulate_with, wall_derivatives, Mode,
    Propagator, RunOptions, Sample, Trajectory,
};
pub use error::{Error, Result};
pub use state::{
    physical_overlap, thermal_state, wavefunction, FrictionMode, Frame, InitialState, MixedState, PureState,
    QuantumState, SimParams, ThermalState, WallState,
};
pub use linalg::hermitian_residual;
