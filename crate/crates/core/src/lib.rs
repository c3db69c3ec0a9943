//! Dynamical control switching (DCS) for coupling spins with mismatched
//! energies.
//!
//! The crate is organised bottom-up:
//!
//! * [`spin`]: composite electron–nuclear Hilbert space, operators, states
//!   and the rotating-frame Hamiltonian.
//! * [`waveform`]: modulation waveforms and the resonance analytics (dynamic
//!   phase, coupling factor, `η`, `J`, optimal duty cycle).
//! * [`dynamics`]: exact piecewise propagation and effective-Hamiltonian
//!   oracles.
//! * [`protocols`]: DCS sensing/DNP, PM and TOP-DNP experiment families.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below fix the scalar type.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod protocols;
pub mod quadrature;
pub mod scalar;
pub mod spin;
pub mod waveform;

pub use error::{DcsError, Result};
pub use scalar::{Real, C, CMatrix, CVector};

pub use dynamics::{IntegrationPolicy, Trajectory};
pub use protocols::{Drive, ProtocolSpec, PulseTrain, SweepResult};
pub use spin::{InitialStateKind, Nucleus, Observable, QuantumState, Species, SpinSystem};
pub use waveform::{DcsWaveform, PmWaveform, Waveform};

pub type SpinSystem64 = SpinSystem<f64>;
pub type Nucleus64 = Nucleus<f64>;
pub type QuantumState64 = QuantumState<f64>;
pub type Observable64 = Observable<f64>;
pub type Waveform64 = Waveform<f64>;
pub type DcsWaveform64 = DcsWaveform<f64>;
pub type PmWaveform64 = PmWaveform<f64>;
pub type PulseTrain64 = PulseTrain<f64>;
pub type IntegrationPolicy64 = IntegrationPolicy<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type ProtocolSpec64 = ProtocolSpec<f64>;
pub type SweepResult64 = SweepResult<f64>;

pub type SpinSystem32 = SpinSystem<f32>;
pub type Nucleus32 = Nucleus<f32>;
pub type QuantumState32 = QuantumState<f32>;
pub type Waveform32 = Waveform<f32>;
pub type DcsWaveform32 = DcsWaveform<f32>;
pub type IntegrationPolicy32 = IntegrationPolicy<f32>;
pub type Trajectory32 = Trajectory<f32>;
