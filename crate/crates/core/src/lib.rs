//! Two-spin Hartmann-Hahn transfer driven by frequency-modulated sech pulses.
//!
//! The crate covers the product-operator algebra of two coupled spins
//! ([`operators`]), sech pulse design ([`pulse`]), time-ordered propagation
//! ([`dynamics`]), zero-/double-quantum analysis ([`mq`]) and offset-grid
//! experiments ([`experiments`]). Frequencies are rad/s internally; the
//! scalar coupling and all grid offsets are in Hz.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod mq;
pub mod operators;
pub mod pulse;
pub mod su2;
pub mod validation;

pub use dynamics::{CouplingTensor, PulsePair, RotationTriple, Spin, SpinSystem};
pub use error::{Error, Result};
pub use experiments::{BandEstimate, OffsetGrid, Observable, Sequence, SweepResult};
pub use mq::{TransferCoeffs, ZQDQParams};
pub use operators::{BasisLabel, Operator4, ProductOperatorCoeffs};
pub use pulse::{DesignRule, Pulse, PulseShape, PulseSpec, PulseWaveform, SweepOrigin};
