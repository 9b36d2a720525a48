//! Filter functions and error transfer matrices for piecewise-constant
//! control pulses subject to classical, correlated noise.
//!
//! Frequencies are angular throughout (rad per time unit). Spectra are
//! two-sided with `⟨b²⟩ = ∫ dω/2π S(ω)`.
pub mod basis;
pub mod control_matrix;
pub mod error;
pub mod error_channel;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod pulse;
pub mod spectrum;

pub use basis::{Basis, BasisKind, TraceTensor};
pub use control_matrix::{concatenate, concatenate_periodic, single_pulse_control_matrix, ControlMatrix};
pub use error::{Error, ErrorCategory, Result};
pub use error_channel::{ChannelOptions, ErrorChannel, TransferMode};
pub use linalg::{CMat, RMat};
pub use pulse::{ControlTerm, NoiseTerm, PulseSequence};
pub use spectrum::Spectrum;
