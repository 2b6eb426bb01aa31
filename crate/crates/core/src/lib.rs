//! Analog beamforming codebooks for full-duplex millimeter-wave transceivers.
//!
//! The crate designs transmit and receive codebooks that keep high beamforming
//! gain over a coverage region while coupling little self-interference across
//! the transmit-to-receive array channel, and evaluates them against conjugate
//! (CBF) and Taylor-windowed codebooks in a Monte Carlo link simulator.
//!
//! Module map:
//!
//! * [`arrays`] – planar array geometry and steering vectors.
//! * [`channels`] – self-interference and user channel models.
//! * [`codebooks`] – quantized weights, baseline codebooks, gain metrics.
//! * [`solver`] – the codebook design optimizer.
//! * [`linkmetrics`] – SNR/INR/SINR, rates and the normalized sum rate.
//! * [`sim`] – Monte Carlo harness and parameter sweeps.
//! * [`cli`] – configuration and command front end.

pub mod arrays;
pub mod channels;
pub mod cli;
pub mod codebooks;
pub mod error;
pub mod linalg;
pub mod linkmetrics;
pub mod rng;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use num_complex::Complex64;
