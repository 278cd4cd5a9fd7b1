//! Linear transmit processing for multi-user MISO downlinks whose base
//! station drives every antenna through a pair of 1-bit DACs.
//!
//! The crate is organised bottom-up:
//!
//! - [`wl`]: real-valued widely-linear (WL) vectors, matrices and covariances.
//! - [`quantize`]: sign quantizer statistics (arcsine law, Bussgang gain and
//!   distortion covariance, Taylor approximation of the arcsine).
//! - [`rate`]: SQINR-based sum-rate lower bound and the rank/properness
//!   constrained transmit-covariance optimizer.
//! - [`precoder`]: the higher-rank quantized transmit Wiener filter designed
//!   by gradient projection, plus MF/ZF/TxWF baselines.
//! - [`sim`]: channel generation, CSI errors, link-level Monte-Carlo and
//!   ergodic sweeps.
//! - [`cli`]: experiment configuration, CSV emission and the validation suite
//!   behind the `qml` binary.
//!
//! All public math is real-valued. A complex vector `a` of length `N` maps to
//! `[Re a; Im a]` of length `2N`, and a complex matrix `B` to
//! `[[Re B, -Im B], [Im B, Re B]]`.

pub mod cli;
pub mod error;
pub mod precoder;
pub mod quantize;
pub mod rate;
pub mod sim;
pub mod wl;

pub use error::{Error, Result};

/// `sqrt(2/pi)`, the Bussgang gain of a unit-variance sign quantizer.
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `2/pi`.
pub const TWO_OVER_PI: f64 = std::f64::consts::FRAC_2_PI;
