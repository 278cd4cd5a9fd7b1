//! Higher-rank quantization-aware transmit Wiener filter.
//!
//! A precoder `P` (`2Nt x 2KR`) maps `2KR` QPSK stream components to the
//! antennas, the 1-bit DACs take signs, and a diagonal power allocation
//! `D = diag(P R_s P^T)^1/2` restores the per-antenna power. Each user
//! scales its received signal by a common `beta` and expects the
//! superimposed symbol `Pi s`.

mod algorithm;
mod baseline;
mod io;
mod mse;
mod superposition;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::wl::WlMatrix;

pub use algorithm::{solve_txwfq_pi, AlgoConfig, AlgoTrace, Init};
pub use baseline::{baseline_precoder, PrecoderKind};
pub use mse::{
    mse_exact, mse_gradient, mse_gradient_terms, mse_terms, optimal_beta, project_power, MseGradient,
    MseTerms, KAPPA,
};
pub use superposition::{make_superposition, superimpose, Superposition};

/// Channel, noise and power budget for precoder design.
#[derive(Debug, Clone)]
pub struct PrecoderScenario {
    channel: WlMatrix,
    noise_var: f64,
    tx_energy: f64,
}

impl PrecoderScenario {
    /// `channel` is `H^T` (`2K x 2Nt`), `noise_var` the complex noise
    /// variance per user and `tx_energy` the sum transmit power.
    pub fn new(channel: WlMatrix, noise_var: f64, tx_energy: f64) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::Domain(format!("noise variance must be nonnegative, got {noise_var}")));
        }
        if !(tx_energy > 0.0) || !tx_energy.is_finite() {
            return Err(Error::Domain(format!("transmit energy must be positive, got {tx_energy}")));
        }
        Ok(Self { channel, noise_var, tx_energy })
    }

    /// Identity noise covariance in the stacked domain (`noise_var = 2`,
    /// unit variance per real dimension) and `E_Tx = 10^(snr/10)`.
    pub fn from_snr_db(channel: WlMatrix, snr_db: f64) -> Result<Self> {
        Self::new(channel, 2.0, 10f64.powf(snr_db / 10.0))
    }

    pub fn channel(&self) -> &WlMatrix {
        &self.channel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn tx_energy(&self) -> f64 {
        self.tx_energy
    }

    pub fn num_users(&self) -> usize {
        self.channel.half_dims().0
    }

    pub fn num_antennas(&self) -> usize {
        self.channel.half_dims().1
    }

    /// `tr(R_eta)` over the `2K` real receive dimensions.
    pub fn noise_trace(&self) -> f64 {
        self.num_users() as f64 * self.noise_var
    }

    pub fn with_channel(&self, channel: WlMatrix) -> Self {
        Self { channel, ..self.clone() }
    }
}

/// Whether a precoder was designed with full widely-linear freedom or
/// restricted to strictly-linear (complex) matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    Wl,
    Sl,
}

impl Structure {
    pub fn name(self) -> &'static str {
        match self {
            Structure::Wl => "wl",
            Structure::Sl => "sl",
        }
    }
}

/// A designed precoder together with everything the receiver side needs.
#[derive(Debug, Clone)]
pub struct PrecoderSolution {
    pub precoder: DMatrix<f64>,
    /// Diagonal of `D`; all ones when the quantizer is bypassed.
    pub power_alloc: DVector<f64>,
    pub beta: f64,
    pub superposition: Superposition,
    pub structure: Structure,
    /// `false` for designs that transmit `P s` without the 1-bit DACs.
    pub quantized: bool,
    pub trace: AlgoTrace,
}

impl PrecoderSolution {
    /// `diag(P R_s P^T)^1/2` for unit-variance streams.
    pub fn recompute_power_alloc(&self) -> DVector<f64> {
        if self.quantized {
            row_powers(&self.precoder).map(f64::sqrt)
        } else {
            DVector::from_element(self.precoder.nrows(), 1.0)
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.precoder.nrows() / 2
    }

    pub fn check_dims(&self, channel: &WlMatrix) -> Result<()> {
        let (k, nt) = channel.half_dims();
        if nt != self.num_antennas() || k != self.superposition.users() {
            return dim_err(format!(
                "solution for {} users x {} antennas used on a {k} x {nt} channel",
                self.superposition.users(),
                self.num_antennas()
            ));
        }
        if self.precoder.ncols() != self.superposition.pi().ncols() {
            return dim_err("precoder and superposition disagree on the stream count");
        }
        Ok(())
    }
}

pub(crate) fn row_powers(p: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(p.nrows(), p.row_iter().map(|r| r.norm_squared()))
}

#[cfg(test)]
mod tests;
