//! Achievable-rate lower bound of the quantized downlink.
//!
//! With the Bussgang model `t = A x + q` the received signal of user `k` is
//! `y_k = H_k^T A x + H_k^T q + eta_k`. Treating multi-user interference,
//! quantization error and noise as Gaussian gives the per-user bound
//! `1/2 log2 det(I_2 + SQINR_k)`.

mod baseline;
mod objective;
mod optimize;

use nalgebra::{DMatrix, Matrix2};

use crate::error::{dim_err, Error, Result};
use crate::quantize::{self, inv_sqrt_diag};
use crate::wl::{WlCovariance, WlMatrix};
use crate::SQRT_2_OVER_PI;

pub use baseline::{baseline_covariance, baseline_precoder_matrix, LinearKind};
pub use objective::RateEvaluator;
pub use optimize::{
    optimize_covariances, CholeskyFactor, CovarianceSolution, OptimizerOptions, OptimizerTrace,
};

/// Channel and noise level for the rate analysis. The transmit energy is
/// fixed to `2 Nt` (unit-power quantizer outputs, `D = I`).
#[derive(Debug, Clone)]
pub struct RateScenario {
    channel: WlMatrix,
    noise_var: f64,
    num_users: usize,
    num_antennas: usize,
}

impl RateScenario {
    /// `channel` is the `2K x 2Nt` WL matrix `H^T`; `noise_var` the complex
    /// noise variance per user (`sigma^2 / 2` per real dimension).
    pub fn new(channel: WlMatrix, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {noise_var}")));
        }
        if !channel.is_strictly_linear(1e-12) {
            return Err(Error::Domain("channel must be strictly linear".into()));
        }
        let (num_users, num_antennas) = channel.half_dims();
        Ok(Self { channel, noise_var, num_users, num_antennas })
    }

    /// Noise variance from `E_Tx / sigma^2` in dB with `E_Tx = 2 Nt`.
    pub fn from_snr_db(channel: WlMatrix, snr_db: f64) -> Result<Self> {
        let nt = channel.half_dims().1;
        let noise = 2.0 * nt as f64 / 10f64.powf(snr_db / 10.0);
        Self::new(channel, noise)
    }

    pub fn channel(&self) -> &WlMatrix {
        &self.channel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn tx_energy(&self) -> f64 {
        2.0 * self.num_antennas as f64
    }

    /// Rows `k` and `K + k` of `H^T`: the real and imaginary receive
    /// dimensions of user `k`.
    pub fn user_rows(&self, k: usize) -> DMatrix<f64> {
        user_rows(self.channel.data(), self.num_users, k)
    }

    fn check_covs(&self, covs: &[WlCovariance]) -> Result<()> {
        if covs.len() != self.num_users {
            return dim_err(format!("{} covariances for {} users", covs.len(), self.num_users));
        }
        let n = 2 * self.num_antennas;
        if let Some(c) = covs.iter().find(|c| c.data().nrows() != n) {
            return dim_err(format!("covariance is {0}x{0}, expected {n}x{n}", c.data().nrows()));
        }
        Ok(())
    }
}

pub(crate) fn user_rows(h: &DMatrix<f64>, users: usize, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(2, h.ncols());
    out.row_mut(0).copy_from(&h.row(k));
    out.row_mut(1).copy_from(&h.row(users + k));
    out
}

/// `H^T A` for the Bussgang gain of `R_x`. By Price's theorem
/// `A = R_tx R_x^-1 = sqrt(2/pi) diag(R_x)^-1/2`, which also covers
/// rank-deficient `R_x`.
pub fn effective_channel(scenario: &RateScenario, r_x: &WlCovariance) -> Result<WlMatrix> {
    if r_x.data().nrows() != 2 * scenario.num_antennas {
        return dim_err("covariance size does not match the channel");
    }
    let s = inv_sqrt_diag(r_x.data())?;
    let mut h = scenario.channel.data().clone();
    for (j, mut col) in h.column_iter_mut().enumerate() {
        col *= SQRT_2_OVER_PI * s[j];
    }
    WlMatrix::from_real(h)
}

fn total_covariance(covs: &[WlCovariance]) -> WlCovariance {
    let n = covs[0].data().nrows();
    let sum = covs.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + c.data());
    WlCovariance::from_symmetric_unchecked(sum)
}

/// Interference-plus-noise and signal terms for user `k`.
fn sqinr_terms(
    scenario: &RateScenario,
    covs: &[WlCovariance],
    k: usize,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    scenario.check_covs(covs)?;
    if k >= scenario.num_users {
        return dim_err(format!("user {k} out of range"));
    }
    let total = total_covariance(covs);
    let h_eff = effective_channel(scenario, &total)?;
    let g_k = user_rows(h_eff.data(), scenario.num_users, k);
    let h_k = scenario.user_rows(k);

    // R_q = R_t - A R_x A^T
    let gain_diag = inv_sqrt_diag(total.data())? * SQRT_2_OVER_PI;
    let a = DMatrix::from_diagonal(&gain_diag);
    let r_q = quantize::r_t(&total)?.into_inner() - &a * total.data() * &a;

    let n = total.data().nrows();
    let others = covs
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != k)
        .fold(DMatrix::zeros(n, n), |acc, (_, c)| acc + c.data());
    let mui = &g_k * others * g_k.transpose();
    let qe = &h_k * r_q * h_k.transpose();
    let awgn = DMatrix::identity(2, 2) * (0.5 * scenario.noise_var);
    let noise = to_m2(&(mui + qe + awgn));
    let signal = to_m2(&(&g_k * covs[k].data() * g_k.transpose()));
    Ok((noise, signal))
}

fn to_m2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// `(MUI + QE + AWGN)^-1 H_eff,k^T R_k H_eff,k`.
pub fn sqinr(scenario: &RateScenario, covs: &[WlCovariance], k: usize) -> Result<Matrix2<f64>> {
    let (noise, signal) = sqinr_terms(scenario, covs, k)?;
    let det = noise.determinant();
    if !(det.abs() > 1e-300) {
        return Err(Error::Singular { cond: f64::INFINITY });
    }
    let inv = noise.try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })?;
    Ok(inv * signal)
}

/// `1/2 log2 det(I_2 + SQINR_k)` in bits per channel use.
pub fn user_rate_lb(scenario: &RateScenario, covs: &[WlCovariance], k: usize) -> Result<f64> {
    let s = sqinr(scenario, covs, k)?;
    Ok(rate_from_sqinr(&s))
}

pub fn rate_from_sqinr(s: &Matrix2<f64>) -> f64 {
    let det = (Matrix2::identity() + s).determinant();
    (0.5 * det.log2()).max(0.0)
}

/// Sum of the per-user bounds.
pub fn sum_rate_lb(scenario: &RateScenario, covs: &[WlCovariance]) -> Result<f64> {
    (0..scenario.num_users).map(|k| user_rate_lb(scenario, covs, k)).sum()
}
