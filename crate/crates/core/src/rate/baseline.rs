use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::optimize::{CovarianceSolution, OptimizerTrace};
use super::{RateEvaluator, RateScenario};
use crate::error::{Error, Result};
use crate::wl::WlCovariance;

/// Classical strictly-linear precoders used as reference points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearKind {
    /// Matched filter, `P = H`.
    Mf,
    /// Zero forcing, `P = H (H^T H)^-1`.
    Zf,
    /// Regularized inverse with loading `K sigma^2 / E_Tx`.
    Mmse,
}

impl LinearKind {
    pub const ALL: [LinearKind; 3] = [LinearKind::Mmse, LinearKind::Zf, LinearKind::Mf];

    pub fn name(self) -> &'static str {
        match self {
            LinearKind::Mf => "mf",
            LinearKind::Zf => "zf",
            LinearKind::Mmse => "mmse",
        }
    }
}

impl fmt::Display for LinearKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinearKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(LinearKind::Mf),
            "zf" => Ok(LinearKind::Zf),
            "mmse" => Ok(LinearKind::Mmse),
            other => Err(Error::Config(format!("unknown linear precoder `{other}`"))),
        }
    }
}

/// The `2Nt x 2K` precoder matrix (unnormalized). Column `k` and `K + k`
/// carry user `k`'s complex stream.
pub fn baseline_precoder_matrix(scenario: &RateScenario, kind: LinearKind) -> Result<DMatrix<f64>> {
    let (k, nt) = (scenario.num_users(), scenario.num_antennas());
    if k > nt {
        return Err(Error::Domain(format!("{k} users exceed {nt} antennas")));
    }
    let h = scenario.channel().data();
    let ht = h.transpose();
    match kind {
        LinearKind::Mf => Ok(ht),
        LinearKind::Zf => {
            let gram = h * &ht;
            let inv = gram
                .clone()
                .try_inverse()
                .ok_or(Error::Singular { cond: f64::INFINITY })?;
            let cond = condition(&gram);
            if cond > crate::quantize::MAX_CONDITION {
                return Err(Error::Singular { cond });
            }
            Ok(ht * inv)
        }
        LinearKind::Mmse => {
            let loading = k as f64 * scenario.noise_var() / scenario.tx_energy();
            let mut gram = h * &ht;
            for i in 0..gram.nrows() {
                gram[(i, i)] += loading;
            }
            let inv = gram.try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })?;
            Ok(ht * inv)
        }
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Per-user covariances of a classical precoder with unit-variance
/// streams, scaled so the total trace is `2 Nt`.
pub fn baseline_covariance(scenario: &RateScenario, kind: LinearKind) -> Result<CovarianceSolution> {
    let p = baseline_precoder_matrix(scenario, kind)?;
    let users = scenario.num_users();
    let n = p.nrows();
    let mut covs: Vec<DMatrix<f64>> = (0..users)
        .map(|u| {
            let mut cols = DMatrix::zeros(n, 2);
            cols.column_mut(0).copy_from(&p.column(u));
            cols.column_mut(1).copy_from(&p.column(users + u));
            &cols * cols.transpose()
        })
        .collect();
    let total: f64 = covs.iter().map(|c| c.trace()).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("precoder carries no power".into()));
    }
    let scale = scenario.tx_energy() / total;
    for c in &mut covs {
        *c *= scale;
    }
    let sum_rate_lb = RateEvaluator::new(scenario).value(&covs)?;
    Ok(CovarianceSolution {
        per_user_cov: covs.into_iter().map(WlCovariance::from_symmetric_unchecked).collect(),
        ranks: vec![1; users],
        proper_constrained: true,
        sum_rate_lb,
        optimizer_trace: OptimizerTrace::default(),
    })
}
