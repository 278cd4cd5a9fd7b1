use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::algorithm::solve_with_covariance;
use super::mse::MseModel;
use super::{
    make_superposition, project_power, AlgoConfig, AlgoTrace, Init, PrecoderScenario, PrecoderSolution,
    Structure, Superposition,
};
use crate::error::{Error, Result};

/// Reference precoders compared against the superposition design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrecoderKind {
    Mf,
    Zf,
    /// Transmit Wiener filter without the 1-bit DACs.
    TxWfUnquantized,
    /// One stream per user: the gradient projection run on the
    /// superimposed symbols directly.
    TxWfqChannelRank,
}

impl PrecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            PrecoderKind::Mf => "mf",
            PrecoderKind::Zf => "zf",
            PrecoderKind::TxWfUnquantized => "txwf_unq",
            PrecoderKind::TxWfqChannelRank => "txwfq",
        }
    }
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(PrecoderKind::Mf),
            "zf" => Ok(PrecoderKind::Zf),
            "txwf_unq" => Ok(PrecoderKind::TxWfUnquantized),
            "txwfq" => Ok(PrecoderKind::TxWfqChannelRank),
            other => Err(Error::Config(format!("unknown baseline precoder `{other}`"))),
        }
    }
}

fn regularized_inverse(h: &DMatrix<f64>, loading: f64) -> Result<DMatrix<f64>> {
    let mut gram = h * h.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += loading;
    }
    let inv = gram.try_inverse().ok_or(Error::Singular { cond: f64::INFINITY })?;
    Ok(h.transpose() * inv)
}

/// Builds a baseline for the streams described by `pi` (unit-variance
/// QPSK components). `config` drives the channel-rank gradient projection
/// and is ignored by the closed-form designs.
pub fn baseline_precoder(
    scenario: &PrecoderScenario,
    pi: &Superposition,
    kind: PrecoderKind,
    config: &AlgoConfig,
) -> Result<PrecoderSolution> {
    let (k, nt) = (scenario.num_users(), scenario.num_antennas());
    if k > nt {
        return Err(Error::Domain(format!("{k} users exceed {nt} antennas")));
    }
    if pi.users() != k {
        return Err(Error::Dimension(format!("superposition for {} users, channel has {k}", pi.users())));
    }
    let h = scenario.channel().data();
    let streams = pi.num_streams();
    let r_s = DMatrix::identity(streams, streams);
    let closed_form = |precoder: DMatrix<f64>, quantized: bool, beta: f64| PrecoderSolution {
        power_alloc: if quantized {
            super::row_powers(&precoder).map(f64::sqrt)
        } else {
            nalgebra::DVector::from_element(precoder.nrows(), 1.0)
        },
        precoder,
        beta,
        superposition: pi.clone(),
        structure: Structure::Sl,
        quantized,
        trace: AlgoTrace::default(),
    };

    match kind {
        PrecoderKind::Mf | PrecoderKind::Zf => {
            let f = if kind == PrecoderKind::Mf { h.transpose() } else { regularized_inverse(h, 0.0)? };
            let p = project_power(&(f * pi.pi()), &r_s, scenario.tx_energy())?;
            let beta = MseModel::new(scenario, pi, &r_s)?.terms(&p)?.optimal_beta()?;
            Ok(closed_form(p, true, beta))
        }
        PrecoderKind::TxWfUnquantized => {
            let loading = scenario.noise_trace() / scenario.tx_energy();
            let f = regularized_inverse(h, loading)? * pi.pi();
            let power = f.norm_squared();
            if !(power > 0.0) {
                return Err(Error::Domain("Wiener filter carries no power".into()));
            }
            let beta = (power / scenario.tx_energy()).sqrt();
            Ok(closed_form(f / beta, false, beta))
        }
        PrecoderKind::TxWfqChannelRank => {
            let symbols = make_superposition(k, 1)?;
            let symbol_cov = pi.pi() * pi.pi().transpose();
            let cfg = AlgoConfig { init: Init::RandomSl, record_iterates: false, ..config.clone() };
            let inner = solve_with_covariance(scenario, &symbols, &symbol_cov, &cfg)?;
            let p = &inner.precoder * pi.pi();
            Ok(PrecoderSolution {
                power_alloc: super::row_powers(&p).map(f64::sqrt),
                precoder: p,
                beta: inner.beta,
                superposition: pi.clone(),
                structure: Structure::Sl,
                quantized: true,
                trace: inner.trace,
            })
        }
    }
}
