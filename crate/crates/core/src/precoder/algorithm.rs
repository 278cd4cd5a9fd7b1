use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::mse::MseModel;
use super::{PrecoderScenario, PrecoderSolution, Structure, Superposition};
use crate::error::{Error, Result};
use crate::wl::WlMatrix;

/// Starting point of the gradient projection.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// I.i.d. standard normal real entries.
    RandomWl,
    /// Strictly-linear expansion of an i.i.d. complex Gaussian matrix.
    RandomSl,
    Provided(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub gamma0: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub init: Init,
    pub seed: u64,
    /// Keep every accepted iterate in the trace.
    pub record_iterates: bool,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self { gamma0: 10.0, delta: 1e-4, max_iters: 5000, init: Init::RandomWl, seed: 0, record_iterates: false }
    }
}

impl AlgoConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) || !(self.delta > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("gamma0 and delta must be positive, max_iters nonzero".into()));
        }
        Ok(())
    }
}

/// What happened during one run of the algorithm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlgoTrace {
    /// Approximate MSE after initialization and after every accepted step.
    pub mse: Vec<f64>,
    /// Step size used by every accepted step.
    pub steps: Vec<f64>,
    /// Loop iterations including rejected candidates.
    pub iterations: usize,
    pub converged: bool,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
    /// Accepted iterates, when requested.
    pub iterates: Vec<DMatrix<f64>>,
}

pub(crate) fn initial_precoder(
    init: &Init,
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, Structure)> {
    match init {
        Init::RandomWl => {
            Ok((DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)), Structure::Wl))
        }
        Init::RandomSl => {
            let b = DMatrix::from_fn(rows / 2, cols / 2, |_, _| {
                Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            Ok((WlMatrix::strictly_linear(&b).into_inner(), Structure::Sl))
        }
        Init::Provided(p) => {
            if p.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "initial precoder is {}x{}, expected {rows}x{cols}",
                    p.nrows(),
                    p.ncols()
                )));
            }
            let s = if WlMatrix::from_real(p.clone())?.is_strictly_linear(1e-12) {
                Structure::Sl
            } else {
                Structure::Wl
            };
            Ok((p.clone(), s))
        }
    }
}

/// Gradient projection on the approximate MSE with unit-variance streams.
pub fn solve_txwfq_pi(
    scenario: &PrecoderScenario,
    pi: &Superposition,
    config: &AlgoConfig,
) -> Result<PrecoderSolution> {
    let r_s = DMatrix::identity(pi.num_streams(), pi.num_streams());
    solve_with_covariance(scenario, pi, &r_s, config)
}

pub(crate) fn solve_with_covariance(
    scenario: &PrecoderScenario,
    pi: &Superposition,
    r_s: &DMatrix<f64>,
    config: &AlgoConfig,
) -> Result<PrecoderSolution> {
    config.validate()?;
    let model = MseModel::new(scenario, pi, r_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = 2 * scenario.num_antennas();
    let (p0, structure) = initial_precoder(&config.init, rows, pi.num_streams(), &mut rng)?;

    let mut p = model.project(&p0)?;
    let terms = model.terms(&p)?;
    let mut beta = terms.optimal_beta()?;
    let mut eps = terms.mse(beta);
    let mut grad = model.gradient(&p)?.combine(beta);
    let mut gamma = config.gamma0;
    let mut trace = AlgoTrace { mse: vec![eps], initial_grad_norm: grad.norm(), ..AlgoTrace::default() };
    if config.record_iterates {
        trace.iterates.push(p.clone());
    }

    while trace.iterations < config.max_iters {
        trace.iterations += 1;
        let cand = model.project(&(&p - &grad * gamma))?;
        let cand_terms = model.terms(&cand)?;
        let cand_beta = cand_terms.optimal_beta()?;
        let cand_eps = cand_terms.mse(cand_beta);
        if cand_eps <= eps {
            let change = (eps - cand_eps).abs() / eps;
            trace.steps.push(gamma);
            trace.mse.push(cand_eps);
            p = cand;
            beta = cand_beta;
            eps = cand_eps;
            grad = model.gradient(&p)?.combine(beta);
            if config.record_iterates {
                trace.iterates.push(p.clone());
            }
            if change <= config.delta {
                trace.converged = true;
                break;
            }
        } else {
            gamma *= 0.5;
            if gamma * grad.norm() <= f64::EPSILON * p.norm() {
                trace.converged = true;
                break;
            }
        }
    }
    trace.final_grad_norm = grad.norm();

    Ok(PrecoderSolution {
        power_alloc: (&p * r_s).component_mul(&p).column_sum().map(f64::sqrt),
        precoder: p,
        beta,
        superposition: pi.clone(),
        structure,
        quantized: true,
        trace,
    })
}
