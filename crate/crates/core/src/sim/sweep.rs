use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use super::{run_link, stream_rng, thread_pool, write_atomic, ChannelSet, Purpose};
use crate::error::{Error, Result};
use crate::precoder::{
    baseline_precoder, make_superposition, solve_txwfq_pi, AlgoConfig, Init, PrecoderKind, PrecoderScenario,
    Structure,
};
use crate::rate::{
    baseline_covariance, optimize_covariances, CovarianceSolution, LinearKind, OptimizerOptions, RateEvaluator,
    RateScenario,
};

/// Column order of [`SweepResult::to_csv`].
pub const CSV_COLUMNS: [&str; 12] = [
    "snr_db",
    "method",
    "ber",
    "ber_ci",
    "mse",
    "mse_ci",
    "sum_rate_lb",
    "mean_iters",
    "n_channels",
    "block_len",
    "seed",
    "xi",
];

const CSV_SCHEMA: u32 = 1;

/// How the SNR axis is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnrMode {
    /// `E_Tx = 2 Nt` fixed, noise variance varied.
    Rate,
    /// Identity noise covariance per real dimension, `E_Tx` varied.
    Precoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub nt: usize,
    pub k: usize,
    /// Streams per user for the superposition designs.
    pub streams: usize,
    pub snr_grid: Vec<f64>,
    pub block_len: usize,
    pub n_channels: usize,
    pub seed: u64,
    pub mode: SnrMode,
    pub xi: f64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.nt == 0 || self.k == 0 {
            return bad("nt and k must be positive".into());
        }
        if self.k > self.nt {
            return bad(format!("k = {} exceeds nt = {}", self.k, self.nt));
        }
        if self.streams == 0 || self.streams > self.nt {
            return bad(format!("streams must lie in 1..={}", self.nt));
        }
        if self.block_len == 0 || self.n_channels == 0 {
            return bad("block length and channel count must be at least one".into());
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("SNR grid must be a nonempty list of finite values".into());
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return bad(format!("xi = {} outside [0, 1]", self.xi));
        }
        Ok(())
    }
}

/// One curve of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Superposition precoder from the gradient projection.
    TxwfqPi(Structure),
    Baseline(PrecoderKind),
    /// Optimized transmit covariances of the given rank per user.
    Covariance { rank: usize, proper: bool },
    /// Covariances of a classical linear precoder.
    LinearCovariance(LinearKind),
}

impl Method {
    pub fn is_rate(self) -> bool {
        matches!(self, Method::Covariance { .. } | Method::LinearCovariance(_))
    }

    pub fn name(self) -> String {
        match self {
            Method::TxwfqPi(s) => format!("txwfq_pi_{}", s.name()),
            Method::Baseline(k) => k.name().to_string(),
            Method::Covariance { rank, proper } => {
                format!("{}_r{rank}", if proper { "proper" } else { "improper" })
            }
            Method::LinearCovariance(k) => format!("{}_cov", k.name()),
        }
    }

    /// Curves of the achievable-rate figure.
    pub fn rate_defaults() -> Vec<Method> {
        let mut v: Vec<Method> = [2, 1]
            .into_iter()
            .flat_map(|rank| [false, true].map(|proper| Method::Covariance { rank, proper }))
            .collect();
        v.extend(LinearKind::ALL.map(Method::LinearCovariance));
        v
    }

    /// Curves of the BER figure.
    pub fn precoder_defaults() -> Vec<Method> {
        vec![
            Method::TxwfqPi(Structure::Wl),
            Method::TxwfqPi(Structure::Sl),
            Method::Baseline(PrecoderKind::TxWfqChannelRank),
            Method::Baseline(PrecoderKind::TxWfUnquantized),
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "txwfq_pi_wl" => return Ok(Method::TxwfqPi(Structure::Wl)),
            "txwfq_pi_sl" => return Ok(Method::TxwfqPi(Structure::Sl)),
            _ => {}
        }
        if let Some(kind) = s.strip_suffix("_cov") {
            return Ok(Method::LinearCovariance(kind.parse()?));
        }
        for (prefix, proper) in [("improper_r", false), ("proper_r", true)] {
            if let Some(rank) = s.strip_prefix(prefix) {
                let rank = rank
                    .parse::<usize>()
                    .ok()
                    .filter(|&r| r > 0)
                    .ok_or_else(|| Error::Config(format!("bad rank in method `{s}`")))?;
                return Ok(Method::Covariance { rank, proper });
            }
        }
        s.parse::<PrecoderKind>()
            .map(Method::Baseline)
            .map_err(|_| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Algorithm settings shared by every design in a sweep. Their seeds are
/// replaced by per-channel seeds.
#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub algo: AlgoConfig,
    pub optimizer: OptimizerOptions,
}

/// Per-channel values behind one point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSamples {
    pub ber: Vec<f64>,
    pub mse: Vec<f64>,
    pub rate: Vec<f64>,
    pub iterations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub xi: f64,
    pub method: Method,
    pub ber: Option<f64>,
    pub ber_ci: Option<f64>,
    pub mse: Option<f64>,
    pub mse_ci: Option<f64>,
    pub sum_rate_lb: Option<f64>,
    pub sum_rate_ci: Option<f64>,
    pub mean_iters: Option<f64>,
    pub n_channels: usize,
    pub block_len: Option<usize>,
    pub seed: u64,
    pub samples: PointSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Configuration echo written into the CSV header.
    pub header: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, method: Method, snr_db: f64, xi: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.method == method && p.snr_db == snr_db && p.xi == xi)
    }

    /// Points of one method in sweep order.
    pub fn curve(&self, method: Method) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.method == method).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# qml {} schema={CSV_SCHEMA} {}", env!("CARGO_PKG_VERSION"), self.header);
        let _ = writeln!(out, "{}", CSV_COLUMNS.join(","));
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                p.snr_db,
                p.method,
                opt(p.ber),
                opt(p.ber_ci),
                opt(p.mse),
                opt(p.mse_ci),
                opt(p.sum_rate_lb),
                opt(p.mean_iters),
                p.n_channels,
                p.block_len.map(|b| b.to_string()).unwrap_or_default(),
                p.seed,
                p.xi
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Mean and 95% normal confidence half-width.
fn mean_ci(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    ber: Option<f64>,
    mse: Option<f64>,
    rate: Option<f64>,
    iterations: Option<f64>,
}

fn design_seed(seed: u64, index: u64) -> u64 {
    stream_rng(seed, index, Purpose::Design).random()
}

fn precoder_samples(
    config: &LinkConfig,
    methods: &[Method],
    opts: &SweepOptions,
    chan: &ChannelSet,
    index: u64,
    snr: f64,
) -> Result<Vec<Sample>> {
    let scenario = PrecoderScenario::from_snr_db(chan.est_channel.clone(), snr)?;
    let pi = make_superposition(config.k, config.streams)?;
    let seed = design_seed(config.seed, index);
    methods
        .iter()
        .map(|&m| {
            let solution = match m {
                Method::TxwfqPi(structure) => {
                    let init = if structure == Structure::Wl { Init::RandomWl } else { Init::RandomSl };
                    let cfg = AlgoConfig { init, seed, ..opts.algo.clone() };
                    solve_txwfq_pi(&scenario, &pi, &cfg)?
                }
                Method::Baseline(kind) => {
                    let cfg = AlgoConfig { seed, ..opts.algo.clone() };
                    baseline_precoder(&scenario, &pi, kind, &cfg)?
                }
                _ => return Err(Error::Config(format!("{m} is not a precoder method"))),
            };
            let mut rng = stream_rng(config.seed, index, Purpose::Link);
            let stats = run_link(&solution, chan, scenario.noise_var(), config.block_len, &mut rng)?;
            let iterative = matches!(m, Method::TxwfqPi(_) | Method::Baseline(PrecoderKind::TxWfqChannelRank));
            Ok(Sample {
                ber: Some(stats.ber),
                mse: Some(stats.mse),
                rate: None,
                iterations: iterative.then_some(solution.trace.iterations as f64),
            })
        })
        .collect()
}

fn rate_samples(
    config: &LinkConfig,
    methods: &[Method],
    opts: &SweepOptions,
    chan: &ChannelSet,
    index: u64,
    snr: f64,
) -> Result<Vec<Sample>> {
    let design = RateScenario::from_snr_db(chan.est_channel.clone(), snr)?;
    let truth = RateEvaluator::new(&RateScenario::from_snr_db(chan.true_channel.clone(), snr)?);
    let seed = design_seed(config.seed, index);
    let covs = |s: &CovarianceSolution| -> Vec<_> { s.per_user_cov.iter().map(|c| c.data().clone()).collect() };

    let mut optimized: Vec<(usize, bool)> = methods
        .iter()
        .filter_map(|m| match *m {
            Method::Covariance { rank, proper } => Some((rank, proper)),
            _ => None,
        })
        .collect();
    optimized.sort_by_key(|&(rank, proper)| (rank, !proper));
    optimized.dedup();

    let mmse = if optimized.is_empty() { None } else { Some(baseline_covariance(&design, LinearKind::Mmse)?) };
    let mut solved: Vec<((usize, bool), CovarianceSolution)> = Vec::new();
    for &(rank, proper) in &optimized {
        let mut warm = vec![mmse.as_ref().map(|s| s.per_user_cov.clone()).unwrap_or_default()];
        for ((r, p), sol) in &solved {
            if *r <= rank && (*p || !proper) {
                warm.push(sol.per_user_cov.clone());
            }
        }
        let options = OptimizerOptions { seed, warm_starts: warm, ..opts.optimizer.clone() };
        let sol = optimize_covariances(&design, &vec![rank; config.k], proper, &options)?;
        solved.push(((rank, proper), sol));
    }

    methods
        .iter()
        .map(|&m| {
            let (sol, iterations) = match m {
                Method::Covariance { rank, proper } => {
                    let sol = &solved.iter().find(|(key, _)| *key == (rank, proper)).expect("solved above").1;
                    (sol.clone(), Some(sol.optimizer_trace.iterations as f64))
                }
                Method::LinearCovariance(kind) => (baseline_covariance(&design, kind)?, None),
                _ => return Err(Error::Config(format!("{m} is not a rate method"))),
            };
            Ok(Sample { ber: None, mse: None, rate: Some(truth.value(&covs(&sol))?), iterations })
        })
        .collect()
}

/// Ergodic averages of every method over `config.n_channels` channel
/// realizations at every SNR point. Channels are processed in parallel;
/// results do not depend on the number of workers.
pub fn ergodic_sweep(config: &LinkConfig, methods: &[Method], opts: &SweepOptions) -> Result<SweepResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    let rate_mode = config.mode == SnrMode::Rate;
    if let Some(m) = methods.iter().find(|m| m.is_rate() != rate_mode) {
        return Err(Error::Config(format!("method {m} does not belong to this sweep mode")));
    }
    let pool = thread_pool()?;
    let per_channel: Vec<Vec<Vec<Sample>>> = pool.install(|| {
        (0..config.n_channels as u64)
            .into_par_iter()
            .map(|index| {
                let chan = ChannelSet::generate(config.nt, config.k, config.xi, config.seed, index)?;
                config
                    .snr_grid
                    .iter()
                    .map(|&snr| {
                        if rate_mode {
                            rate_samples(config, methods, opts, &chan, index, snr)
                        } else {
                            precoder_samples(config, methods, opts, &chan, index, snr)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut points = Vec::new();
    for (si, &snr) in config.snr_grid.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            let pick = |f: fn(&Sample) -> Option<f64>| -> Vec<f64> {
                per_channel.iter().filter_map(|c| f(&c[si][mi])).collect()
            };
            let samples = PointSamples {
                ber: pick(|s| s.ber),
                mse: pick(|s| s.mse),
                rate: pick(|s| s.rate),
                iterations: pick(|s| s.iterations),
            };
            let stat = |v: &[f64]| if v.is_empty() { (None, None) } else { let (m, c) = mean_ci(v); (Some(m), Some(c)) };
            let (ber, ber_ci) = stat(&samples.ber);
            let (mse, mse_ci) = stat(&samples.mse);
            let (sum_rate_lb, sum_rate_ci) = stat(&samples.rate);
            points.push(SweepPoint {
                snr_db: snr,
                xi: config.xi,
                method,
                ber,
                ber_ci,
                mse,
                mse_ci,
                sum_rate_lb,
                sum_rate_ci,
                mean_iters: stat(&samples.iterations).0,
                n_channels: config.n_channels,
                block_len: (!rate_mode).then_some(config.block_len),
                seed: config.seed,
                samples,
            });
        }
    }
    Ok(SweepResult { header: echo(config, methods), points })
}

/// Runs [`ergodic_sweep`] for every CSI error variance in `xi_grid`
/// (sorted ascending). The same channels and estimation-error draws are
/// reused across the grid.
pub fn csi_sweep(
    config: &LinkConfig,
    xi_grid: &[f64],
    methods: &[Method],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if xi_grid.is_empty() {
        return Err(Error::Config("xi grid is empty".into()));
    }
    let mut grid = xi_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut points = Vec::new();
    for &xi in &grid {
        let cfg = LinkConfig { xi, ..config.clone() };
        points.extend(ergodic_sweep(&cfg, methods, opts)?.points);
    }
    let xs: Vec<String> = grid.iter().map(f64::to_string).collect();
    Ok(SweepResult { header: format!("{} xi_grid={}", echo(config, methods), xs.join(";")), points })
}

fn echo(config: &LinkConfig, methods: &[Method]) -> String {
    let join = |v: Vec<String>| v.join(";");
    format!(
        "mode={} nt={} k={} streams={} snr={} channels={} block_len={} seed={} xi={} methods={}",
        match config.mode {
            SnrMode::Rate => "rate",
            SnrMode::Precoder => "precoder",
        },
        config.nt,
        config.k,
        config.streams,
        join(config.snr_grid.iter().map(f64::to_string).collect()),
        config.n_channels,
        config.block_len,
        config.seed,
        config.xi,
        join(methods.iter().map(|m| m.name()).collect()),
    )
}
