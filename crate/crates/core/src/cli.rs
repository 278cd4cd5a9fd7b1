//! Experiment configuration, the validation suite and the `qml` command line.
//!
//! Settings are resolved in three layers: built-in defaults for the chosen
//! command, then an optional `key = value` file (`--config`), then flags.
//! Everything is validated before the first channel is drawn, and output is
//! written only after a run has finished.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::precoder::{make_superposition, mse_gradient, mse_terms, superimpose, PrecoderScenario};
use crate::quantize::oracle::{price_check_with, StatsImpl};
use crate::rate::{sum_rate_lb, RateEvaluator, RateScenario};
use crate::sim::{csi_sweep, draw_channel, ergodic_sweep, LinkConfig, Method, SnrMode, SweepOptions, SweepResult};
use crate::wl::{WlCovariance, WlMatrix, WlVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    RateSweep,
    PrecoderSweep,
    CsiSweep,
}

/// Everything needed to reproduce one sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub link: LinkConfig,
    /// CSI error variances for [`Mode::CsiSweep`].
    pub xi_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub options: SweepOptions,
    /// `None` writes the CSV to standard output.
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(mode: Mode) -> Self {
        let grid = |lo: i32, hi: i32, step: i32| (lo..=hi).step_by(step as usize).map(f64::from).collect();
        let link = match mode {
            Mode::RateSweep => LinkConfig {
                nt: 16,
                k: 2,
                streams: 1,
                snr_grid: grid(-20, 20, 5),
                block_len: 1,
                n_channels: 200,
                seed: 1,
                mode: SnrMode::Rate,
                xi: 0.0,
            },
            Mode::PrecoderSweep | Mode::CsiSweep => LinkConfig {
                nt: 128,
                k: 4,
                streams: 2,
                snr_grid: if mode == Mode::CsiSweep { vec![12.0] } else { grid(0, 21, 3) },
                block_len: 10_000,
                n_channels: 200,
                seed: 1,
                mode: SnrMode::Precoder,
                xi: 0.0,
            },
        };
        let methods = match mode {
            Mode::RateSweep => Method::rate_defaults(),
            _ => Method::precoder_defaults(),
        };
        Self {
            mode,
            link,
            xi_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0],
            methods,
            options: SweepOptions::default(),
            out: None,
        }
    }

    /// Applies one setting. Keys match the long flag names; underscores and
    /// dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('_', "-").as_str() {
            "nt" => self.link.nt = parse(key, value)?,
            "k" => self.link.k = parse(key, value)?,
            "streams" => self.link.streams = parse(key, value)?,
            "snr" => self.link.snr_grid = parse_grid(value)?,
            "channels" => self.link.n_channels = parse(key, value)?,
            "block-len" => self.link.block_len = parse(key, value)?,
            "seed" => self.link.seed = parse(key, value)?,
            "xi-grid" => self.xi_grid = parse_grid(value)?,
            "methods" => {
                self.methods = value.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "delta" => self.options.algo.delta = parse(key, value)?,
            "max-iters" => {
                let n: usize = parse(key, value)?;
                self.options.algo.max_iters = n;
                self.options.optimizer.max_iters = n;
            }
            "restarts" => self.options.optimizer.restarts = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key, value).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let rate = self.mode == Mode::RateSweep;
        if let Some(m) = self.methods.iter().find(|m| m.is_rate() != rate) {
            return Err(Error::Config(format!("method {m} is not available for this command")));
        }
        for m in &self.methods {
            if let Method::Covariance { rank, .. } = m {
                if *rank > self.link.nt {
                    return Err(Error::Config(format!("{m}: rank exceeds nt = {}", self.link.nt)));
                }
            }
        }
        if self.mode != Mode::RateSweep {
            make_superposition(self.link.k, self.link.streams).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.mode == Mode::CsiSweep {
            if self.xi_grid.is_empty() || self.xi_grid.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Config("xi grid must be a nonempty list of values in [0, 1]".into()));
            }
        }
        let delta = self.options.algo.delta;
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        if self.options.algo.max_iters == 0 || self.options.optimizer.restarts == 0 {
            return Err(Error::Config("max-iters and restarts must be at least one".into()));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<SweepResult> {
        self.validate()?;
        match self.mode {
            Mode::CsiSweep => csi_sweep(&self.link, &self.xi_grid, &self.methods, &self.options),
            _ => ergodic_sweep(&self.link, &self.methods, &self.options),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid grid `{text}`"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (a, b, s): (f64, f64, f64) =
                (start.parse().map_err(|_| bad())?, stop.parse().map_err(|_| bad())?, step.parse().map_err(|_| bad())?);
            if !(s > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return Err(bad());
            }
            let n = ((b - a) / s + 1e-9).floor() as usize + 1;
            (0..n).map(|i| a + i as f64 * s).collect()
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

/// One line of the validation report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub expected: f64,
    /// Largest accepted `|measured - expected|`.
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.measured - self.expected).abs() <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} measured {:.4e}  expected {:.4e}  tolerance {:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.expected,
            self.tolerance
        )
    }
}

#[derive(Clone, Copy)]
pub struct ValidateOptions {
    pub samples: usize,
    pub seed: u64,
    /// Quantizer statistics under test.
    pub stats: StatsImpl,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 1, stats: StatsImpl::default() }
    }
}

fn random_covariance(n_complex: usize, rng: &mut ChaCha8Rng) -> WlCovariance {
    let n = 2 * n_complex;
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    WlCovariance::new(&g * g.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05).expect("PSD by construction")
}

/// Rate of user `k` rebuilt from the statistics table: signal through the
/// Bussgang gain, everything else as received covariance minus signal.
fn rate_via_stats(stats: StatsImpl, scenario: &RateScenario, covs: &[WlCovariance], k: usize) -> Result<f64> {
    let n = covs[0].data().nrows();
    let total = covs.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + c.data());
    let total = WlCovariance::new(total)?;
    let gain = (stats.r_tx)(&total)? * crate::quantize::spd_inverse(total.data())?;
    let h = scenario.user_rows(k);
    let noise = Matrix2::identity() * (scenario.noise_var() / 2.0);
    let to2 = |m: DMatrix<f64>| Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let received = to2(&h * (stats.r_t)(&total)?.data() * h.transpose()) + noise;
    let signal = to2(&h * &gain * covs[k].data() * gain.transpose() * h.transpose());
    Ok(0.5 * (received.determinant() / (received - signal).determinant()).log2())
}

/// Runs every oracle check and returns one line per check.
pub fn run_validation(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    // arcsine law and Bussgang decomposition against sampled statistics
    let mut worst = [0.0f64; 3];
    let mut limits = [f64::INFINITY; 3];
    for _ in 0..5 {
        let r_x = random_covariance(4, &mut rng);
        let report = price_check_with(opts.stats, &r_x, opts.samples, &mut rng)?;
        let th = report.thresholds(3.0);
        for (i, v) in [report.worst_rt_sigma, report.worst_rtx_sigma, report.worst_qx_sigma].into_iter().enumerate() {
            worst[i] = worst[i].max(v);
            limits[i] = limits[i].min(th[i]);
        }
    }
    for (i, name) in ["price_rt_sigma", "price_rtx_sigma", "bussgang_qx_sigma"].into_iter().enumerate() {
        checks.push(Check { name, measured: worst[i], expected: 0.0, tolerance: limits[i] });
    }

    // rate bound through the statistics table vs the closed-form evaluator
    let mut rate_gap = 0.0f64;
    for _ in 0..5 {
        let scenario = RateScenario::new(draw_channel(3, 2, &mut rng), 0.5)?;
        let covs: Vec<WlCovariance> = (0..2).map(|_| random_covariance(3, &mut rng)).collect();
        let eval = RateEvaluator::new(&scenario);
        let raw: Vec<DMatrix<f64>> = covs.iter().map(|c| c.data().clone()).collect();
        let rates = eval.user_rates(&raw)?;
        for (k, r) in rates.iter().enumerate() {
            rate_gap = rate_gap.max((rate_via_stats(opts.stats, &scenario, &covs, k)? - r).abs());
        }
    }
    checks.push(Check { name: "rate_vs_statistics", measured: rate_gap, expected: 0.0, tolerance: 1e-9 });

    checks.push(Check {
        name: "rate_gradient_rel_err",
        measured: rate_gradient_error(&mut rng)?,
        expected: 0.0,
        tolerance: 1e-5,
    });
    checks.push(Check {
        name: "mse_gradient_rel_err",
        measured: mse_gradient_error(&mut rng)?,
        expected: 0.0,
        tolerance: 1e-5,
    });

    let scalar = |noise: f64| -> Result<f64> {
        let h = WlMatrix::from_real(DMatrix::identity(2, 2))?;
        sum_rate_lb(&RateScenario::new(h, noise)?, &[WlCovariance::identity(1)])
    };
    let two_pi = crate::TWO_OVER_PI;
    let mut closed = 0.0f64;
    for noise in [1e-3, 0.1, 0.5, 1.0, 2.0, 10.0] {
        closed = closed.max((scalar(noise)? - (1.0 + two_pi / (1.0 - two_pi + noise / 2.0)).log2()).abs());
    }
    checks.push(Check { name: "single_user_rate", measured: closed, expected: 0.0, tolerance: 1e-9 });
    let pi = std::f64::consts::PI;
    checks.push(Check {
        name: "single_user_rate_limit",
        measured: scalar(1e-12)?,
        expected: (pi / (pi - 2.0)).log2(),
        tolerance: 1e-9,
    });

    let mut missing = 0.0;
    for r in 1..=3usize {
        let sp = make_superposition(1, r)?;
        let mut levels: Vec<i64> = (0..1u32 << r)
            .map(|pattern| {
                let mut s: Vec<f64> = (0..r).map(|i| if pattern >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                s.extend(std::iter::repeat_n(1.0, r));
                superimpose(&sp, &WlVector::from_real(s.into()).expect("even length")).map(|v| v.data()[0] as i64)
            })
            .collect::<Result<_>>()?;
        levels.sort_unstable();
        levels.dedup();
        let expected: Vec<i64> = (0..1i64 << r).map(|i| 2 * i + 1 - (1 << r)).collect();
        if levels != expected {
            missing += 1.0;
        }
    }
    checks.push(Check { name: "superposition_alphabets", measured: missing, expected: 0.0, tolerance: 0.0 });
    Ok(checks)
}

fn rate_gradient_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let scenario = RateScenario::new(draw_channel(3, 2, rng), 0.3)?;
        let eval = RateEvaluator::new(&scenario);
        let covs: Vec<DMatrix<f64>> = (0..2).map(|_| random_covariance(3, rng).into_inner()).collect();
        let (_, grad) = eval.value_and_gradient(&covs)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, g) in grad.iter().enumerate() {
            for i in 0..6 {
                for j in 0..=i {
                    let h = 1e-6;
                    let bump = |s: f64| -> Result<f64> {
                        let mut c = covs.clone();
                        c[k][(i, j)] += s * h;
                        if i != j {
                            c[k][(j, i)] += s * h;
                        }
                        eval.value(&c)
                    };
                    let fd = (bump(1.0)? - bump(-1.0)?) / (2.0 * h);
                    let an = if i == j { g[(i, i)] } else { g[(i, j)] + g[(j, i)] };
                    num += (fd - an).powi(2);
                    den += an * an;
                }
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok(worst)
}

fn mse_gradient_error(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let nt = rng.random_range(2..=8);
        let k = rng.random_range(1..=nt.min(3));
        let r = rng.random_range(1..=2);
        let scenario = PrecoderScenario::from_snr_db(draw_channel(nt, k, rng), rng.random_range(0.0..20.0))?;
        let pi = make_superposition(k, r)?;
        let n = pi.num_streams();
        let r_s = DMatrix::identity(n, n);
        let p = DMatrix::from_fn(2 * nt, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = rng.random_range(0.1..2.0);
        let analytic = mse_gradient(&p, beta, &scenario, &pi, &r_s)?;
        let mut diff = 0.0;
        for j in 0..n {
            for i in 0..2 * nt {
                let h = 1e-6 * p[(i, j)].abs().max(1e-2);
                let at = |s: f64| -> Result<f64> {
                    let mut q = p.clone();
                    q[(i, j)] += s * h;
                    Ok(mse_terms(&q, &scenario, &pi, &r_s)?.mse(beta))
                };
                diff += ((at(1.0)? - at(-1.0)?) / (2.0 * h) - analytic[(i, j)]).powi(2);
            }
        }
        worst = worst.max(diff.sqrt() / analytic.norm());
    }
    Ok(worst)
}

#[derive(Parser, Debug)]
#[command(name = "qml", version, about = "Quantized MU-MISO precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ergodic sum-rate lower bound of optimized and linear transmit covariances.
    RateSweep(SweepArgs),
    /// BER, MSE and iteration counts of the quantized precoders over SNR.
    PrecoderSweep(SweepArgs),
    /// BER versus CSI estimation error at a fixed SNR.
    CsiSweep(SweepArgs),
    /// Runs the oracle checks and prints one line per check.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// `key = value` file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nt: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Streams per user (superposition rank).
    #[arg(long)]
    streams: Option<String>,
    /// SNR grid in dB, `start:stop:step` or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    block_len: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// CSI error variances for csi-sweep.
    #[arg(long)]
    xi_grid: Option<String>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Monte-Carlo samples per covariance.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SweepArgs {
    fn resolve(&self, mode: Mode) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults(mode);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_file(&text)?;
        }
        let flags = [
            ("nt", &self.nt),
            ("k", &self.k),
            ("streams", &self.streams),
            ("snr", &self.snr),
            ("channels", &self.channels),
            ("block-len", &self.block_len),
            ("seed", &self.seed),
            ("xi-grid", &self.xi_grid),
            ("methods", &self.methods),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exit status for an error: 1 for bad input, 2 for numerical failures.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) => 1,
        Error::Dimension(_) | Error::Domain(_) | Error::Singular { .. } => 2,
    }
}

fn emit(result: &SweepResult, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => result.write_csv(path),
        None => {
            print!("{}", result.to_csv());
            Ok(())
        }
    }
}

/// Entry point of the `qml` binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::RateSweep(a) => a.resolve(Mode::RateSweep).and_then(|c| emit(&c.run()?, c.out.as_deref())),
        Command::PrecoderSweep(a) => a.resolve(Mode::PrecoderSweep).and_then(|c| emit(&c.run()?, c.out.as_deref())),
        Command::CsiSweep(a) => a.resolve(Mode::CsiSweep).and_then(|c| emit(&c.run()?, c.out.as_deref())),
        Command::Validate(a) => {
            let opts = ValidateOptions { samples: a.samples, seed: a.seed, ..ValidateOptions::default() };
            match run_validation(&opts) {
                Ok(checks) => {
                    for c in &checks {
                        println!("{c}");
                    }
                    let failed = checks.iter().filter(|c| !c.passed()).count();
                    println!("{} checks, {failed} failed", checks.len());
                    return ExitCode::from(if failed == 0 { 0 } else { 1 });
                }
                Err(e) => Err(e),
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:21:3").unwrap(), vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0]);
        assert_eq!(parse_grid("-20:20:5").unwrap().len(), 9);
        assert_eq!(parse_grid("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("12").unwrap(), vec![12.0]);
        for bad in ["", "1:0:1", "0:1:0", "a,b", "1:2", "0:1:1:1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn defaults_match_the_experiments() {
        let rate = ExperimentConfig::defaults(Mode::RateSweep);
        assert_eq!((rate.link.nt, rate.link.k, rate.link.n_channels), (16, 2, 200));
        assert_eq!(rate.methods.len(), 7);
        let pre = ExperimentConfig::defaults(Mode::PrecoderSweep);
        assert_eq!((pre.link.nt, pre.link.k, pre.link.streams, pre.link.block_len), (128, 4, 2, 10_000));
        assert_eq!(pre.link.snr_grid, parse_grid("0:21:3").unwrap());
        assert_eq!(pre.options.algo.delta, 1e-4);
        let csi = ExperimentConfig::defaults(Mode::CsiSweep);
        assert_eq!(csi.link.snr_grid, vec![12.0]);
        assert_eq!(csi.xi_grid, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0]);
        for cfg in [rate, pre, csi] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn config_file_then_overrides() {
        let mut cfg = ExperimentConfig::defaults(Mode::PrecoderSweep);
        cfg.apply_file("# desk scale\nchannels = 20\nblock_len=2000\n\nmethods = txwfq_pi_wl, txwfq\n").unwrap();
        assert_eq!((cfg.link.n_channels, cfg.link.block_len), (20, 2000));
        assert_eq!(cfg.methods.len(), 2);
        cfg.set("channels", "3").unwrap();
        assert_eq!(cfg.link.n_channels, 3);
        assert!(cfg.apply_file("colour = blue").is_err());
        assert!(cfg.apply_file("channels").is_err());
        assert!(cfg.set("nt", "many").is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_settings() {
        let mut cfg = ExperimentConfig::defaults(Mode::RateSweep);
        cfg.set("nt", "4").unwrap();
        cfg.set("k", "8").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::defaults(Mode::RateSweep);
        cfg.set("methods", "txwfq_pi_wl").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::defaults(Mode::CsiSweep);
        cfg.set("xi-grid", "0,1.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config(String::new())), 1);
        assert_eq!(exit_code(&Error::Singular { cond: 1e20 }), 2);
        assert_eq!(exit_code(&Error::Domain(String::new())), 2);
    }

    fn flipped_r_t(r_x: &WlCovariance) -> Result<WlCovariance> {
        let good = crate::quantize::r_t(r_x)?;
        let n = good.data().nrows();
        let flipped = DMatrix::from_fn(n, n, |i, j| if i == j { good.data()[(i, j)] } else { -good.data()[(i, j)] });
        Ok(WlCovariance::from_symmetric_unchecked(flipped))
    }

    #[test]
    fn validation_passes_and_detects_faults() {
        let opts = ValidateOptions { samples: 20_000, ..ValidateOptions::default() };
        let checks = run_validation(&opts).unwrap();
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
        let broken = ValidateOptions {
            stats: StatsImpl { r_t: flipped_r_t, ..StatsImpl::default() },
            ..opts
        };
        let checks = run_validation(&broken).unwrap();
        let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
        assert!(failed.contains(&"price_rt_sigma"), "{failed:?}");
        assert!(failed.contains(&"rate_vs_statistics"), "{failed:?}");
    }
}
