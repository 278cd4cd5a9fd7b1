use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::ChannelSet;
use crate::error::{dim_err, Error, Result};
use crate::precoder::PrecoderSolution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkStats {
    pub ber: f64,
    /// Mean of `||r - Pi s||^2` per symbol vector.
    pub mse: f64,
    pub bit_errors: u64,
    pub bits: u64,
}

/// Nearest odd level in `[-max_level, max_level]`. Values exactly between
/// two levels go to the smaller magnitude; zero maps to `+1`.
pub fn detect_level(v: f64, max_level: f64) -> f64 {
    let mag = v.abs();
    let level = (2.0 * (mag / 2.0).ceil() - 1.0).clamp(1.0, max_level);
    if v < 0.0 {
        -level
    } else {
        level
    }
}

/// Stream components that superimpose to `level`, most significant first.
pub fn level_to_streams(level: f64, tau: &[f64]) -> Vec<f64> {
    let mut residual = level;
    tau.iter()
        .map(|&t| {
            let s = if residual >= 0.0 { 1.0 } else { -1.0 };
            residual -= t * s;
            s
        })
        .collect()
}

fn transmit(solution: &PrecoderSolution, s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = &solution.precoder * s;
    if solution.quantized {
        for (i, mut row) in x.row_iter_mut().enumerate() {
            let d = solution.power_alloc[i];
            row.apply(|v| *v = if *v >= 0.0 { d } else { -d });
        }
    }
    x
}

fn receive<R: Rng + ?Sized>(
    solution: &PrecoderSolution,
    channel: &ChannelSet,
    noise_var: f64,
    s: &DMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let x = transmit(solution, s);
    let mut y = channel.true_channel.data() * x;
    let sd = (noise_var / 2.0).sqrt();
    y.apply(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
    y * solution.beta
}

fn check(solution: &PrecoderSolution, channel: &ChannelSet, noise_var: f64, block_len: usize) -> Result<()> {
    solution.check_dims(&channel.true_channel)?;
    if block_len == 0 {
        return dim_err("block length must be at least one");
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Domain(format!("noise variance {noise_var} is negative")));
    }
    Ok(())
}

/// Sends `block_len` random QPSK stream vectors through the precoder, the
/// DACs (unless the solution bypasses them) and the true channel, then
/// detects every stream bit at the users.
///
/// All symbols are drawn before any noise, so two solutions with the same
/// dimensions see identical symbols and noise from identically seeded
/// generators.
pub fn run_link<R: Rng + ?Sized>(
    solution: &PrecoderSolution,
    channel: &ChannelSet,
    noise_var: f64,
    block_len: usize,
    rng: &mut R,
) -> Result<LinkStats> {
    check(solution, channel, noise_var, block_len)?;
    let sp = &solution.superposition;
    let streams = sp.num_streams();
    let r = sp.streams_per_user();
    let s = DMatrix::from_fn(streams, block_len, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let received = receive(solution, channel, noise_var, &s, rng);
    let target = sp.pi() * &s;

    let max_level = sp.max_level();
    let mut errors = 0u64;
    for n in 0..block_len {
        for a in 0..received.nrows() {
            let level = detect_level(received[(a, n)], max_level);
            for (i, bit) in level_to_streams(level, sp.tau()).into_iter().enumerate() {
                if bit != s[(a * r + i, n)] {
                    errors += 1;
                }
            }
        }
    }
    let bits = (block_len * streams) as u64;
    let mse = (&received - &target).norm_squared() / block_len as f64;
    Ok(LinkStats { ber: errors as f64 / bits as f64, mse, bit_errors: errors, bits })
}

/// Empirical MSE with i.i.d. standard Gaussian stream components instead of
/// QPSK, the input model under which the analytic MSE is exact.
pub fn run_link_gaussian<R: Rng + ?Sized>(
    solution: &PrecoderSolution,
    channel: &ChannelSet,
    noise_var: f64,
    block_len: usize,
    rng: &mut R,
) -> Result<f64> {
    check(solution, channel, noise_var, block_len)?;
    let sp = &solution.superposition;
    let s = DMatrix::from_fn(sp.num_streams(), block_len, |_, _| rng.sample::<f64, _>(StandardNormal));
    let received = receive(solution, channel, noise_var, &s, rng);
    Ok((&received - sp.pi() * &s).norm_squared() / block_len as f64)
}
