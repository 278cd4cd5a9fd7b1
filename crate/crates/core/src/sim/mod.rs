//! Channel generation, link simulation and ergodic sweeps.

mod link;
mod sweep;

use std::io::Write;
use std::path::Path;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::wl::WlMatrix;

pub use link::{detect_level, level_to_streams, run_link, run_link_gaussian, LinkStats};
pub use sweep::{
    csi_sweep, ergodic_sweep, LinkConfig, Method, PointSamples, SnrMode, SweepOptions, SweepPoint, SweepResult,
    CSV_COLUMNS,
};

/// `H^T` with i.i.d. `CN(0, 1)` entries, expanded to `2K x 2Nt`.
pub fn draw_channel<R: Rng + ?Sized>(nt: usize, k: usize, rng: &mut R) -> WlMatrix {
    WlMatrix::strictly_linear(&complex_gaussian(k, nt, rng))
}

fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<Complex<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * s, im * s)
    })
}

/// `sqrt(1 - xi) H + sqrt(xi) G` with an independent `CN(0, 1)` matrix `G`.
/// For `xi = 0` the input is returned unchanged and no randomness is used.
pub fn apply_csi_error<R: Rng + ?Sized>(h: &WlMatrix, xi: f64, rng: &mut R) -> Result<WlMatrix> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Domain(format!("CSI error variance {xi} outside [0, 1]")));
    }
    if xi == 0.0 {
        return Ok(h.clone());
    }
    let (k, nt) = h.half_dims();
    let gamma = WlMatrix::strictly_linear(&complex_gaussian(k, nt, rng));
    WlMatrix::from_real(h.data() * (1.0 - xi).sqrt() + gamma.data() * xi.sqrt())
}

/// A true channel and the estimate the transmitter designs with.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub true_channel: WlMatrix,
    pub est_channel: WlMatrix,
    pub xi: f64,
    pub seed: u64,
}

impl ChannelSet {
    /// Channel `index` of the ensemble defined by `seed`. The channel does
    /// not depend on `xi`, and the estimation error for different `xi`
    /// values shares the same underlying draw.
    pub fn generate(nt: usize, k: usize, xi: f64, seed: u64, index: u64) -> Result<Self> {
        let true_channel = draw_channel(nt, k, &mut stream_rng(seed, index, Purpose::Channel));
        let est_channel = apply_csi_error(&true_channel, xi, &mut stream_rng(seed, index, Purpose::Csi))?;
        Ok(Self { true_channel, est_channel, xi, seed })
    }
}

/// Independent random streams used by one channel realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Channel = 0,
    Csi = 1,
    Link = 2,
    Design = 3,
}

/// Generator for one `(channel, purpose)` pair. Streams never overlap and
/// do not depend on how work is scheduled.
pub fn stream_rng(seed: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 16) | purpose as u64);
    rng
}

/// Worker pool sized by `QML_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("QML_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("QML_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
