//! Second-order statistics of the 1-bit quantizer, checked by Monte-Carlo.

use nalgebra::DMatrix;
use qml::quantize::{bussgang, oracle::price_check, r_t};
use qml::wl::WlCovariance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qml::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let l = DMatrix::from_fn(6, 6, |i, j| if j <= i { 1.0 / (1.0 + (i + j) as f64) } else { 0.0 });
    let r_x = WlCovariance::new(&l * l.transpose() + DMatrix::identity(6, 6) * 0.1)?;

    let rt = r_t(&r_x)?;
    let decomposition = bussgang(&r_x)?;
    println!("output covariance (arcsine law):\n{:.4}", rt.data());
    println!("Bussgang gain diagonal: {:.4}", decomposition.gain.diagonal().transpose());
    println!("distortion covariance trace: {:.4}", decomposition.error_cov.trace());

    let report = price_check(&r_x, 200_000, &mut rng)?;
    let limits = report.thresholds(3.0);
    println!(
        "worst deviations in standard errors: R_t {:.2} (limit {:.2}), R_tx {:.2} (limit {:.2}), R_q {:.2} (limit {:.2})",
        report.worst_rt_sigma, limits[0], report.worst_rtx_sigma, limits[1], report.worst_qx_sigma, limits[2]
    );
    println!("passes: {}", report.passes(3.0));
    Ok(())
}
