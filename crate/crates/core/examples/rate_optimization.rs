//! Sum-rate lower bound of a small downlink: optimized transmit covariances
//! against classical linear precoders.

use qml::rate::{baseline_covariance, optimize_covariances, LinearKind, OptimizerOptions, RateScenario};
use qml::sim::{stream_rng, draw_channel, Purpose};

fn main() -> qml::Result<()> {
    let (nt, k) = (4, 2);
    let channel = draw_channel(nt, k, &mut stream_rng(3, 0, Purpose::Channel));

    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "snr_db", "improper", "proper", "mmse", "mf");
    for snr_db in [-10.0, 0.0, 10.0, 20.0] {
        let scenario = RateScenario::from_snr_db(channel.clone(), snr_db)?;
        let mmse = baseline_covariance(&scenario, LinearKind::Mmse)?;
        // The landscape is non-convex, so start from the MMSE solution as well
        // as from random points.
        let opts = OptimizerOptions { restarts: 2, warm_starts: vec![mmse.per_user_cov.clone()], ..Default::default() };
        let proper = optimize_covariances(&scenario, &[1, 1], true, &opts)?;
        let mut improper_opts = opts.clone();
        improper_opts.warm_starts.push(proper.per_user_cov.clone());
        let improper = optimize_covariances(&scenario, &[1, 1], false, &improper_opts)?;
        let mf = baseline_covariance(&scenario, LinearKind::Mf)?;
        println!(
            "{snr_db:>7.1} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            improper.sum_rate_lb, proper.sum_rate_lb, mmse.sum_rate_lb, mf.sum_rate_lb
        );
    }
    Ok(())
}
