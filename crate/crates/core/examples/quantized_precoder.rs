//! Designs the higher-rank quantization-aware Wiener filter for one channel
//! and compares its link-level bit error rate with the baselines.

use qml::precoder::{
    baseline_precoder, make_superposition, solve_txwfq_pi, AlgoConfig, PrecoderKind, PrecoderScenario,
};
use qml::sim::{run_link, stream_rng, ChannelSet, Purpose};

fn main() -> qml::Result<()> {
    let (nt, k, streams, snr_db) = (32, 2, 2, 12.0);
    let seed = 5;
    let set = ChannelSet::generate(nt, k, 0.0, seed, 0)?;
    let scenario = PrecoderScenario::from_snr_db(set.est_channel.clone(), snr_db)?;
    let pi = make_superposition(k, streams)?;
    let config = AlgoConfig::default();

    let designed = solve_txwfq_pi(&scenario, &pi, &config)?;
    println!(
        "gradient projection: {} iterations, approximate MSE {:.4} -> {:.4}",
        designed.trace.iterations,
        designed.trace.mse.first().unwrap(),
        designed.trace.mse.last().unwrap()
    );

    let mut candidates = vec![("txwfq_pi".to_string(), designed)];
    for kind in [PrecoderKind::TxWfqChannelRank, PrecoderKind::Zf, PrecoderKind::TxWfUnquantized] {
        candidates.push((kind.name().to_string(), baseline_precoder(&scenario, &pi, kind, &config)?));
    }
    for (name, solution) in &candidates {
        let mut rng = stream_rng(seed, 0, Purpose::Link);
        let stats = run_link(solution, &set, scenario.noise_var(), 20_000, &mut rng)?;
        println!("{name:>16}: ber {:.5}  mse {:.4}", stats.ber, stats.mse);
    }
    Ok(())
}
