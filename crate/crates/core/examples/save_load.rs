//! Stores a designed precoder as text and reads it back.

use qml::precoder::{make_superposition, solve_txwfq_pi, AlgoConfig, PrecoderScenario, PrecoderSolution};
use qml::sim::ChannelSet;

fn main() -> qml::Result<()> {
    let set = ChannelSet::generate(8, 2, 0.0, 2, 0)?;
    let scenario = PrecoderScenario::from_snr_db(set.est_channel, 9.0)?;
    let solution = solve_txwfq_pi(&scenario, &make_superposition(2, 2)?, &AlgoConfig::default())?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("precoder.txt");
    solution.save(&path)?;
    let loaded = PrecoderSolution::load(&path)?;

    let text = std::fs::read_to_string(&path)?;
    println!("{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("...");
    println!("identical after reload: {}", loaded.precoder == solution.precoder && loaded.beta == solution.beta);
    Ok(())
}
