//! How several QPSK streams per user combine into one dense constellation.

use nalgebra::dvector;
use qml::precoder::{make_superposition, superimpose};
use qml::sim::{detect_level, level_to_streams};
use qml::wl::WlVector;

fn main() -> qml::Result<()> {
    for streams in 1..=3 {
        let pi = make_superposition(1, streams)?;
        let m = 1usize << streams;
        let levels: Vec<String> = (0..m).map(|i| format!("{}", 2 * i as i64 - (m as i64 - 1))).collect();
        println!(
            "{streams} stream(s): weights {:?}, per-axis levels [{}], {}-QAM, symbol power {}",
            pi.tau(),
            levels.join(", "),
            m * m,
            pi.symbol_power()
        );
    }

    // One user with two streams: s = [Re s1, Re s2, Im s1, Im s2].
    let pi = make_superposition(1, 2)?;
    let s = WlVector::from_real(dvector![1.0, -1.0, -1.0, -1.0])?;
    let symbol = superimpose(&pi, &s)?;
    println!("superimposed symbol: {:?}", symbol.to_complex());

    let noisy = symbol.data()[0] + 0.7;
    let level = detect_level(noisy, pi.max_level());
    println!("received {noisy:.1} -> level {level} -> stream bits {:?}", level_to_streams(level, pi.tau()));
    Ok(())
}
