//! Bit error rate as the channel estimate degrades, averaged over a few
//! channel realizations.

use qml::precoder::{PrecoderKind, Structure};
use qml::sim::{csi_sweep, LinkConfig, Method, SnrMode, SweepOptions};

fn main() -> qml::Result<()> {
    let config = LinkConfig {
        nt: 32,
        k: 2,
        streams: 2,
        snr_grid: vec![12.0],
        block_len: 2000,
        n_channels: 4,
        seed: 1,
        mode: SnrMode::Precoder,
        xi: 0.0,
    };
    let methods = [
        Method::TxwfqPi(Structure::Wl),
        Method::Baseline(PrecoderKind::TxWfqChannelRank),
        Method::Baseline(PrecoderKind::TxWfUnquantized),
    ];
    let result = csi_sweep(&config, &[0.0, 0.2, 0.5, 1.0], &methods, &SweepOptions::default())?;
    for p in &result.points {
        println!("xi {:<4} {:<12} ber {:.4} +- {:.4}", p.xi, p.method.name(), p.ber.unwrap(), p.ber_ci.unwrap());
    }
    Ok(())
}
