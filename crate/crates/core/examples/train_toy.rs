//! Trains the proposed variant on a synthetic toy set and prints the
//! per-epoch metrics.
//!
//! cargo run --release --example train_toy -- [epochs] [lr0] [batch] [seed]

use std::time::Instant;

use dga::data::{synth_samples, SynthConfig};
use dga::model::{ModelConfig, Variant};
use dga::optim::{train_new, TrainConfig};

fn main() -> dga::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map_or(50, |a| a.parse().expect("epochs"));
    let lr0 = args.next().map_or(3e-3, |a| a.parse().expect("lr0"));
    let batch_size = args.next().map_or(10, |a| a.parse().expect("batch size"));
    let seed = args.next().map_or(7, |a| a.parse().expect("seed"));
    let synth = SynthConfig { ids: 10, per_id: 20, seed, ..SynthConfig::default() };
    let samples = synth_samples(&synth)?
        .iter()
        .map(|s| s.to_sample())
        .collect::<dga::Result<Vec<_>>>()?;
    let cfg = TrainConfig { lr0, epochs, batch_size, seed, ..TrainConfig::default() };
    let start = Instant::now();
    train_new(ModelConfig::toy(Variant::Proposed, synth.ids), &samples, &cfg, |m| {
        println!(
            "epoch {:>2} lr {:.2e} loss {:.4} main {:.4} rgb {:.4} guid {:.4} acc {:.3} ({:.1}s)",
            m.epoch,
            m.lr,
            m.loss_total,
            m.loss_attention,
            m.loss_rgb.unwrap_or(0.0),
            m.loss_guidance.unwrap_or(0.0),
            m.train_acc,
            start.elapsed().as_secs_f64()
        );
    })?;
    Ok(())
}
