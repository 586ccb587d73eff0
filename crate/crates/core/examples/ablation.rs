//! Ablation ladder on a synthetic set: each variant is trained on the
//! neutral gallery over several seeds and scored on pose and occlusion
//! probes.
//!
//! cargo run --release --example ablation -- [seeds] [variants,...]

use dga::data::{split_protocol, synth_samples, SplitScheme, SynthConfig, Variation};
use dga::eval::ablate;
use dga::model::{ModelConfig, Variant};
use dga::optim::TrainConfig;

fn main() -> dga::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: Vec<u64> = (1..=args.next().map_or(5, |a| a.parse().expect("seed count"))).collect();
    let variants: Vec<Variant> = match args.next() {
        Some(list) => list.split(',').map(str::parse).collect::<dga::Result<_>>()?,
        None => vec![Variant::Baseline, Variant::ModelA, Variant::Proposed],
    };
    let synth = SynthConfig {
        ids: 10,
        per_id: 20,
        seed: 3,
        mix: vec![(Variation::Neutral, 2.0), (Variation::Pose, 1.0), (Variation::Occlusion, 1.0)],
        ..SynthConfig::default()
    };
    let samples = synth_samples(&synth)?
        .iter()
        .map(|s| s.to_sample())
        .collect::<dga::Result<Vec<_>>>()?;
    let split = split_protocol(&samples, SplitScheme::NeutralGallery)?;
    let train = TrainConfig { lr0: 3e-3, batch_size: 10, epochs: 50, ..TrainConfig::default() };
    let base = ModelConfig::toy(Variant::Proposed, synth.ids);
    let table = ablate(&base, &train, &samples, &split, &variants, &seeds, |v, s, acc| {
        println!("{v:<12} seed {s}: average probe accuracy {acc:.3}");
    })?;
    print!("{}", table.to_csv());
    Ok(())
}
