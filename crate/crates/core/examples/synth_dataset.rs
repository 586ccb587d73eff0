//! Writes a small synthetic RGB-D set and reloads it.
//!
//! cargo run --release --example synth_dataset -- /tmp/faces

use std::path::PathBuf;

use dga::data::{load_manifest, synth_generate, SynthConfig, MANIFEST_NAME};

fn main() -> dga::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    let cfg = SynthConfig { ids: 4, per_id: 7, seed: 1, ..SynthConfig::default() };
    let made = synth_generate(&cfg, &out)?;
    let ds = load_manifest(&out.join(MANIFEST_NAME))?;
    println!("wrote {} samples to {}", made.len(), out.display());
    for s in ds.samples.iter().take(cfg.per_id) {
        println!("id {} {:<12} guidance mean {:.3}", s.identity, s.variation, s.guidance.sum() / s.guidance.len() as f32);
    }
    Ok(())
}
