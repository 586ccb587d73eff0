//! Trains a toy model on a neutral gallery, then scores pose probes, writes Grad-CAM and
//! attention maps for the first probe, and checks a checkpoint round trip.
//!
//! cargo run --release --example inspect -- [out_dir] [epochs]

use std::path::PathBuf;

use dga::data::{split_protocol, synth_samples, PnmImage, SplitScheme, SynthConfig, Variation};
use dga::eval::{export_attention, grad_cam, rank1, CamLayer};
use dga::model::{Model, ModelConfig, Variant};
use dga::optim::{train_new, TrainConfig};

fn main() -> dga::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "inspect_out".into()));
    let epochs = args.next().map_or(50, |a| a.parse().expect("epochs"));
    std::fs::create_dir_all(&out).map_err(|e| dga::Error::io("creating output dir", e))?;

    let synth = SynthConfig {
        ids: 10,
        per_id: 20,
        seed: 5,
        mix: vec![(Variation::Neutral, 2.0), (Variation::Pose, 1.0), (Variation::Occlusion, 1.0)],
        ..SynthConfig::default()
    };
    let rendered = synth_samples(&synth)?;
    let samples = rendered.iter().map(|s| s.to_sample()).collect::<dga::Result<Vec<_>>>()?;
    let split = split_protocol(&samples, SplitScheme::NeutralGallery)?;
    let gallery: Vec<_> = split.gallery.iter().map(|&i| samples[i].clone()).collect();
    let train = TrainConfig { lr0: 3e-3, batch_size: 10, epochs, seed: 5, ..TrainConfig::default() };
    let (model, _) = train_new(ModelConfig::toy(Variant::Proposed, synth.ids), &gallery, &train, |m| {
        println!("epoch {:>2} loss {:.4} acc {:.3}", m.epoch, m.loss_total, m.train_acc);
    })?;
    print!("{}", rank1(&model, &split, &samples)?.to_csv());

    let first = split.probes.values().flatten().next().copied().expect("a probe");
    let probe = &samples[first];
    let cam = grad_cam(&model, probe, probe.identity, CamLayer::Rgb)?.upsample(probe.extent());
    let grey = cam.values.data().iter().map(|v| (v * 255.0).round() as u16).collect();
    PnmImage { width: probe.extent(), height: probe.extent(), channels: 1, maxval: 255, samples: grey }
        .write(&out.join("gradcam.pgm"))?;
    export_attention(&model, probe, &out.join("attention.pgm"), true)?;
    rendered[first].rgb.write(&out.join("probe.ppm"))?;
    let (r, c) = cam.argmax();
    println!("grad-cam peak at ({r}, {c}), inside face: {}", rendered[first].face_mask[r * probe.extent() + c]);

    let ckpt = out.join("model.ckpt");
    model.save(&ckpt)?;
    let back = Model::<f32>::load(&ckpt)?;
    let same = back.params().tensors() == model.params().tensors();
    println!("checkpoint round trip exact: {same}");
    Ok(())
}
