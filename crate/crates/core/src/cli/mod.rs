//! The `dga` command line: train, eval, ablate, synth, gradcheck,
//! export-attention, export-embeddings and count-params.
//!
//! Configuration comes from a `key = value` file; flags given on the
//! command line override values from the file.

mod run_config;

pub use run_config::{RunConfig, TrainSubset};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{
    load_manifest, parse_mix, split_protocol, synth_generate, Dataset, GuidanceKind, ProtocolSplit, RGBDSample,
    SplitScheme, Variation,
};
use crate::error::{Error, Result};
use crate::eval::{ablate, export_attention, export_embeddings, rank1};
use crate::gradcheck::{gradcheck, GradcheckOptions};
use crate::model::{count_model_params, infer_shapes, Model, ModelConfig, Variant};
use crate::optim::{configure_threads, train, write_metrics, EpochMetrics};

#[derive(Parser, Debug)]
#[command(name = "dga", version, about = "Depth-guided attention for RGB-D face identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write model.ckpt, metrics.csv and effective.conf.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr0: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank-1 identification per probe set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `neutral-gallery` or `ratio:<fraction>[:<seed>]`.
        #[arg(long)]
        protocol: SplitScheme,
        /// Comma-separated probe sets to report (default: all).
        #[arg(long, value_delimiter = ',')]
        probes: Vec<Variation>,
        /// Directory for report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score several variants over several seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Write a synthetic RGB-D dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ids: usize,
        #[arg(long)]
        per_id: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        extent: Option<usize>,
        #[arg(long)]
        guidance: Option<GuidanceKind>,
        /// e.g. `neutral:2,pose:1,occlusion:1`.
        #[arg(long)]
        mix: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Check one variant instead of all of them.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Model configuration to check (default: toy).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write one sample's attention map as a PGM.
    ExportAttention {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        /// Resize to the input extent.
        #[arg(long)]
        upsample: bool,
    },
    /// Write the pre-logit embedding of every sample as CSV.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analytic parameter count and feature shapes.
    CountParams {
        #[arg(long, default_value = "proposed")]
        variant: Variant,
        #[arg(long, default_value_t = 509)]
        classes: usize,
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scale {
    Full,
    Toy,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status: 0 on success, 2 on usage errors, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn load_data(path: &Path) -> Result<Dataset> {
    let ds = load_manifest(path)?;
    if let Some(map) = &ds.relabeled {
        let pairs: Vec<String> = map.iter().map(|(k, v)| format!("{k}->{v}")).collect();
        println!("identities relabeled: {}", pairs.join(" "));
    }
    Ok(ds)
}

fn make_split(samples: &[RGBDSample], scheme: SplitScheme, probes: &[Variation]) -> Result<ProtocolSplit> {
    let split = split_protocol(samples, scheme)?;
    Ok(if probes.is_empty() { split } else { split.restrict(probes) })
}

/// Sets the class count from the data unless the config fixed it.
fn fit_classes(cfg: &mut RunConfig, explicit: bool, ds: &Dataset) -> Result<()> {
    let data = ds.num_classes();
    if explicit {
        if cfg.model.num_classes < data {
            return Err(Error::ClassCount { model: cfg.model.num_classes, data });
        }
    } else {
        cfg.model.num_classes = data;
    }
    Ok(())
}

fn print_epoch(m: &EpochMetrics) {
    println!(
        "epoch {:>3}  lr {:.3e}  loss {:.5}  train_acc {:.4}",
        m.epoch, m.lr, m.loss_total, m.train_acc
    );
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, data, out, variant, epochs, lr0, batch_size, seed } => {
            let (mut cfg, entries) = RunConfig::load(&config)?;
            if let Some(v) = variant {
                cfg.model = cfg.model.with_variant(v);
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(l) = lr0 {
                cfg.train.lr0 = l;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.model.init.seed = s;
            }
            cfg.manifest = Some(data.clone());
            cfg.out = Some(out.clone());
            let ds = load_data(&data)?;
            fit_classes(&mut cfg, entries.contains_key("model.num_classes"), &ds)?;
            cfg.validate()?;
            create_dir(&out)?;
            cfg.echo(&out)?;
            let split = match cfg.train_subset {
                TrainSubset::Gallery => Some(make_split(&ds.samples, cfg.protocol, &cfg.probe_sets)?),
                TrainSubset::All => None,
            };
            let train_set: Vec<RGBDSample> = match &split {
                Some(s) => s.gallery.iter().map(|&i| ds.samples[i].clone()).collect(),
                None => ds.samples.clone(),
            };
            println!("training {} on {} samples", cfg.model.variant, train_set.len());
            let mut model = Model::<f32>::new(cfg.model.clone())?;
            let metrics = train(&mut model, &train_set, &cfg.train, print_epoch)?;
            write_metrics(&out.join("metrics.csv"), &metrics)?;
            model.save(&out.join("model.ckpt"))?;
            if let Some(split) = split.filter(|s| s.probe_count() > 0) {
                let report = rank1(&model, &split, &ds.samples)?;
                report.write(&out.join("report.csv"))?;
                print!("{}", report.to_csv());
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { model, data, protocol, probes, out } => {
            let model = Model::<f32>::load(&model)?;
            let ds = load_data(&data)?;
            let split = make_split(&ds.samples, protocol, &probes)?;
            let report = rank1(&model, &split, &ds.samples)?;
            print!("{}", report.to_csv());
            if let Some(dir) = out {
                create_dir(&dir)?;
                report.write(&dir.join("report.csv"))?;
            }
        }
        Command::Ablate { config, data, out, variants, seeds } => {
            let (mut cfg, entries) = RunConfig::load(&config)?;
            if !variants.is_empty() {
                cfg.ablate_variants = variants;
            }
            if !seeds.is_empty() {
                cfg.ablate_seeds = seeds;
            }
            cfg.manifest = Some(data.clone());
            cfg.out = Some(out.clone());
            let ds = load_data(&data)?;
            fit_classes(&mut cfg, entries.contains_key("model.num_classes"), &ds)?;
            cfg.validate()?;
            create_dir(&out)?;
            cfg.echo(&out)?;
            let split = make_split(&ds.samples, cfg.protocol, &cfg.probe_sets)?;
            let table = ablate(
                &cfg.model,
                &cfg.train,
                &ds.samples,
                &split,
                &cfg.ablate_variants,
                &cfg.ablate_seeds,
                |v, s, acc| println!("{v} seed {s}: average probe accuracy {acc:.4}"),
            )?;
            table.write(&out.join("ablation.csv"))?;
            print!("{}", table.to_csv());
        }
        Command::Synth { out, ids, per_id, seed, extent, guidance, mix, config } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?.0,
                None => RunConfig::default(),
            };
            cfg.synth.ids = ids;
            cfg.synth.per_id = per_id;
            cfg.synth.seed = seed;
            if let Some(e) = extent {
                cfg.synth.extent = e;
            }
            if let Some(g) = guidance {
                cfg.synth.guidance = g;
            }
            if let Some(m) = mix {
                cfg.synth.mix = parse_mix(&m)?;
            }
            cfg.synth.validate()?;
            let samples = synth_generate(&cfg.synth, &out)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Gradcheck { eps, variant, seed, tolerance, config } => {
            let base = match config {
                Some(p) => RunConfig::load(&p)?.0.model,
                None => ModelConfig::toy(Variant::Proposed, 10),
            };
            let variants = match variant {
                Some(v) => vec![v],
                None => Variant::ALL.to_vec(),
            };
            let opts = GradcheckOptions { eps, seed, ..GradcheckOptions::default() };
            let mut worst = 0.0f64;
            for v in variants {
                let report = gradcheck(&base.with_variant(v), &opts)?;
                println!(
                    "{v:<12} {} entries over {} tensors, max relative error {:.3e}",
                    report.checked(),
                    report.params.len(),
                    report.max_rel_err()
                );
                worst = worst.max(report.max_rel_err());
            }
            println!("max relative error: {worst:.3e}");
            if !(worst < tolerance) {
                return Err(Error::Config(format!(
                    "gradient check failed: {worst:.3e} >= tolerance {tolerance:.1e}"
                )));
            }
        }
        Command::ExportAttention { model, data, index, out, upsample } => {
            let model = Model::<f32>::load(&model)?;
            let ds = load_data(&data)?;
            let sample = ds
                .samples
                .get(index)
                .ok_or_else(|| Error::Config(format!("sample index {index} out of range")))?;
            let img = export_attention(&model, sample, &out, upsample)?;
            println!("wrote {}x{} attention map to {}", img.width, img.height, out.display());
        }
        Command::ExportEmbeddings { model, data, out } => {
            let model = Model::<f32>::load(&model)?;
            let ds = load_data(&data)?;
            export_embeddings(&model, &ds.samples, &out)?;
            println!("wrote {} embeddings to {}", ds.samples.len(), out.display());
        }
        Command::CountParams { variant, classes, scale, config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?.0.model,
                None => match scale {
                    Scale::Full => ModelConfig::full_scale(variant, classes),
                    Scale::Toy => ModelConfig::toy(variant, classes),
                },
            };
            let shapes = infer_shapes(&cfg)?;
            println!("variant        {}", cfg.variant);
            println!("f_rgb          {:?}", shapes.f_rgb);
            println!("f_guidance     {:?}", shapes.f_guidance);
            println!("pooled         {:?}", shapes.pooled);
            println!("attention      {:?}", shapes.attention);
            println!("parameters     {}", count_model_params(&cfg));
        }
    }
    Ok(())
}
