use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::rank1;
use crate::data::{ProtocolSplit, RGBDSample};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::optim::{train_new, TrainConfig};

pub const ABLATION_HEADER: &str = "variant,probe_set,mean_acc,std_acc,seeds";

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    /// A probe variation name or `average`.
    pub probe_set: String,
    /// One accuracy per seed, in seed order.
    pub per_seed: Vec<f64>,
}

impl AblationRow {
    pub fn mean(&self) -> f64 {
        self.per_seed.iter().sum::<f64>() / self.per_seed.len() as f64
    }

    /// Sample standard deviation; 0 for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.per_seed.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.per_seed.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: Variant, probe_set: &str) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.probe_set == probe_set)
    }

    pub fn to_csv(&self) -> String {
        let seeds = self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
        let mut out = format!("{ABLATION_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{seeds}", r.variant, r.probe_set, r.mean(), r.std());
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Trains every (variant, seed) pair on the gallery of `split` and scores
/// the probes. The seed drives both initialization and batch shuffling;
/// the split is shared by all runs.
pub fn ablate(
    base: &ModelConfig,
    train: &TrainConfig,
    samples: &[RGBDSample],
    split: &ProtocolSplit,
    variants: &[Variant],
    seeds: &[u64],
    mut progress: impl FnMut(Variant, u64, f64),
) -> Result<AblationTable> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config("ablation needs at least one variant and one seed".into()));
    }
    let gallery: Vec<RGBDSample> = split.gallery.iter().map(|&i| samples[i].clone()).collect();
    let mut rows = Vec::new();
    for &variant in variants {
        let mut per_set: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for &seed in seeds {
            let mut cfg = base.with_variant(variant);
            cfg.init.seed = seed;
            let tc = TrainConfig { seed, ..train.clone() };
            let (model, _) = train_new(cfg, &gallery, &tc, |_| {})?;
            let report = rank1(&model, split, samples)?;
            for (v, r) in &report.sets {
                per_set.entry(v.to_string()).or_default().push(r.accuracy());
            }
            per_set.entry("average".into()).or_default().push(report.average());
            progress(variant, seed, report.average());
        }
        let mut names: Vec<String> = split.probes.keys().map(|v| v.to_string()).collect();
        names.push("average".into());
        for name in names {
            let per_seed = per_set.remove(&name).unwrap_or_default();
            rows.push(AblationRow { variant, probe_set: name, per_seed });
        }
    }
    Ok(AblationTable { seeds: seeds.to_vec(), rows })
}
