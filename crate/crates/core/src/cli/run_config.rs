use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::parse_kv;
use crate::data::{format_mix, parse_mix, SplitScheme, SynthConfig, Variation};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::optim::TrainConfig;

/// Which samples `train` fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainSubset {
    /// The gallery of `data.protocol`.
    Gallery,
    All,
}

/// Everything a command can be configured with. Defaults: the toy
/// `proposed` model, `TrainConfig::default()`, `SynthConfig::default()`,
/// the neutral-gallery protocol, every probe set, and an ablation over
/// baseline, model_a and proposed with seeds 1..=5.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_subset: TrainSubset,
    pub synth: SynthConfig,
    pub manifest: Option<PathBuf>,
    pub protocol: SplitScheme,
    /// Probe sets to report; empty means all.
    pub probe_sets: Vec<Variation>,
    pub ablate_variants: Vec<Variant>,
    pub ablate_seeds: Vec<u64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::toy(Variant::Proposed, 10),
            train: TrainConfig::default(),
            train_subset: TrainSubset::Gallery,
            synth: SynthConfig::default(),
            manifest: None,
            protocol: SplitScheme::NeutralGallery,
            probe_sets: Vec::new(),
            ablate_variants: vec![Variant::Baseline, Variant::ModelA, Variant::Proposed],
            ablate_seeds: (1..=5).collect(),
            out: None,
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("{key}: bad list item `{p}`"))))
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a number, got `{value}`")))
}

impl RunConfig {
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut out = self.model.to_entries();
        let t = &self.train;
        let s = &self.synth;
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("train.lr0", t.lr0.to_string());
        push("train.decay", t.decay.to_string());
        push("train.batch_size", t.batch_size.to_string());
        push("train.epochs", t.epochs.to_string());
        push("train.seed", t.seed.to_string());
        push("train.adam_beta1", t.beta1.to_string());
        push("train.adam_beta2", t.beta2.to_string());
        push("train.adam_eps", t.eps.to_string());
        push(
            "train.subset",
            match self.train_subset {
                TrainSubset::Gallery => "gallery",
                TrainSubset::All => "all",
            }
            .into(),
        );
        push("synth.ids", s.ids.to_string());
        push("synth.per_id", s.per_id.to_string());
        push("synth.extent", s.extent.to_string());
        push("synth.seed", s.seed.to_string());
        push("synth.mix", format_mix(&s.mix));
        push("synth.guidance", s.guidance.to_string());
        if let Some(m) = &self.manifest {
            push("data.manifest", m.display().to_string());
        }
        push("data.protocol", self.protocol.to_string());
        push("eval.probe_sets", join(&self.probe_sets));
        push("ablate.variants", join(&self.ablate_variants));
        push("ablate.seeds", join(&self.ablate_seeds));
        if let Some(o) = &self.out {
            push("paths.out", o.display().to_string());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut text = String::from("# effective configuration\n");
        for (k, v) in self.to_entries() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        text
    }

    /// Applies entries on top of `self`; unknown keys are rejected.
    pub fn apply(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        self.model.apply_entries(entries)?;
        for (key, value) in entries {
            let v = value.as_str();
            match key.as_str() {
                k if k.starts_with("model.") => {}
                "train.lr0" => self.train.lr0 = num(key, v)?,
                "train.decay" => self.train.decay = num(key, v)?,
                "train.batch_size" => self.train.batch_size = num(key, v)?,
                "train.epochs" => self.train.epochs = num(key, v)?,
                "train.seed" => self.train.seed = num(key, v)?,
                "train.adam_beta1" => self.train.beta1 = num(key, v)?,
                "train.adam_beta2" => self.train.beta2 = num(key, v)?,
                "train.adam_eps" => self.train.eps = num(key, v)?,
                "train.subset" => {
                    self.train_subset = match v {
                        "gallery" => TrainSubset::Gallery,
                        "all" => TrainSubset::All,
                        _ => return Err(Error::Config(format!("{key}: expected gallery or all"))),
                    }
                }
                "synth.ids" => self.synth.ids = num(key, v)?,
                "synth.per_id" => self.synth.per_id = num(key, v)?,
                "synth.extent" => self.synth.extent = num(key, v)?,
                "synth.seed" => self.synth.seed = num(key, v)?,
                "synth.mix" => self.synth.mix = parse_mix(v)?,
                "synth.guidance" => self.synth.guidance = v.parse()?,
                "data.manifest" => self.manifest = Some(PathBuf::from(v)),
                "data.protocol" => self.protocol = v.parse()?,
                "eval.probe_sets" => self.probe_sets = split_list(key, v)?,
                "ablate.variants" => self.ablate_variants = split_list(key, v)?,
                "ablate.seeds" => self.ablate_seeds = split_list(key, v)?,
                "paths.out" => self.out = Some(PathBuf::from(v)),
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_kv(text, path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>)> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let entries = parse_kv(&text, path)?;
        let mut cfg = RunConfig::default();
        cfg.apply(&entries)?;
        Ok((cfg, entries))
    }

    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("effective.conf");
        fs::write(&path, self.to_text())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_reloads_identically() {
        let mut cfg = RunConfig::default();
        cfg.model = cfg.model.with_variant(Variant::ModelB);
        cfg.train.lr0 = 3e-3;
        cfg.manifest = Some(PathBuf::from("d/manifest.tsv"));
        cfg.protocol = SplitScheme::Ratio { gallery: 0.5, seed: 4 };
        cfg.probe_sets = vec![Variation::Pose];
        cfg.synth.mix = vec![(Variation::Neutral, 1.5), (Variation::Occlusion, 1.0)];
        let back = RunConfig::parse(&cfg.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["train.lr = 1", "model.depth = 3", "color = blue"] {
            let err = RunConfig::parse(text, Path::new("x")).unwrap_err();
            assert!(err.to_string().contains("unknown key"), "{err}");
        }
    }
}
