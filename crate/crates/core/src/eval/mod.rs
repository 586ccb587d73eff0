//! Rank-1 identification, the ablation harness, Grad-CAM, attention-map and
//! embedding export.

mod ablate;
mod cam;

pub use ablate::{ablate, AblationRow, AblationTable, ABLATION_HEADER};
pub use cam::{export_attention, grad_cam, CamLayer, Heatmap};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{ProtocolSplit, RGBDSample, Variation};
use crate::error::{Error, Result};
use crate::model::{argmax, Model};
use crate::tensor::Real;

/// Anything that scores a sample over a fixed set of classes.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn logits(&self, sample: &RGBDSample) -> Result<Vec<f64>>;
}

impl<T: Real> Classifier for Model<T> {
    fn num_classes(&self) -> usize {
        Model::num_classes(self)
    }

    fn logits(&self, sample: &RGBDSample) -> Result<Vec<f64>> {
        Ok(self.predict(&sample.rgb.cast(), &sample.guidance.cast())?.logits)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SetResult {
    pub correct: usize,
    pub total: usize,
}

impl SetResult {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub sets: BTreeMap<Variation, SetResult>,
    /// `confusion[truth][predicted]` over all probes.
    pub confusion: Vec<Vec<usize>>,
}

pub const REPORT_HEADER: &str = "probe_set,correct,total,accuracy";

impl EvalReport {
    pub fn accuracy(&self, set: Variation) -> Option<f64> {
        self.sets.get(&set).map(SetResult::accuracy)
    }

    /// Unweighted mean of the per-set accuracies.
    pub fn average(&self) -> f64 {
        if self.sets.is_empty() {
            return 0.0;
        }
        self.sets.values().map(SetResult::accuracy).sum::<f64>() / self.sets.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for (v, r) in &self.sets {
            let _ = writeln!(out, "{v},{},{},{}", r.correct, r.total, r.accuracy());
        }
        let correct: usize = self.sets.values().map(|r| r.correct).sum();
        let total: usize = self.sets.values().map(|r| r.total).sum();
        let _ = writeln!(out, "average,{correct},{total},{}", self.average());
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn check_classes(model: &impl Classifier, samples: &[RGBDSample]) -> Result<()> {
    let data = samples.iter().map(|s| s.identity + 1).max().unwrap_or(0);
    if data > model.num_classes() {
        return Err(Error::ClassCount { model: model.num_classes(), data });
    }
    Ok(())
}

/// A probe is correct when the argmax of its logits (lowest index on ties)
/// equals its identity.
pub fn rank1(model: &impl Classifier, split: &ProtocolSplit, samples: &[RGBDSample]) -> Result<EvalReport> {
    check_classes(model, samples)?;
    let jobs: Vec<(Variation, usize)> = split
        .probes
        .iter()
        .flat_map(|(v, idx)| idx.iter().map(move |&i| (*v, i)))
        .collect();
    let preds = jobs
        .par_iter()
        .map(|&(_, i)| {
            let s = samples
                .get(i)
                .ok_or_else(|| Error::Config(format!("probe index {i} out of range")))?;
            Ok(argmax(&model.logits(s)?))
        })
        .collect::<Result<Vec<usize>>>()?;
    let n = model.num_classes();
    let mut report = EvalReport { sets: BTreeMap::new(), confusion: vec![vec![0; n]; n] };
    for (&(v, i), &p) in jobs.iter().zip(&preds) {
        let truth = samples[i].identity;
        let r = report.sets.entry(v).or_default();
        r.total += 1;
        r.correct += usize::from(p == truth);
        report.confusion[truth][p] += 1;
    }
    Ok(report)
}

/// `identity,e0,e1,...` header, then one row per sample.
pub fn embeddings_csv<T: Real>(model: &Model<T>, samples: &[RGBDSample]) -> Result<String> {
    let rows = samples
        .par_iter()
        .map(|s| Ok((s.identity, model.predict(&s.rgb.cast(), &s.guidance.cast())?.embedding)))
        .collect::<Result<Vec<_>>>()?;
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("identity");
    for k in 0..width {
        let _ = write!(out, ",e{k}");
    }
    out.push('\n');
    for (id, e) in rows {
        let _ = write!(out, "{id}");
        for v in e {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_embeddings<T: Real>(model: &Model<T>, samples: &[RGBDSample], path: &Path) -> Result<()> {
    let text = embeddings_csv(model, samples)?;
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
