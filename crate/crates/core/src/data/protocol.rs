use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{RGBDSample, Variation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitScheme {
    /// Neutral samples train the model; each other variation is a probe set.
    NeutralGallery,
    /// Per identity, a seeded `gallery` fraction trains and the rest are
    /// probes grouped by variation.
    Ratio { gallery: f64, seed: u64 },
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::NeutralGallery => f.write_str("neutral-gallery"),
            SplitScheme::Ratio { gallery, seed } => write!(f, "ratio:{gallery}:{seed}"),
        }
    }
}

impl FromStr for SplitScheme {
    type Err = Error;

    /// `neutral-gallery` or `ratio:<fraction>[:<seed>]`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "neutral-gallery" {
            return Ok(SplitScheme::NeutralGallery);
        }
        let bad = || Error::Config(format!("unknown protocol `{s}`"));
        let mut parts = s.strip_prefix("ratio:").ok_or_else(bad)?.split(':');
        let gallery: f64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let seed = match parts.next() {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => 0,
        };
        if parts.next().is_some() || !(gallery > 0.0 && gallery < 1.0) {
            return Err(bad());
        }
        Ok(SplitScheme::Ratio { gallery, seed })
    }
}

/// Sample indices for training (gallery) and per-variation probe sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolSplit {
    pub gallery: Vec<usize>,
    pub probes: BTreeMap<Variation, Vec<usize>>,
}

impl ProtocolSplit {
    pub fn probe_count(&self) -> usize {
        self.probes.values().map(Vec::len).sum()
    }

    /// Keeps only the listed probe sets.
    pub fn restrict(mut self, keep: &[Variation]) -> Self {
        self.probes.retain(|v, _| keep.contains(v));
        self
    }
}

pub fn split_protocol(samples: &[RGBDSample], scheme: SplitScheme) -> Result<ProtocolSplit> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut by_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_id.entry(s.identity).or_default().push(i);
    }
    let mut gallery = Vec::new();
    let mut probes: BTreeMap<Variation, Vec<usize>> = BTreeMap::new();
    match scheme {
        SplitScheme::NeutralGallery => {
            for (id, idx) in &by_id {
                let (neutral, rest): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| samples[i].variation == Variation::Neutral);
                if neutral.is_empty() {
                    return Err(Error::Config(format!("identity {id} has no neutral sample")));
                }
                if rest.is_empty() {
                    return Err(Error::Config(format!("identity {id} has no probe sample")));
                }
                gallery.extend(neutral);
                for i in rest {
                    probes.entry(samples[i].variation).or_default().push(i);
                }
            }
        }
        SplitScheme::Ratio { gallery: r, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (id, idx) in &by_id {
                if idx.len() < 2 {
                    return Err(Error::Config(format!(
                        "identity {id} needs at least two samples for a ratio split"
                    )));
                }
                let mut idx = idx.clone();
                idx.shuffle(&mut rng);
                let g = ((r * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
                gallery.extend_from_slice(&idx[..g]);
                for &i in &idx[g..] {
                    probes.entry(samples[i].variation).or_default().push(i);
                }
            }
            gallery.sort_unstable();
            probes.values_mut().for_each(|v| v.sort_unstable());
        }
    }
    let split = ProtocolSplit { gallery, probes };
    debug_assert!(disjoint(&split));
    Ok(split)
}

fn disjoint(split: &ProtocolSplit) -> bool {
    let g: BTreeSet<usize> = split.gallery.iter().copied().collect();
    split.probes.values().flatten().all(|i| !g.contains(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn set(ids: usize, neutral: usize, varied: &[Variation]) -> Vec<RGBDSample> {
        let mut out = Vec::new();
        for id in 0..ids {
            let vars = std::iter::repeat(Variation::Neutral).take(neutral).chain(varied.iter().copied());
            for v in vars {
                out.push(RGBDSample {
                    rgb: Tensor::zeros(vec![2, 2, 3]),
                    guidance: Tensor::zeros(vec![2, 2, 1]),
                    identity: id,
                    variation: v,
                });
            }
        }
        out
    }

    #[test]
    fn neutral_gallery_counts_and_filters() {
        use Variation::*;
        let samples = set(10, 2, &[Pose, Pose, Occlusion, Occlusion, Expression, Time]);
        let split = split_protocol(&samples, SplitScheme::NeutralGallery).unwrap();
        assert_eq!(split.gallery.len(), 20);
        assert_eq!(split.probe_count(), 60);
        assert!(disjoint(&split));
        assert!(split.probes[&Pose].iter().all(|&i| samples[i].variation == Pose));
        assert!(!split.probes.contains_key(&Neutral));
    }

    #[test]
    fn neutral_gallery_needs_neutral() {
        let samples = set(2, 0, &[Variation::Pose, Variation::Pose]);
        assert!(split_protocol(&samples, SplitScheme::NeutralGallery).is_err());
    }

    #[test]
    fn ratio_split_is_seeded_and_covers_identities() {
        let samples = set(4, 3, &[Variation::Pose, Variation::Time, Variation::Occlusion]);
        let scheme = SplitScheme::Ratio { gallery: 0.5, seed: 3 };
        let a = split_protocol(&samples, scheme).unwrap();
        assert_eq!(a, split_protocol(&samples, scheme).unwrap());
        assert!(disjoint(&a));
        assert_eq!(a.gallery.len() + a.probe_count(), samples.len());
        let probe_ids: BTreeSet<usize> =
            a.probes.values().flatten().map(|&i| samples[i].identity).collect();
        assert_eq!(probe_ids.len(), 4);
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("neutral-gallery".parse::<SplitScheme>().unwrap(), SplitScheme::NeutralGallery);
        let r: SplitScheme = "ratio:0.25:9".parse().unwrap();
        assert_eq!(r, SplitScheme::Ratio { gallery: 0.25, seed: 9 });
        assert_eq!(r.to_string().parse::<SplitScheme>().unwrap(), r);
        assert!("ratio:1.5".parse::<SplitScheme>().is_err());
        assert!("half".parse::<SplitScheme>().is_err());
    }
}
