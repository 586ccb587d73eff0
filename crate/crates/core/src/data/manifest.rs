use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{PnmImage, RGBDSample, Variation};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub identity: usize,
    pub variation: Variation,
    pub rgb: PathBuf,
    pub guidance: PathBuf,
}

/// Parsed `identity<TAB>variation<TAB>rgb<TAB>guidance` lines. Paths are
/// relative to `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// Clipping planes from a `# depth_planes near=N far=F` header line.
    pub depth_planes: Option<(u32, u32)>,
}

impl DatasetManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        let mut depth_planes = None;
        for (n, raw) in text.lines().enumerate() {
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            };
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(rest) = comment.trim().strip_prefix("depth_planes") {
                    depth_planes = Some(parse_planes(rest).map_err(err)?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let identity = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad identity `{}`", fields[0])))?;
            let variation = fields[1]
                .trim()
                .parse()
                .map_err(|_| err(format!("bad variation `{}`", fields[1])))?;
            entries.push(ManifestEntry {
                identity,
                variation,
                rgb: PathBuf::from(fields[2].trim()),
                guidance: PathBuf::from(fields[3].trim()),
            });
        }
        Ok(DatasetManifest {
            root,
            entries,
            depth_planes,
        })
    }

    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            out.push_str(&format!("# {h}\n"));
        }
        if let Some((near, far)) = self.depth_planes {
            out.push_str(&format!("# depth_planes near={near} far={far}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.identity,
                e.variation,
                e.rgb.display(),
                e.guidance.display()
            ));
        }
        out
    }
}

fn parse_planes(rest: &str) -> std::result::Result<(u32, u32), String> {
    let (mut near, mut far) = (None, None);
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("bad depth_planes token `{tok}`"))?;
        let v: u32 = v.parse().map_err(|_| format!("bad depth plane `{v}`"))?;
        match k {
            "near" => near = Some(v),
            "far" => far = Some(v),
            _ => return Err(format!("unknown depth_planes key `{k}`")),
        }
    }
    match (near, far) {
        (Some(n), Some(f)) if n < f => Ok((n, f)),
        (Some(_), Some(_)) => Err("near plane must be below far plane".into()),
        _ => Err("depth_planes needs near= and far=".into()),
    }
}

/// Decoded samples with contiguous 0-based labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<RGBDSample>,
    /// Original identity → label, present when the manifest's identities
    /// were not already `0..n`.
    pub relabeled: Option<BTreeMap<usize, usize>>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.identity + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Reads a manifest and decodes every raster it references.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let manifest = DatasetManifest::parse(&text, path)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ids: std::collections::BTreeSet<usize> =
        manifest.entries.iter().map(|e| e.identity).collect();
    let contiguous = ids.iter().copied().eq(0..ids.len());
    let mapping: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let planes = manifest.depth_planes;
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| {
            let rgb = PnmImage::read(&manifest.root.join(&e.rgb))?;
            let guidance = PnmImage::read(&manifest.root.join(&e.guidance))?;
            RGBDSample::from_images(mapping[&e.identity], e.variation, &rgb, &guidance, planes)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = samples.first() {
        let e = first.extent();
        if samples.iter().any(|s| s.extent() != e) {
            return Err(Error::Config("all rasters must share one extent".into()));
        }
    }
    Ok(Dataset {
        manifest,
        samples,
        relabeled: (!contiguous).then_some(mapping),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(dir: &Path, name: &str, value: u16) {
        let mut rgb = PnmImage::new(4, 4, 3, 255);
        rgb.samples.iter_mut().for_each(|s| *s = value);
        rgb.write(&dir.join(format!("{name}.ppm"))).unwrap();
        let mut g = PnmImage::new(4, 4, 1, 255);
        g.samples.iter_mut().for_each(|s| *s = value);
        g.write(&dir.join(format!("{name}.pgm"))).unwrap();
    }

    #[test]
    fn empty_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(&p, "# nothing here\n").unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::EmptyDataset)));
    }

    #[test]
    fn one_line_one_sample() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", 51);
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(&p, "0\tneutral\ta.ppm\ta.pgm\n").unwrap();
        let ds = load_manifest(&p).unwrap();
        assert_eq!(ds.samples.len(), 1);
        assert_eq!(ds.samples[0].identity, 0);
        assert_eq!(ds.samples[0].rgb.data()[0], 51.0 / 255.0);
        assert!(ds.relabeled.is_none());
    }

    #[test]
    fn non_contiguous_identities_are_remapped() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "a", 1);
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(
            &p,
            "7\tneutral\ta.ppm\ta.pgm\n3\tpose\ta.ppm\ta.pgm\n7\tpose\ta.ppm\ta.pgm\n",
        )
        .unwrap();
        let ds = load_manifest(&p).unwrap();
        let labels: Vec<usize> = ds.samples.iter().map(|s| s.identity).collect();
        assert_eq!(labels, vec![1, 0, 1]);
        let map = ds.relabeled.unwrap();
        assert_eq!(map[&3], 0);
        assert_eq!(map[&7], 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(&p, "# header\n0\tneutral\ta.ppm\n").unwrap();
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        fs::write(&p, "0\tsideways\ta.ppm\ta.pgm\n").unwrap();
        assert!(load_manifest(&p).unwrap_err().to_string().contains("variation"));
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(&p, "0\tneutral\tnope.ppm\tnope.pgm\n").unwrap();
        let err = load_manifest(&p).unwrap_err().to_string();
        assert!(err.contains("nope.ppm"), "{err}");
    }

    #[test]
    fn depth_planes_header_normalizes_guidance() {
        let dir = tempfile::tempdir().unwrap();
        let mut rgb = PnmImage::new(2, 2, 3, 255);
        rgb.samples.fill(10);
        rgb.write(&dir.path().join("a.ppm")).unwrap();
        let mut g = PnmImage::new(2, 2, 1, 4095);
        g.samples = vec![50, 125, 200, 3000];
        g.write(&dir.path().join("a.pgm")).unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        fs::write(&p, "# depth_planes near=50 far=200\n0\tneutral\ta.ppm\ta.pgm\n").unwrap();
        let ds = load_manifest(&p).unwrap();
        assert_eq!(ds.manifest.depth_planes, Some((50, 200)));
        assert_eq!(ds.samples[0].guidance.data(), &[0.0, 0.5, 1.0, 0.0]);
    }
}
