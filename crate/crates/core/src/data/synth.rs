//! Deterministic synthetic RGB-D faces.
//!
//! Each identity is a parametric surface (an ellipsoidal head plus Gaussian
//! bumps for nose, brows, cheeks, eye sockets, mouth and chin) and an albedo
//! pattern, both drawn from an identity-seeded generator. Samples render the
//! surface under a per-sample similarity transform; RGB is Lambertian shading
//! times albedo, guidance is a range raster (or a thermal-like map).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{DatasetManifest, ManifestEntry, PnmImage, RGBDSample, Variation, MANIFEST_NAME};
use crate::error::{Error, Result};

/// Clipping planes (mm) recorded in the manifest of depth sets.
pub const DEPTH_PLANES: (u32, u32) = (450, 720);
const DEPTH_MAXVAL: u16 = 4095;
const WALL_MM: f64 = 1500.0;
const OCCLUDER_MM: f64 = 500.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceKind {
    /// 16-bit range in millimetres, normalized with [`DEPTH_PLANES`].
    Depth,
    /// 8-bit temperature-like map with no clipping planes.
    Thermal,
}

impl fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidanceKind::Depth => "depth",
            GuidanceKind::Thermal => "thermal",
        })
    }
}

impl FromStr for GuidanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(GuidanceKind::Depth),
            "thermal" => Ok(GuidanceKind::Thermal),
            _ => Err(Error::Config(format!("unknown guidance kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub ids: usize,
    pub per_id: usize,
    pub extent: usize,
    pub seed: u64,
    /// Relative weights; every identity gets the same allocation.
    pub mix: Vec<(Variation, f64)>,
    pub guidance: GuidanceKind,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            ids: 10,
            per_id: 20,
            extent: 64,
            seed: 0,
            mix: vec![
                (Variation::Neutral, 2.0),
                (Variation::Pose, 1.0),
                (Variation::Expression, 1.0),
                (Variation::Occlusion, 1.0),
                (Variation::Illumination, 1.0),
                (Variation::Time, 1.0),
            ],
            guidance: GuidanceKind::Depth,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ids < 2 || self.per_id < 2 {
            return Err(Error::Config(format!(
                "synthetic sets need ids >= 2 and per_id >= 2, got {} and {}",
                self.ids, self.per_id
            )));
        }
        if self.extent < 8 {
            return Err(Error::Config(format!("extent {} is too small", self.extent)));
        }
        if self.mix.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0))
            || self.mix.iter().all(|(_, w)| *w == 0.0)
        {
            return Err(Error::Config("variation mix needs a positive weight".into()));
        }
        Ok(())
    }

    /// Variation of each of the `per_id` samples of an identity. Counts come
    /// from largest-remainder rounding of the mix; at least one sample is
    /// neutral and it comes first.
    pub fn allocation(&self) -> Vec<Variation> {
        let mut mix: Vec<(Variation, f64)> = Vec::new();
        for &(v, w) in &self.mix {
            match mix.iter_mut().find(|(u, _)| *u == v) {
                Some(slot) => slot.1 += w,
                None => mix.push((v, w)),
            }
        }
        if !mix.iter().any(|(v, _)| *v == Variation::Neutral) {
            mix.insert(0, (Variation::Neutral, 0.0));
        }
        let total: f64 = mix.iter().map(|(_, w)| w).sum();
        let quotas: Vec<f64> = mix
            .iter()
            .map(|(_, w)| w / total * self.per_id as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..mix.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let short = self.per_id - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        let neutral = mix.iter().position(|(v, _)| *v == Variation::Neutral).unwrap();
        if counts[neutral] == 0 {
            let donor = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).unwrap();
            counts[donor] -= 1;
            counts[neutral] = 1;
        }
        let mut out = vec![Variation::Neutral; counts[neutral]];
        for (i, (v, _)) in mix.iter().enumerate() {
            if i != neutral {
                out.extend(std::iter::repeat(*v).take(counts[i]));
            }
        }
        out
    }
}

/// Parses `neutral:2,pose:1` into a mix.
pub fn parse_mix(s: &str) -> Result<Vec<(Variation, f64)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (v, w) = t
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("mix entry `{t}` needs variation:weight")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad mix weight `{w}`")))?;
            Ok((v.trim().parse()?, w))
        })
        .collect()
}

pub fn format_mix(mix: &[(Variation, f64)]) -> String {
    mix.iter()
        .map(|(v, w)| format!("{v}:{w}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// One rendered sample, kept in quantized form so it can be compared with
/// what is read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub identity: usize,
    pub variation: Variation,
    /// Position within the identity's samples.
    pub index: usize,
    pub rgb: PnmImage,
    pub guidance: PnmImage,
    /// Pixels inside the head outline.
    pub face_mask: Vec<bool>,
}

impl SynthSample {
    pub fn file_stem(&self) -> String {
        format!("{:04}_{:03}", self.identity, self.index)
    }

    pub fn to_sample(&self) -> Result<RGBDSample> {
        let planes = (self.guidance.maxval > 255).then_some(DEPTH_PLANES);
        RGBDSample::from_images(self.identity, self.variation, &self.rgb, &self.guidance, planes)
    }
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    x: f64,
    y: f64,
    sx: f64,
    sy: f64,
    amp: f64,
}

impl Bump {
    fn at(&self, x: f64, y: f64) -> f64 {
        let dx = (x - self.x) / self.sx;
        let dy = (y - self.y) / self.sy;
        self.amp * (-0.5 * (dx * dx + dy * dy)).exp()
    }
}

#[derive(Clone, Debug)]
struct Identity {
    // head ellipse semi-axes and height
    a: f64,
    b: f64,
    h: f64,
    bumps: Vec<Bump>,
    // indices into `bumps`
    mouth: usize,
    brows: [usize; 2],
    skin: [f64; 3],
    hair: [f64; 3],
    hairline: f64,
    lips: [f64; 3],
    // sinusoid albedo pattern
    freq: [f64; 2],
    phase: f64,
    pattern: f64,
    // thermal hot spots
    heat: Vec<Bump>,
}

fn range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

impl Identity {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let mut r = |lo, hi| range(rng, lo, hi);
        let nose = Bump { x: r(-0.04, 0.04), y: r(0.0, 0.12), sx: r(0.07, 0.13), sy: r(0.14, 0.26), amp: r(0.2, 0.4) };
        let eye_y = r(-0.22, -0.1);
        let eye_dx = r(0.2, 0.3);
        let eye_amp = -r(0.08, 0.16);
        let brow_y = eye_y - r(0.1, 0.18);
        let brow_amp = r(0.04, 0.14);
        let cheek_y = r(0.12, 0.28);
        let cheek_dx = r(0.26, 0.38);
        let cheek_amp = r(0.04, 0.14);
        let mut bumps = vec![
            nose,
            Bump { x: -eye_dx, y: eye_y, sx: 0.09, sy: 0.06, amp: eye_amp },
            Bump { x: eye_dx, y: eye_y, sx: 0.09, sy: 0.06, amp: eye_amp },
            Bump { x: -eye_dx, y: brow_y, sx: 0.14, sy: 0.05, amp: brow_amp },
            Bump { x: eye_dx, y: brow_y, sx: 0.14, sy: 0.05, amp: brow_amp },
            Bump { x: -cheek_dx, y: cheek_y, sx: 0.13, sy: 0.12, amp: cheek_amp },
            Bump { x: cheek_dx, y: cheek_y, sx: 0.13, sy: 0.12, amp: cheek_amp },
            Bump { x: 0.0, y: r(0.4, 0.5), sx: r(0.12, 0.2), sy: 0.05, amp: -r(0.03, 0.09) },
            Bump { x: 0.0, y: r(0.62, 0.72), sx: r(0.12, 0.2), sy: 0.08, amp: r(0.04, 0.1) },
        ];
        for _ in 0..3 {
            bumps.push(Bump {
                x: r(-0.4, 0.4),
                y: r(-0.5, 0.6),
                sx: r(0.06, 0.15),
                sy: r(0.06, 0.15),
                amp: r(-0.1, 0.1),
            });
        }
        let tone = r(0.35, 0.9);
        let skin = [tone, tone * r(0.7, 0.85), tone * r(0.55, 0.75)];
        let dark = r(0.05, 0.5);
        let hair = [dark, dark * r(0.6, 1.0), dark * r(0.4, 0.9)];
        let lips = [r(0.5, 0.8), r(0.2, 0.4), r(0.25, 0.4)];
        let heat = (0..4)
            .map(|_| Bump { x: r(-0.4, 0.4), y: r(-0.5, 0.5), sx: r(0.08, 0.2), sy: r(0.08, 0.2), amp: r(0.05, 0.2) })
            .collect();
        Identity {
            a: r(0.55, 0.7),
            b: r(0.72, 0.86),
            h: r(0.45, 0.6),
            bumps,
            mouth: 7,
            brows: [3, 4],
            skin,
            hair,
            hairline: r(-0.65, -0.45),
            lips,
            freq: [r(3.0, 9.0), r(3.0, 9.0)],
            phase: r(0.0, std::f64::consts::TAU),
            pattern: r(0.03, 0.12),
            heat,
        }
    }
}

/// Per-sample rendering parameters.
#[derive(Clone, Debug)]
struct Pose {
    angle: f64,
    shift: [f64; 2],
    scale: f64,
    brightness: f64,
    tone_shift: f64,
    mouth_amp: f64,
    mouth_width: f64,
    brow_lift: f64,
    occluder: Option<Occluder>,
}

#[derive(Clone, Copy, Debug)]
struct Occluder {
    // pixel rectangle, end-exclusive
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    shade: f64,
}

impl Pose {
    fn base() -> Self {
        Pose {
            angle: 0.0,
            shift: [0.0, 0.0],
            scale: 1.0,
            brightness: 1.0,
            tone_shift: 0.0,
            mouth_amp: 0.0,
            mouth_width: 1.0,
            brow_lift: 0.0,
            occluder: None,
        }
    }

    fn jittered(rng: &mut ChaCha8Rng) -> Self {
        Pose {
            angle: range(rng, -5.0, 5.0).to_radians(),
            shift: [range(rng, -0.04, 0.04), range(rng, -0.04, 0.04)],
            scale: range(rng, 0.95, 1.05),
            ..Pose::base()
        }
    }

    fn draw(variation: Variation, first: bool, extent: usize, rng: &mut ChaCha8Rng) -> Self {
        match variation {
            Variation::Neutral if first => Pose::base(),
            Variation::Neutral => Pose::jittered(rng),
            Variation::Illumination => Pose {
                brightness: range(rng, 0.4, 1.3),
                ..Pose::base()
            },
            Variation::Pose => {
                let deg = range(rng, 10.0, 30.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                Pose {
                    angle: (sign * deg).to_radians(),
                    ..Pose::jittered(rng)
                }
            }
            Variation::Expression => {
                let p = Pose::jittered(rng);
                Pose {
                    mouth_amp: range(rng, -0.08, 0.06),
                    mouth_width: range(rng, 0.7, 1.5),
                    brow_lift: range(rng, -0.06, 0.06),
                    ..p
                }
            }
            Variation::Time => {
                let p = Pose::jittered(rng);
                Pose {
                    tone_shift: range(rng, -0.08, 0.08),
                    scale: p.scale * range(rng, 0.95, 1.05),
                    ..p
                }
            }
            Variation::Occlusion => {
                let p = Pose::jittered(rng);
                let area = range(rng, 0.10, 0.25) * (extent * extent) as f64;
                let aspect = range(rng, 0.5, 2.0);
                let w = ((area * aspect).sqrt().round() as usize).clamp(1, extent);
                let h = ((area / w as f64).round() as usize).clamp(1, extent);
                let x0 = rng.gen_range(0..=extent - w);
                let y0 = rng.gen_range(0..=extent - h);
                Pose {
                    occluder: Some(Occluder { x0, y0, x1: x0 + w, y1: y0 + h, shade: range(rng, 0.05, 0.35) }),
                    ..p
                }
            }
        }
    }
}

struct Render {
    rgb: Vec<f64>,
    depth_mm: Vec<f64>,
    thermal: Vec<f64>,
    mask: Vec<bool>,
}

fn render(id: &Identity, pose: &Pose, extent: usize) -> Render {
    let mut bumps = id.bumps.clone();
    bumps[id.mouth].amp += pose.mouth_amp;
    bumps[id.mouth].sx *= pose.mouth_width;
    for &b in &id.brows {
        bumps[b].y -= pose.brow_lift;
        bumps[b].amp += pose.brow_lift.abs();
    }
    let (sin, cos) = pose.angle.sin_cos();
    // canonical face coordinates of pixel centre (px, py)
    let to_face = |px: f64, py: f64| {
        let x = (2.0 * px + 1.0) / extent as f64 - 1.0 - pose.shift[0];
        let y = (2.0 * py + 1.0) / extent as f64 - 1.0 - pose.shift[1];
        let (x, y) = (cos * x + sin * y, -sin * x + cos * y);
        (x / pose.scale, y / pose.scale)
    };
    let surface = |x: f64, y: f64| -> Option<f64> {
        let r2 = (x / id.a).powi(2) + (y / id.b).powi(2);
        if r2 >= 1.0 {
            return None;
        }
        let dome = id.h * (1.0 - r2).sqrt();
        // bumps fade out towards the outline
        let fade = (1.0 - r2).min(0.3) / 0.3;
        let detail: f64 = bumps.iter().map(|b| b.at(x, y)).sum();
        Some((dome + fade * detail).clamp(0.0, 1.0))
    };
    let light = {
        let l: [f64; 3] = [-0.3, -0.4, 1.0];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    let n = extent * extent;
    let mut out = Render {
        rgb: vec![0.0; n * 3],
        depth_mm: vec![WALL_MM; n],
        thermal: vec![0.15; n],
        mask: vec![false; n],
    };
    let d = 1.0 / extent as f64;
    for py in 0..extent {
        for px in 0..extent {
            let i = py * extent + px;
            let (x, y) = to_face(px as f64, py as f64);
            let Some(z) = surface(x, y) else {
                let bg = [0.36, 0.4, 0.45];
                for c in 0..3 {
                    out.rgb[i * 3 + c] = bg[c] * pose.brightness;
                }
                continue;
            };
            out.mask[i] = true;
            out.depth_mm[i] = 715.0 - 260.0 * z;
            let zx = (surface(x + d, y).unwrap_or(0.0) - surface(x - d, y).unwrap_or(0.0)) / (2.0 * d);
            let zy = (surface(x, y + d).unwrap_or(0.0) - surface(x, y - d).unwrap_or(0.0)) / (2.0 * d);
            let norm = (zx * zx + zy * zy + 1.0).sqrt();
            let lambert = ((-zx * light[0] - zy * light[1] + light[2]) / norm).max(0.0);
            let shade = (0.3 + 0.7 * lambert) * pose.brightness;
            let albedo: [f64; 3] = if y < id.hairline + 0.1 * (3.0 * x).cos() {
                id.hair
            } else if bumps[id.mouth].at(x, y) / bumps[id.mouth].amp.abs().max(1e-9) < -0.5 {
                id.lips
            } else {
                let p = id.pattern * (id.freq[0] * x + id.phase).sin() * (id.freq[1] * y).cos();
                let mut s = id.skin;
                for v in s.iter_mut() {
                    *v += p + pose.tone_shift;
                }
                s
            };
            for c in 0..3 {
                out.rgb[i * 3 + c] = albedo[c] * shade;
            }
            let heat: f64 = id.heat.iter().map(|b| b.at(x, y)).sum();
            out.thermal[i] = 0.55 + 0.2 * z + heat - 0.15 * bumps[0].at(x, y).max(0.0);
        }
    }
    if let Some(o) = pose.occluder {
        for py in o.y0..o.y1 {
            for px in o.x0..o.x1 {
                let i = py * extent + px;
                for c in 0..3 {
                    out.rgb[i * 3 + c] = o.shade * pose.brightness;
                }
                out.depth_mm[i] = OCCLUDER_MM;
                out.thermal[i] = 0.3;
            }
        }
    }
    out
}

fn identity_rng(seed: u64, identity: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(identity as u64);
    rng
}

fn sample_rng(seed: u64, identity: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a3b_1e00_0000);
    rng.set_stream(((identity as u64) << 32) | index as u64);
    rng
}

/// Renders every sample in memory, identity-major.
pub fn synth_samples(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let plan = cfg.allocation();
    let h = cfg.extent;
    let jobs: Vec<(usize, usize)> = (0..cfg.ids)
        .flat_map(|id| (0..cfg.per_id).map(move |k| (id, k)))
        .collect();
    let identities: Vec<Identity> = (0..cfg.ids)
        .map(|id| Identity::draw(&mut identity_rng(cfg.seed, id)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(id, k)| {
            let variation = plan[k];
            let mut rng = sample_rng(cfg.seed, id, k);
            let pose = Pose::draw(variation, k == 0, h, &mut rng);
            let r = render(&identities[id], &pose, h);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let rgb: Vec<f32> = r
                .rgb
                .iter()
                .map(|v| (v + noise.sample(&mut rng)) as f32)
                .collect();
            let guidance = match cfg.guidance {
                GuidanceKind::Depth => PnmImage {
                    width: h,
                    height: h,
                    channels: 1,
                    maxval: DEPTH_MAXVAL,
                    samples: r.depth_mm.iter().map(|&mm| mm.round() as u16).collect(),
                },
                GuidanceKind::Thermal => {
                    let t: Vec<f32> = r.thermal.iter().map(|&v| v as f32).collect();
                    PnmImage::from_unit(h, h, 1, 255, &t)
                }
            };
            SynthSample {
                identity: id,
                variation,
                index: k,
                rgb: PnmImage::from_unit(h, h, 3, 255, &rgb),
                guidance,
                face_mask: r.mask,
            }
        })
        .collect())
}

/// Renders the set and writes `manifest.tsv`, `rgb/*.ppm` and
/// `guidance/*.pgm` under `out`.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<Vec<SynthSample>> {
    let samples = synth_samples(cfg)?;
    for sub in ["rgb", "guidance"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    let entries = samples
        .par_iter()
        .map(|s| {
            let stem = s.file_stem();
            let rgb = PathBuf::from("rgb").join(format!("{stem}.ppm"));
            let guidance = PathBuf::from("guidance").join(format!("{stem}.pgm"));
            s.rgb.write(&out.join(&rgb))?;
            s.guidance.write(&out.join(&guidance))?;
            Ok(ManifestEntry {
                identity: s.identity,
                variation: s.variation,
                rgb,
                guidance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        entries,
        depth_planes: (cfg.guidance == GuidanceKind::Depth).then_some(DEPTH_PLANES),
    };
    let header = vec![format!(
        "synthetic ids={} per_id={} extent={} seed={} guidance={} mix={}",
        cfg.ids,
        cfg.per_id,
        cfg.extent,
        cfg.seed,
        cfg.guidance,
        format_mix(&cfg.mix)
    )];
    let path = out.join(MANIFEST_NAME);
    fs::write(&path, manifest.render(&header))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_manifest;

    fn small() -> SynthConfig {
        SynthConfig {
            ids: 3,
            per_id: 6,
            extent: 32,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn allocation_counts_and_neutral_first() {
        let cfg = SynthConfig::default();
        let plan = cfg.allocation();
        assert_eq!(plan.len(), 20);
        assert_eq!(plan[0], Variation::Neutral);
        let count = |v| plan.iter().filter(|&&p| p == v).count();
        assert_eq!(count(Variation::Neutral), 5);
        assert_eq!(count(Variation::Pose), 3);
        let only_pose = SynthConfig {
            per_id: 3,
            mix: vec![(Variation::Pose, 1.0)],
            ..cfg
        };
        assert_eq!(
            only_pose.allocation(),
            vec![Variation::Neutral, Variation::Pose, Variation::Pose]
        );
    }

    #[test]
    fn counts_and_validation() {
        let cfg = SynthConfig { ids: 10, per_id: 20, extent: 16, ..SynthConfig::default() };
        assert_eq!(synth_samples(&cfg).unwrap().len(), 200);
        assert!(synth_samples(&SynthConfig { ids: 1, ..cfg.clone() }).is_err());
        assert!(synth_samples(&SynthConfig { per_id: 1, ..cfg }).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_samples(&small()).unwrap();
        let b = synth_samples(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_samples(&SynthConfig { seed: 12, ..small() }).unwrap();
        assert_ne!(a[0].rgb, c[0].rgb);
    }

    #[test]
    fn illumination_keeps_neutral_guidance() {
        let cfg = SynthConfig {
            mix: vec![(Variation::Neutral, 1.0), (Variation::Illumination, 1.0)],
            ..small()
        };
        let s = synth_samples(&cfg).unwrap();
        for id in 0..cfg.ids {
            let base = &s[id * cfg.per_id];
            assert_eq!(base.variation, Variation::Neutral);
            for x in s[id * cfg.per_id..(id + 1) * cfg.per_id]
                .iter()
                .filter(|x| x.variation == Variation::Illumination)
            {
                assert_eq!(x.guidance, base.guidance);
                assert_ne!(x.rgb, base.rgb);
            }
        }
    }

    #[test]
    fn identities_differ_in_guidance() {
        let s = synth_samples(&SynthConfig { ids: 6, per_id: 2, ..small() }).unwrap();
        let bases: Vec<_> = s.iter().filter(|x| x.index == 0).collect();
        for i in 0..bases.len() {
            for j in i + 1..bases.len() {
                assert_ne!(bases[i].guidance.samples, bases[j].guidance.samples);
            }
        }
    }

    #[test]
    fn occlusion_covers_expected_area() {
        let cfg = SynthConfig { mix: vec![(Variation::Occlusion, 1.0)], ..small() };
        for s in synth_samples(&cfg).unwrap().iter().filter(|s| s.variation == Variation::Occlusion) {
            let hit = s.guidance.samples.iter().filter(|&&v| v == OCCLUDER_MM as u16).count();
            let frac = hit as f64 / (32.0 * 32.0);
            assert!((0.08..=0.27).contains(&frac), "{frac}");
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [GuidanceKind::Depth, GuidanceKind::Thermal] {
            let out = dir.path().join(kind.to_string());
            let cfg = SynthConfig { guidance: kind, ..small() };
            let made = synth_generate(&cfg, &out).unwrap();
            let ds = load_manifest(&out.join(MANIFEST_NAME)).unwrap();
            assert_eq!(ds.samples.len(), made.len());
            for (m, (e, s)) in made.iter().zip(ds.manifest.entries.iter().zip(&ds.samples)) {
                assert_eq!(PnmImage::read(&out.join(&e.rgb)).unwrap(), m.rgb);
                assert_eq!(PnmImage::read(&out.join(&e.guidance)).unwrap(), m.guidance);
                assert_eq!(s, &m.to_sample().unwrap());
            }
        }
    }

    #[test]
    fn mix_parses() {
        let m = parse_mix("neutral:2, pose:1").unwrap();
        assert_eq!(m, vec![(Variation::Neutral, 2.0), (Variation::Pose, 1.0)]);
        assert_eq!(parse_mix(&format_mix(&m)).unwrap(), m);
        assert!(parse_mix("pose").is_err());
    }
}
