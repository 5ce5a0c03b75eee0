//! Synthetic CT-like slices, HU windowing, D4 augmentation, fold splits and
//! on-disk formats.

mod augment;
mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::kvconf::KvConfig;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub use augment::{augment, D4};
pub use io::{
    decode_mask, encode_mask, load_dataset, read_mask, read_tensor, save_dataset, write_mask,
    write_tensor, MASK_MAGIC, MASK_VERSION,
};

/// Integer class ids, row-major, every id `< num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    h: usize,
    w: usize,
    num_classes: u8,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(h: usize, w: usize, num_classes: u8, labels: Vec<u8>) -> Result<Self> {
        if h == 0 || w == 0 || labels.len() != h * w {
            return Err(Error::Shape(format!(
                "mask {h}×{w} with {} labels",
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::Data(format!(
                "num_classes must be ≥ 2, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "class id {bad} ≥ num_classes {num_classes}"
            )));
        }
        Ok(LabelMask {
            h,
            w,
            num_classes,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.labels[i * self.w + j]
    }

    /// Binary raster of one class.
    pub fn class_pixels(&self, class: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == class).collect()
    }
}

/// Intensity window in HU, `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub lo: f64,
    pub hi: f64,
}

impl WindowSpec {
    pub const LIVER: WindowSpec = WindowSpec {
        lo: -40.0,
        hi: 160.0,
    };
    pub const KIDNEY: WindowSpec = WindowSpec {
        lo: -200.0,
        hi: 300.0,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!("window lo {lo} must be < hi {hi}")));
        }
        Ok(WindowSpec { lo, hi })
    }
}

/// Clamps to `[lo, hi]` and maps affinely onto `[0, 1]`.
pub fn hu_window(image: &Tensor, w: WindowSpec) -> Tensor {
    let span = w.hi - w.lo;
    let data = image
        .data()
        .iter()
        .map(|&v| (v.clamp(w.lo, w.hi) - w.lo) / span)
        .collect();
    Tensor::new(data, image.shape()).expect("shape unchanged")
}

/// Which structure is the foreground when `num_classes = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinaryTarget {
    /// Tumor is class 1; organ tissue counts as background.
    #[default]
    Tumor,
    /// Organ and tumor together are class 1.
    Organ,
}

impl std::str::FromStr for BinaryTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tumor" => Ok(BinaryTarget::Tumor),
            "organ" => Ok(BinaryTarget::Organ),
            _ => Err(Error::Config(format!("unknown binary target {s:?}"))),
        }
    }
}

impl std::fmt::Display for BinaryTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinaryTarget::Tumor => "tumor",
            BinaryTarget::Organ => "organ",
        })
    }
}

/// `(mean, std)` of a pseudo-HU intensity distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensity {
    pub mean: f64,
    pub std: f64,
}

/// Everything the generator needs; the dataset is a pure function of it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Square slice extent, a power of two.
    pub image_size: usize,
    pub num_cases: usize,
    pub slices_min: usize,
    pub slices_max: usize,
    /// 2 (binary) or 3 (background, organ, tumor).
    pub num_classes: usize,
    pub binary_target: BinaryTarget,
    pub background: Intensity,
    pub organ: Intensity,
    pub tumor: Intensity,
    /// Organ ellipse semi-axes in pixels.
    pub organ_radius_min: f64,
    pub organ_radius_max: f64,
    pub tumor_count_min: usize,
    pub tumor_count_max: usize,
    pub tumor_radius_min: f64,
    pub tumor_radius_max: f64,
    /// Additive per-pixel Gaussian noise on top of the class draws.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            image_size: 64,
            num_cases: 40,
            slices_min: 3,
            slices_max: 5,
            num_classes: 2,
            binary_target: BinaryTarget::Tumor,
            background: Intensity {
                mean: -100.0,
                std: 30.0,
            },
            organ: Intensity {
                mean: 80.0,
                std: 20.0,
            },
            tumor: Intensity {
                mean: 30.0,
                std: 20.0,
            },
            organ_radius_min: 14.0,
            organ_radius_max: 22.0,
            tumor_count_min: 1,
            tumor_count_max: 3,
            tumor_radius_min: 3.0,
            tumor_radius_max: 7.0,
            noise_std: 10.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.image_size.is_power_of_two() || self.image_size < 16 {
            return bad(format!(
                "image_size must be a power of two ≥ 16, got {}",
                self.image_size
            ));
        }
        if self.num_cases == 0 {
            return bad("num_cases must be ≥ 1".into());
        }
        if self.slices_min == 0 || self.slices_min > self.slices_max {
            return bad(format!(
                "bad slice range {}..={}",
                self.slices_min, self.slices_max
            ));
        }
        if !(2..=3).contains(&self.num_classes) {
            return bad(format!(
                "num_classes must be 2 or 3, got {}",
                self.num_classes
            ));
        }
        if self.tumor_count_min > self.tumor_count_max {
            return bad("tumor_count_min > tumor_count_max".into());
        }
        if !(0.0 < self.organ_radius_min && self.organ_radius_min <= self.organ_radius_max) {
            return bad("bad organ radius range".into());
        }
        if !(0.0 < self.tumor_radius_min && self.tumor_radius_min <= self.tumor_radius_max) {
            return bad("bad tumor radius range".into());
        }
        if self.tumor_radius_max >= self.organ_radius_min {
            return bad(format!(
                "infeasible geometry: tumor radius {} ≥ organ radius {}",
                self.tumor_radius_max, self.organ_radius_min
            ));
        }
        if self.organ_radius_max * 1.25 >= self.image_size as f64 / 2.0 {
            return bad("organ does not fit inside the image".into());
        }
        let stds = [
            self.background.std,
            self.organ.std,
            self.tumor.std,
            self.noise_std,
        ];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("standard deviations must be finite and ≥ 0".into());
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("image_size".into(), self.image_size.to_string()),
            ("num_cases".into(), self.num_cases.to_string()),
            ("slices_min".into(), self.slices_min.to_string()),
            ("slices_max".into(), self.slices_max.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            ("binary_target".into(), self.binary_target.to_string()),
        ];
        for (name, d) in [
            ("background", self.background),
            ("organ", self.organ),
            ("tumor", self.tumor),
        ] {
            e.push((format!("{name}_mean"), d.mean.to_string()));
            e.push((format!("{name}_std"), d.std.to_string()));
        }
        for (k, v) in [
            ("organ_radius_min", self.organ_radius_min.to_string()),
            ("organ_radius_max", self.organ_radius_max.to_string()),
            ("tumor_count_min", self.tumor_count_min.to_string()),
            ("tumor_count_max", self.tumor_count_max.to_string()),
            ("tumor_radius_min", self.tumor_radius_min.to_string()),
            ("tumor_radius_max", self.tumor_radius_max.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            e.push((k.into(), v));
        }
        e
    }

    /// Applies every present key; unknown keys are left in `kv`.
    pub fn apply(&mut self, kv: &mut KvConfig) -> Result<()> {
        kv.take_into("image_size", &mut self.image_size)?;
        kv.take_into("num_cases", &mut self.num_cases)?;
        kv.take_into("slices_min", &mut self.slices_min)?;
        kv.take_into("slices_max", &mut self.slices_max)?;
        kv.take_into("num_classes", &mut self.num_classes)?;
        kv.take_into("binary_target", &mut self.binary_target)?;
        kv.take_into("background_mean", &mut self.background.mean)?;
        kv.take_into("background_std", &mut self.background.std)?;
        kv.take_into("organ_mean", &mut self.organ.mean)?;
        kv.take_into("organ_std", &mut self.organ.std)?;
        kv.take_into("tumor_mean", &mut self.tumor.mean)?;
        kv.take_into("tumor_std", &mut self.tumor.std)?;
        kv.take_into("organ_radius_min", &mut self.organ_radius_min)?;
        kv.take_into("organ_radius_max", &mut self.organ_radius_max)?;
        kv.take_into("tumor_count_min", &mut self.tumor_count_min)?;
        kv.take_into("tumor_count_max", &mut self.tumor_count_max)?;
        kv.take_into("tumor_radius_min", &mut self.tumor_radius_min)?;
        kv.take_into("tumor_radius_max", &mut self.tumor_radius_max)?;
        kv.take_into("noise_std", &mut self.noise_std)?;
        kv.take_into("seed", &mut self.seed)?;
        Ok(())
    }

    /// Parses a complete spec file; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvConfig::parse(text)?;
        let mut spec = DatasetSpec::default();
        spec.apply(&mut kv)?;
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn render(&self) -> String {
        crate::kvconf::render(&self.to_entries())
    }
}

/// One patient: an ordered stack of pseudo-HU slices `[H, W]` and masks.
#[derive(Debug, Clone)]
pub struct Case {
    pub id: usize,
    pub images: Vec<Tensor>,
    pub masks: Vec<LabelMask>,
}

/// A generated (or loaded) dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let cases = (0..spec.num_cases)
            .map(|i| {
                let (images, masks) = synth_case(spec, i)?;
                Ok(Case {
                    id: i,
                    images,
                    masks,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            spec: spec.clone(),
            cases,
        })
    }

    pub fn case_ids(&self) -> Vec<usize> {
        self.cases.iter().map(|c| c.id).collect()
    }

    pub fn case(&self, id: usize) -> Result<&Case> {
        self.cases
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::Data(format!("no case with id {id}")))
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        Ellipse {
            cx,
            cy,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Maps the ellipse frame `(u, v)` (unit disk = interior) to pixels.
    fn to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let (x, y) = (u * self.a, v * self.b);
        (
            self.cx + x * self.cos - y * self.sin,
            self.cy + x * self.sin + y * self.cos,
        )
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

struct TumorSeed {
    u: f64,
    v: f64,
    z: f64,
    radius: f64,
    aspect: f64,
    theta: f64,
}

fn normal(d: Intensity) -> Normal<f64> {
    Normal::new(d.mean, d.std).expect("validated std")
}

/// Generates one case, deterministic in `(spec.seed, case_index)`.
///
/// The organ is an ellipse that shrinks toward the ends of the stack. Tumors
/// are small ellipses anchored inside the organ frame; every tumor pixel is
/// also an organ pixel. Pixels draw from their class intensity distribution
/// plus additive noise.
pub fn synth_case(spec: &DatasetSpec, case_index: usize) -> Result<(Vec<Tensor>, Vec<LabelMask>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(case_index as u64);
    let s = spec.image_size as f64;
    let n_slices = rng.random_range(spec.slices_min..=spec.slices_max);
    let jitter = s / 10.0;
    let (cx, cy) = (
        s / 2.0 + rng.random_range(-jitter..=jitter),
        s / 2.0 + rng.random_range(-jitter..=jitter),
    );
    let a = rng.random_range(spec.organ_radius_min..=spec.organ_radius_max);
    let b = rng.random_range(spec.organ_radius_min..=spec.organ_radius_max);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let n_tumors = rng.random_range(spec.tumor_count_min..=spec.tumor_count_max);
    let tumors: Vec<TumorSeed> = (0..n_tumors)
        .map(|_| {
            let rho = 0.55 * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            TumorSeed {
                u: rho * phi.cos(),
                v: rho * phi.sin(),
                z: rng.random_range(-0.5..=0.5),
                radius: rng.random_range(spec.tumor_radius_min..=spec.tumor_radius_max),
                aspect: rng.random_range(0.75..=1.25),
                theta: rng.random_range(0.0..std::f64::consts::PI),
            }
        })
        .collect();

    let (bg, organ_d, tumor_d) = (
        normal(spec.background),
        normal(spec.organ),
        normal(spec.tumor),
    );
    let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
    let size = spec.image_size;
    let mut images = Vec::with_capacity(n_slices);
    let mut masks = Vec::with_capacity(n_slices);
    for k in 0..n_slices {
        let z = if n_slices == 1 {
            0.0
        } else {
            2.0 * k as f64 / (n_slices - 1) as f64 - 1.0
        };
        let scale = (1.0 - 0.3 * z * z).sqrt();
        let organ = Ellipse::new(cx, cy, a * scale, b * scale, theta);
        let slice_tumors: Vec<Ellipse> = tumors
            .iter()
            .filter_map(|t| {
                let dz = (z - t.z) / 1.5;
                let r = t.radius * (1.0 - dz * dz).max(0.0).sqrt();
                if r < 1.0 {
                    return None;
                }
                let (tx, ty) = organ.to_pixel(t.u, t.v);
                Some(Ellipse::new(tx, ty, r * t.aspect, r / t.aspect, t.theta))
            })
            .collect();
        let mut img = Vec::with_capacity(size * size);
        let mut lab = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                let (x, y) = (j as f64 + 0.5, i as f64 + 0.5);
                let in_organ = organ.contains(x, y);
                let in_tumor = in_organ && slice_tumors.iter().any(|t| t.contains(x, y));
                let base = if in_tumor {
                    tumor_d.sample(&mut rng)
                } else if in_organ {
                    organ_d.sample(&mut rng)
                } else {
                    bg.sample(&mut rng)
                };
                img.push(base + noise.sample(&mut rng));
                lab.push(match (spec.num_classes, spec.binary_target) {
                    (3, _) => in_organ as u8 + in_tumor as u8,
                    (_, BinaryTarget::Tumor) => in_tumor as u8,
                    (_, BinaryTarget::Organ) => in_organ as u8,
                });
            }
        }
        images.push(Tensor::new(img, &[size, size])?);
        masks.push(LabelMask::new(size, size, spec.num_classes as u8, lab)?);
    }
    Ok((images, masks))
}

/// `k` disjoint near-equal test partitions after a seeded shuffle; each
/// entry is `(train_ids, test_ids)`, both sorted.
pub fn make_folds(
    case_ids: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be ≥ 2, got {k}")));
    }
    if k > case_ids.len() {
        return Err(Error::Config(format!(
            "fold count {k} exceeds the number of cases {}",
            case_ids.len()
        )));
    }
    let mut ids = case_ids.to_vec();
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut test = ids[start..start + len].to_vec();
        let mut train: Vec<usize> = ids[..start]
            .iter()
            .chain(&ids[start + len..])
            .copied()
            .collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push((train, test));
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            image_size: 32,
            num_cases: 4,
            organ_radius_min: 8.0,
            organ_radius_max: 11.0,
            tumor_radius_min: 2.0,
            tumor_radius_max: 4.0,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn window_endpoints_and_midpoint() {
        let t = Tensor::new(vec![-40.0, 160.0, 60.0, -1000.0, 1000.0], &[5]).unwrap();
        let w = hu_window(&t, WindowSpec::LIVER);
        assert_eq!(w.data(), &[0.0, 1.0, 0.5, 0.0, 1.0]);
        let k = hu_window(&Tensor::new(vec![50.0], &[1]).unwrap(), WindowSpec::KIDNEY);
        assert_eq!(k.data(), &[0.5]);
        assert!(WindowSpec::new(1.0, 1.0).is_err());
    }

    #[test]
    fn synthesis_is_deterministic() {
        let spec = small_spec();
        let (i1, m1) = synth_case(&spec, 2).unwrap();
        let (i2, m2) = synth_case(&spec, 2).unwrap();
        assert_eq!(m1, m2);
        for (a, b) in i1.iter().zip(&i2) {
            assert_eq!(a.data(), b.data());
        }
        let (i3, _) = synth_case(&spec, 3).unwrap();
        assert_ne!(i1[0].data(), i3[0].data());
    }

    #[test]
    fn binary_masks_hold_two_classes_and_tumors_sit_in_organ() {
        let spec = small_spec();
        for c in 0..spec.num_cases {
            let (imgs, masks) = synth_case(&spec, c).unwrap();
            assert!((spec.slices_min..=spec.slices_max).contains(&masks.len()));
            assert_eq!(imgs.len(), masks.len());
            assert!(masks.iter().all(|m| m.labels().iter().all(|&l| l < 2)));
        }
        let three = DatasetSpec {
            num_classes: 3,
            ..spec.clone()
        };
        let organ_only = DatasetSpec {
            binary_target: BinaryTarget::Organ,
            ..spec
        };
        for c in 0..three.num_cases {
            let (_, m3) = synth_case(&three, c).unwrap();
            let (_, mo) = synth_case(&organ_only, c).unwrap();
            for (a, b) in m3.iter().zip(&mo) {
                for (&l3, &lo) in a.labels().iter().zip(b.labels()) {
                    // tumor pixels are always organ pixels
                    assert_eq!(l3 >= 1, lo == 1);
                }
            }
        }
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let spec = DatasetSpec {
            tumor_radius_max: 20.0,
            ..DatasetSpec::default()
        };
        assert!(matches!(synth_case(&spec, 0), Err(Error::Config(m)) if m.contains("infeasible")));
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = DatasetSpec {
            seed: 77,
            noise_std: 3.5,
            ..DatasetSpec::default()
        };
        assert_eq!(DatasetSpec::parse(&spec.render()).unwrap(), spec);
        assert!(DatasetSpec::parse("colour = red\n").is_err());
    }

    #[test]
    fn folds_partition_ids() {
        let ids: Vec<usize> = (0..10).collect();
        let folds = make_folds(&ids, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen: Vec<usize> = Vec::new();
        for (train, test) in &folds {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
            assert!(test.iter().all(|t| !train.contains(t)));
            seen.extend(test.iter().copied());
        }
        seen.sort_unstable();
        assert_eq!(seen, ids);
        assert_eq!(folds, make_folds(&ids, 5, 3).unwrap());
        assert!(make_folds(&ids, 11, 0).is_err());
        assert!(make_folds(&ids, 1, 0).is_err());
    }

    #[test]
    fn label_mask_validation() {
        assert!(LabelMask::new(1, 2, 2, vec![0, 2]).is_err());
        assert!(LabelMask::new(1, 2, 2, vec![0]).is_err());
        let m = LabelMask::new(1, 2, 3, vec![0, 2]).unwrap();
        assert_eq!(m.class_pixels(2), vec![false, true]);
    }
}
