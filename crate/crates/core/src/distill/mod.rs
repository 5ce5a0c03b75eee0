//! Distillation objectives between a frozen teacher and a trainable student.
//!
//! - PMD: per-pixel KL divergence between class distributions.
//! - IMD: L1 distance of L2-normalized channel-collapsed importance maps.
//! - RAD: difference of cosine contrasts between class-region mean vectors.
//!
//! Teacher-side quantities are bundled in [`TeacherTargets`]; they depend only
//! on the teacher output and the label masks, so the training loop may compute
//! them once per sample and reuse them. The standalone loss functions build the
//! same targets on the fly, so both routes share one implementation.

use crate::data::LabelMask;
use crate::nets::{FeatureTaps, TapPairing};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Added to L2 norms used as denominators.
pub const NORM_EPS: f64 = 1e-12;
/// Smoothing term of the soft Dice loss.
pub const DICE_EPS: f64 = 1e-6;

/// Weights of the distillation terms in the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillWeights {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for DistillWeights {
    fn default() -> Self {
        DistillWeights {
            alpha: 0.1,
            beta1: 0.9,
            beta2: 0.9,
        }
    }
}

impl DistillWeights {
    pub const ZERO: DistillWeights = DistillWeights {
        alpha: 0.0,
        beta1: 0.0,
        beta2: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta1, self.beta2];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "distillation weights must be finite and ≥ 0, got {w:?}"
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.alpha == 0.0 && self.beta1 == 0.0 && self.beta2 == 0.0
    }
}

macro_rules! str_enum {
    ($(#[$m:meta])* $name:ident { $($(#[$vm:meta])* $variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($(#[$vm])* $variant),+ }

        impl std::str::FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($name), " {:?}"), s))),
                }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

str_enum!(
    /// Argument order of the KL divergence.
    KlDirection {
        /// KL(p_s ‖ p_t)
        StudentToTeacher => "s_to_t",
        /// KL(p_t ‖ p_s)
        TeacherToStudent => "t_to_s",
    }
);

str_enum!(
    /// Shape of the region contrast compared by RAD.
    ContrastForm {
        /// Mean cosine over present class pairs.
        Scalar => "scalar",
        /// One cosine per present class pair.
        Vector => "vector",
    }
);

str_enum!(
    SegLossKind {
        CrossEntropy => "cross_entropy",
        SoftDice => "soft_dice",
    }
);

impl Default for KlDirection {
    fn default() -> Self {
        KlDirection::StudentToTeacher
    }
}

impl Default for ContrastForm {
    fn default() -> Self {
        ContrastForm::Scalar
    }
}

impl Default for SegLossKind {
    fn default() -> Self {
        SegLossKind::CrossEntropy
    }
}

/// Every knob of the total objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: DistillWeights,
    pub seg: SegLossKind,
    pub direction: KlDirection,
    pub temperature: f64,
    /// Power applied to activation magnitudes in the importance map.
    pub exponent: f64,
    /// Norm of the RAD difference, 1 or 2.
    pub norm_p: u32,
    pub form: ContrastForm,
    pub num_classes: usize,
}

impl LossConfig {
    pub fn new(num_classes: usize) -> Self {
        LossConfig {
            weights: DistillWeights::default(),
            seg: SegLossKind::default(),
            direction: KlDirection::default(),
            temperature: 1.0,
            exponent: 2.0,
            norm_p: 2,
            form: ContrastForm::default(),
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        check_norm_p(self.norm_p)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::Config(format!(
                "importance exponent must be > 0, got {}",
                self.exponent
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("at least 2 classes are required".into()));
        }
        Ok(())
    }
}

fn check_norm_p(p: u32) -> Result<()> {
    if p == 1 || p == 2 {
        Ok(())
    } else {
        Err(Error::Config(format!("norm_p must be 1 or 2, got {p}")))
    }
}

/// Channel-collapsed saliency of one tap: `[N, h, w]`, all entries ≥ 0.
#[derive(Debug, Clone)]
pub struct ImportanceMap {
    pub tap: String,
    pub map: Tensor,
}

/// Nearest-downsampled labels expanded to one binary plane per class.
#[derive(Debug, Clone)]
pub struct ResizedOneHotMask {
    /// `[c, h, w]` of {0, 1}; exactly one plane is 1 at every pixel.
    pub masks: Tensor,
    /// `N_i`, pixels of class `i`.
    pub pixel_counts: Vec<usize>,
}

/// Mean feature vector of one class region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionVector {
    pub class: usize,
    /// Zeros when the region is empty.
    pub vector: Vec<f64>,
    pub present: bool,
}

/// Cosine similarities between class regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionContrast {
    pub form: ContrastForm,
    /// Every `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// Cosine per pair, 0 for absent pairs; each in `[-1, 1]`.
    pub values: Vec<f64>,
    pub present_pairs: Vec<bool>,
    /// Number of present pairs.
    pub n: usize,
}

impl RegionContrast {
    /// The compared quantity: `[mean]` in scalar form, the present values
    /// in vector form; empty when `n == 0`.
    pub fn contrast(&self) -> Vec<f64> {
        let present = self
            .values
            .iter()
            .zip(&self.present_pairs)
            .filter(|(_, &p)| p)
            .map(|(v, _)| *v);
        match self.form {
            _ if self.n == 0 => Vec::new(),
            ContrastForm::Scalar => vec![present.sum::<f64>() / self.n as f64],
            ContrastForm::Vector => present.collect(),
        }
    }
}

// ---------------------------------------------------------------- PMD

fn scaled_log_softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    logits.check_nchw("pmd")?;
    if logits.shape()[1] < 2 {
        return Err(Error::Shape(
            "class-probability maps need at least 2 channels".into(),
        ));
    }
    if temperature == 1.0 {
        logits.log_softmax(1)
    } else {
        logits.scale(1.0 / temperature).log_softmax(1)
    }
}

/// Detached teacher log-probabilities at the given temperature.
pub fn teacher_log_probs(teacher_logits: &Tensor, temperature: f64) -> Result<Tensor> {
    Ok(scaled_log_softmax(&teacher_logits.detach(), temperature)?.detach())
}

/// PMD against precomputed teacher log-probabilities.
pub fn pmd_against(
    student_logits: &Tensor,
    teacher_logp: &Tensor,
    direction: KlDirection,
    temperature: f64,
) -> Result<Tensor> {
    if student_logits.shape() != teacher_logp.shape() {
        return Err(Error::Shape(format!(
            "student logits {:?} vs teacher {:?}",
            student_logits.shape(),
            teacher_logp.shape()
        )));
    }
    let ls = scaled_log_softmax(student_logits, temperature)?;
    let s = ls.shape();
    let pixels = (s[0] * s[2] * s[3]) as f64;
    let kl = match direction {
        KlDirection::StudentToTeacher => ls.exp().mul(&ls.sub(teacher_logp)?)?,
        KlDirection::TeacherToStudent => teacher_logp.exp().mul(&teacher_logp.sub(&ls)?)?,
    };
    Ok(kl.sum().scale(1.0 / pixels))
}

/// Mean over pixels of the KL divergence between the class distributions.
/// The teacher side carries no gradient.
pub fn pmd_loss(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    direction: KlDirection,
    temperature: f64,
) -> Result<Tensor> {
    let t = teacher_log_probs(teacher_logits, temperature)?;
    pmd_against(student_logits, &t, direction, temperature)
}

// ---------------------------------------------------------------- IMD

/// Brings a student feature to the teacher's spatial extent: nearest
/// upsampling when smaller, average pooling when larger, identity otherwise.
pub fn rescale_to_match(feat: &Tensor, target_hw: (usize, usize)) -> Result<Tensor> {
    feat.check_nchw("rescale_to_match")?;
    let (hs, ws) = (feat.shape()[2], feat.shape()[3]);
    let (ht, wt) = target_hw;
    let ratio_err = || {
        Error::Config(format!(
            "cannot rescale {hs}×{ws} to {ht}×{wt}: extents must differ by one integer factor"
        ))
    };
    if ht == 0 || wt == 0 {
        return Err(ratio_err());
    }
    if (hs, ws) == (ht, wt) {
        Ok(feat.clone())
    } else if hs <= ht && ws <= wt {
        let k = ht / hs;
        if k * hs != ht || k * ws != wt {
            return Err(ratio_err());
        }
        feat.upsample_nearest(k)
    } else if hs >= ht && ws >= wt {
        let k = hs / ht;
        if k * ht != hs || k * wt != ws {
            return Err(ratio_err());
        }
        feat.avg_pool2d(k)
    } else {
        Err(ratio_err())
    }
}

/// `Σ_c |x_c|^exponent` per pixel: `[N, C, h, w] → [N, h, w]`.
pub fn importance_map(feat: &Tensor, exponent: f64) -> Result<Tensor> {
    feat.check_nchw("importance_map")?;
    feat.abs_pow(exponent).sum_axis(1, false)
}

/// Importance map flattened per batch item and divided by its L2 norm
/// (plus [`NORM_EPS`]): `[N, h·w]`.
pub fn normalized_importance(feat: &Tensor, exponent: f64) -> Result<Tensor> {
    let m = importance_map(feat, exponent)?;
    let s = m.shape();
    let flat = m.reshape(&[s[0], s[1] * s[2]])?;
    flat.div(&flat.norm_last()?.add_scalar(NORM_EPS))
}

/// IMD for one pair against a precomputed normalized teacher map.
pub fn imd_against(
    student_feat: &Tensor,
    teacher_map: &Tensor,
    target_hw: (usize, usize),
    exponent: f64,
) -> Result<Tensor> {
    let ms = normalized_importance(&rescale_to_match(student_feat, target_hw)?, exponent)?;
    if ms.shape() != teacher_map.shape() {
        return Err(Error::Shape(format!(
            "importance maps {:?} vs {:?}",
            ms.shape(),
            teacher_map.shape()
        )));
    }
    let n = ms.shape()[0] as f64;
    Ok(ms.sub(teacher_map)?.abs().sum().scale(1.0 / n))
}

fn pair_tensors<'a>(
    pair: &(String, String),
    student: &'a FeatureTaps,
    teacher: &'a FeatureTaps,
) -> Result<(&'a Tensor, &'a Tensor)> {
    let s = student
        .get(&pair.0)
        .ok_or_else(|| Error::Pairing(format!("student has no tap {}", pair.0)))?;
    let t = teacher
        .get(&pair.1)
        .ok_or_else(|| Error::Pairing(format!("teacher has no tap {}", pair.1)))?;
    s.check_nchw("tap")?;
    t.check_nchw("tap")?;
    if s.shape()[0] != t.shape()[0] {
        return Err(Error::Shape(format!(
            "batch sizes differ for {}/{}: {} vs {}",
            pair.0,
            pair.1,
            s.shape()[0],
            t.shape()[0]
        )));
    }
    Ok((s, t))
}

fn spatial(t: &Tensor) -> (usize, usize) {
    (t.shape()[2], t.shape()[3])
}

/// Importance maps of every paired tap, student side rescaled first.
pub fn importance_maps(
    pairing: &TapPairing,
    student_taps: &FeatureTaps,
    teacher_taps: &FeatureTaps,
    exponent: f64,
) -> Result<Vec<(ImportanceMap, ImportanceMap)>> {
    pairing
        .pairs
        .iter()
        .map(|pair| {
            let (s, t) = pair_tensors(pair, student_taps, teacher_taps)?;
            let s = rescale_to_match(s, spatial(t))?;
            Ok((
                ImportanceMap {
                    tap: pair.0.clone(),
                    map: importance_map(&s, exponent)?,
                },
                ImportanceMap {
                    tap: pair.1.clone(),
                    map: importance_map(&t.detach(), exponent)?,
                },
            ))
        })
        .collect()
}

/// Sum over tap pairs of the batch-mean L1 distance between normalized
/// importance maps. The teacher side carries no gradient.
pub fn imd_loss(
    pairing: &TapPairing,
    student_taps: &FeatureTaps,
    teacher_taps: &FeatureTaps,
    exponent: f64,
) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0);
    for pair in &pairing.pairs {
        let (s, t) = pair_tensors(pair, student_taps, teacher_taps)?;
        let tm = normalized_importance(&t.detach(), exponent)?;
        total = total.add(&imd_against(s, &tm, spatial(t), exponent)?)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------- RAD

/// Top-left nearest label downsample, then one plane per class.
pub fn resize_one_hot_mask(
    mask: &LabelMask,
    num_classes: usize,
    target_hw: (usize, usize),
) -> Result<ResizedOneHotMask> {
    let (big_h, big_w) = (mask.height(), mask.width());
    let (h, w) = target_hw;
    if h == 0 || w == 0 || big_h % h != 0 || big_w % w != 0 {
        return Err(Error::Config(format!(
            "cannot resize a {big_h}×{big_w} mask to {h}×{w}: extents must divide"
        )));
    }
    let (fh, fw) = (big_h / h, big_w / w);
    let mut planes = vec![0.0; num_classes * h * w];
    let mut counts = vec![0; num_classes];
    for i in 0..h {
        for j in 0..w {
            let c = mask.get(i * fh, j * fw) as usize;
            if c >= num_classes {
                return Err(Error::Data(format!(
                    "class id {c} ≥ num_classes {num_classes}"
                )));
            }
            planes[(c * h + i) * w + j] = 1.0;
            counts[c] += 1;
        }
    }
    Ok(ResizedOneHotMask {
        masks: Tensor::new(planes, &[num_classes, h, w])?,
        pixel_counts: counts,
    })
}

/// Region means `[N, K, C]` of features `[N, C, h, w]`; absent regions give
/// zero rows.
fn region_means(feat: &Tensor, onehots: &[ResizedOneHotMask]) -> Result<Tensor> {
    feat.check_nchw("region_means")?;
    let s = feat.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if onehots.len() != n {
        return Err(Error::Shape(format!(
            "{} masks for a batch of {n}",
            onehots.len()
        )));
    }
    let k = onehots[0].pixel_counts.len();
    let mut planes = Vec::with_capacity(n * k * h * w);
    let mut inv = Vec::with_capacity(n * k);
    for oh in onehots {
        if oh.masks.shape() != [k, h, w] {
            return Err(Error::Shape(format!(
                "one-hot mask {:?} does not match features [{k}, {h}, {w}]",
                oh.masks.shape()
            )));
        }
        planes.extend_from_slice(oh.masks.data());
        inv.extend(
            oh.pixel_counts
                .iter()
                .map(|&cnt| if cnt == 0 { 0.0 } else { 1.0 / cnt as f64 }),
        );
    }
    let m = Tensor::new(planes, &[n, k, h * w])?;
    let inv = Tensor::new(inv, &[n, k, 1])?;
    let f = feat.reshape(&[n, c, h * w])?.transpose_last2()?;
    m.bmm(&f)?.mul(&inv)
}

/// Cosine matrix `[N, K, K]` of region means `[N, K, C]`.
fn cosine_gram(r: &Tensor) -> Result<Tensor> {
    let unit = r.div(&r.norm_last()?.add_scalar(NORM_EPS))?;
    unit.bmm(&unit.transpose_last2()?)
}

/// Region cosine matrix of a batch: `[N, K, K]`.
pub fn region_gram(feat: &Tensor, onehots: &[ResizedOneHotMask]) -> Result<Tensor> {
    cosine_gram(&region_means(feat, onehots)?)
}

/// Mean feature vector per class of one item `[C, h, w]`.
pub fn region_vectors(feat: &Tensor, onehot: &ResizedOneHotMask) -> Result<Vec<RegionVector>> {
    let s = feat.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!(
            "region_vectors expects [C, h, w], got {s:?}"
        )));
    }
    let r = region_means(
        &feat.reshape(&[1, s[0], s[1], s[2]])?,
        std::slice::from_ref(onehot),
    )?;
    let c = s[0];
    Ok(onehot
        .pixel_counts
        .iter()
        .enumerate()
        .map(|(i, &cnt)| RegionVector {
            class: i,
            vector: r.data()[i * c..(i + 1) * c].to_vec(),
            present: cnt > 0,
        })
        .collect())
}

/// Cosine similarity for every class pair `i < j`; pairs with an empty
/// region are marked absent.
pub fn region_contrast(regions: &[RegionVector], form: ContrastForm) -> Result<RegionContrast> {
    let k = regions.len();
    if k < 2 {
        return Err(Error::Config(
            "region contrast needs at least 2 classes".into(),
        ));
    }
    let c = regions[0].vector.len();
    if c == 0 || regions.iter().any(|r| r.vector.len() != c) {
        return Err(Error::Shape(
            "region vectors must share a nonzero length".into(),
        ));
    }
    let flat: Vec<f64> = regions
        .iter()
        .flat_map(|r| r.vector.iter().copied())
        .collect();
    let gram = cosine_gram(&Tensor::new(flat, &[1, k, c])?)?;
    let mut out = RegionContrast {
        form,
        pairs: Vec::new(),
        values: Vec::new(),
        present_pairs: Vec::new(),
        n: 0,
    };
    for i in 0..k {
        for j in i + 1..k {
            let present = regions[i].present && regions[j].present;
            out.pairs.push((i, j));
            out.values
                .push(if present { gram.data()[i * k + j] } else { 0.0 });
            out.present_pairs.push(present);
            out.n += present as usize;
        }
    }
    Ok(out)
}

/// Weights selecting present pairs `i < j`: `1/n` each in scalar form
/// (so the weighted sum is the mean), 1 each in vector form.
fn pair_weights(onehots: &[ResizedOneHotMask], form: ContrastForm) -> Result<Tensor> {
    let k = onehots[0].pixel_counts.len();
    let mut out = vec![0.0; onehots.len() * k * k];
    for (b, oh) in onehots.iter().enumerate() {
        let present = |i: usize| oh.pixel_counts[i] > 0;
        let mut idx = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if present(i) && present(j) {
                    idx.push(i * k + j);
                }
            }
        }
        let w = match form {
            ContrastForm::Scalar if !idx.is_empty() => 1.0 / idx.len() as f64,
            _ => 1.0,
        };
        for x in idx {
            out[b * k * k + x] = w;
        }
    }
    Tensor::new(out, &[onehots.len(), k, k])
}

/// RAD for one pair against a precomputed teacher cosine matrix. `onehots`
/// are at the teacher's extent.
pub fn rad_against(
    student_feat: &Tensor,
    teacher_gram: &Tensor,
    onehots: &[ResizedOneHotMask],
    norm_p: u32,
    form: ContrastForm,
) -> Result<Tensor> {
    check_norm_p(norm_p)?;
    let first = onehots
        .first()
        .ok_or_else(|| Error::Shape("RAD needs at least one mask".into()))?;
    let (h, w) = (first.masks.shape()[1], first.masks.shape()[2]);
    let gs = region_gram(&rescale_to_match(student_feat, (h, w))?, onehots)?;
    if gs.shape() != teacher_gram.shape() {
        return Err(Error::Shape(format!(
            "region contrasts {:?} vs {:?}",
            gs.shape(),
            teacher_gram.shape()
        )));
    }
    let s = gs.shape();
    let (n, k) = (s[0], s[1]);
    let weights = pair_weights(onehots, form)?;
    let diff = match form {
        ContrastForm::Scalar => {
            let v = |g: &Tensor| g.mul(&weights)?.reshape(&[n, k * k])?.sum_axis(1, true);
            v(&gs)?.sub(&v(teacher_gram)?)?
        }
        ContrastForm::Vector => gs.sub(teacher_gram)?.mul(&weights)?.reshape(&[n, k * k])?,
    };
    let per_item = if norm_p == 1 {
        diff.abs()
    } else {
        diff.norm_last()?
    };
    Ok(per_item.sum().scale(1.0 / n as f64))
}

fn one_hots(
    masks: &[LabelMask],
    num_classes: usize,
    hw: (usize, usize),
) -> Result<Vec<ResizedOneHotMask>> {
    masks
        .iter()
        .map(|m| resize_one_hot_mask(m, num_classes, hw))
        .collect()
}

/// Sum over tap pairs of the batch-mean `‖V_s − V_t‖_p`, where both region
/// contrasts use the same mask resized to the teacher's extent. Items with
/// no present class pair contribute 0. The teacher side carries no gradient.
pub fn rad_loss(
    pairing: &TapPairing,
    student_taps: &FeatureTaps,
    teacher_taps: &FeatureTaps,
    masks: &[LabelMask],
    num_classes: usize,
    norm_p: u32,
    form: ContrastForm,
) -> Result<Tensor> {
    check_norm_p(norm_p)?;
    let mut total = Tensor::scalar(0.0);
    for pair in &pairing.pairs {
        let (s, t) = pair_tensors(pair, student_taps, teacher_taps)?;
        let oh = one_hots(masks, num_classes, spatial(t))?;
        let tg = region_gram(&t.detach(), &oh)?;
        total = total.add(&rad_against(s, &tg, &oh, norm_p, form)?)?;
    }
    Ok(total)
}

// ---------------------------------------------------------------- segmentation

fn full_one_hot(logits: &Tensor, masks: &[LabelMask]) -> Result<Tensor> {
    logits.check_nchw("seg_loss")?;
    let s = logits.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if masks.len() != n {
        return Err(Error::Shape(format!(
            "{} masks for a batch of {n}",
            masks.len()
        )));
    }
    let mut g = vec![0.0; n * c * h * w];
    for (b, m) in masks.iter().enumerate() {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "mask {}×{} vs logits {h}×{w}",
                m.height(),
                m.width()
            )));
        }
        for (p, &l) in m.labels().iter().enumerate() {
            let l = l as usize;
            if l >= c {
                return Err(Error::Data(format!("class id {l} ≥ num_classes {c}")));
            }
            g[(b * c + l) * h * w + p] = 1.0;
        }
    }
    Tensor::new(g, s)
}

/// Cross entropy (mean over pixels) or soft Dice over foreground classes
/// with sums taken across the whole batch.
pub fn seg_loss(logits: &Tensor, masks: &[LabelMask], kind: SegLossKind) -> Result<Tensor> {
    let g = full_one_hot(logits, masks)?;
    let s = logits.shape();
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    match kind {
        SegLossKind::CrossEntropy => {
            let nll = g.mul(&logits.log_softmax(1)?)?.sum().neg();
            Ok(nll.scale(1.0 / (n * hw) as f64))
        }
        SegLossKind::SoftDice => {
            if c < 2 {
                return Err(Error::Shape("soft Dice needs a foreground class".into()));
            }
            let p = logits.softmax(1)?;
            let per_class = |t: &Tensor| {
                t.reshape(&[n, c, hw])?
                    .sum_axis(2, false)?
                    .sum_axis(0, false)
            };
            let inter = per_class(&p.mul(&g)?)?;
            let denom = per_class(&p)?.add(&per_class(&g)?)?.add_scalar(DICE_EPS);
            let dice = inter.scale(2.0).add_scalar(DICE_EPS).div(&denom)?;
            Ok(dice.narrow(0, 1, c - 1)?.mean().neg().add_scalar(1.0))
        }
    }
}

/// `seg + α·pm + β1·im + β2·ra`.
pub fn total_loss(
    seg: &Tensor,
    pm: &Tensor,
    im: &Tensor,
    ra: &Tensor,
    w: DistillWeights,
) -> Result<Tensor> {
    for t in [seg, pm, im, ra] {
        if t.numel() != 1 {
            return Err(Error::Shape(format!(
                "loss terms must be scalars, got {:?}",
                t.shape()
            )));
        }
    }
    let (seg, pm, im, ra) = (flat(seg)?, flat(pm)?, flat(im)?, flat(ra)?);
    seg.add(&pm.scale(w.alpha))?
        .add(&im.scale(w.beta1))?
        .add(&ra.scale(w.beta2))
}

fn flat(t: &Tensor) -> Result<Tensor> {
    if t.rank() == 0 {
        Ok(t.clone())
    } else {
        t.reshape(&[])
    }
}

// ---------------------------------------------------------------- objective

/// Teacher-side inputs of the distillation terms for one batch. Empty
/// fields belong to terms whose weight is zero.
#[derive(Debug, Clone)]
pub struct TeacherTargets {
    /// `[N, C, H, W]`
    pub log_probs: Option<Tensor>,
    /// Per tap pair: normalized importance map `[N, h·w]`.
    pub maps: Vec<Tensor>,
    /// Per tap pair: region cosine matrix `[N, K, K]`.
    pub grams: Vec<Tensor>,
    /// Per tap pair: teacher spatial extent.
    pub extents: Vec<(usize, usize)>,
}

impl TeacherTargets {
    pub fn compute(
        teacher_logits: &Tensor,
        teacher_taps: &FeatureTaps,
        pairing: &TapPairing,
        masks: &[LabelMask],
        cfg: &LossConfig,
    ) -> Result<Self> {
        let w = cfg.weights;
        let log_probs = (w.alpha != 0.0)
            .then(|| teacher_log_probs(teacher_logits, cfg.temperature))
            .transpose()?;
        let mut maps = Vec::new();
        let mut grams = Vec::new();
        let mut extents = Vec::new();
        for (_, tname) in &pairing.pairs {
            let t = teacher_taps
                .get(tname)
                .ok_or_else(|| Error::Pairing(format!("teacher has no tap {tname}")))?
                .detach();
            t.check_nchw("tap")?;
            let hw = spatial(&t);
            extents.push(hw);
            if w.beta1 != 0.0 {
                maps.push(normalized_importance(&t, cfg.exponent)?.detach());
            }
            if w.beta2 != 0.0 {
                let oh = one_hots(masks, cfg.num_classes, hw)?;
                grams.push(region_gram(&t, &oh)?.detach());
            }
        }
        Ok(TeacherTargets {
            log_probs,
            maps,
            grams,
            extents,
        })
    }

    /// Stacks single-batch targets along the batch axis.
    pub fn concat(items: &[&TeacherTargets]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("no targets to concatenate".into()))?;
        let cat = |get: &dyn Fn(&TeacherTargets) -> &Tensor| -> Result<Tensor> {
            let parts: Vec<&Tensor> = items.iter().map(|t| get(t)).collect();
            Tensor::concat(&parts, 0)
        };
        let log_probs = match &first.log_probs {
            Some(_) => Some(cat(&|t| t.log_probs.as_ref().expect("uniform targets"))?),
            None => None,
        };
        let maps = (0..first.maps.len())
            .map(|i| cat(&|t| &t.maps[i]))
            .collect::<Result<_>>()?;
        let grams = (0..first.grams.len())
            .map(|i| cat(&|t| &t.grams[i]))
            .collect::<Result<_>>()?;
        Ok(TeacherTargets {
            log_probs,
            maps,
            grams,
            extents: first.extents.clone(),
        })
    }

    /// Stored f64 elements.
    pub fn numel(&self) -> usize {
        self.log_probs.as_ref().map_or(0, Tensor::numel)
            + self.maps.iter().map(Tensor::numel).sum::<usize>()
            + self.grams.iter().map(Tensor::numel).sum::<usize>()
    }
}

/// The four components and their weighted sum.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub seg: Tensor,
    pub pm: Tensor,
    pub im: Tensor,
    pub ra: Tensor,
    pub total: Tensor,
}

impl LossTerms {
    /// `[seg, pm, im, ra, total]`
    pub fn values(&self) -> [f64; 5] {
        [&self.seg, &self.pm, &self.im, &self.ra, &self.total].map(|t| t.data()[0])
    }
}

/// Total objective for one batch. Terms with zero weight are not evaluated
/// and report 0; with no targets only the segmentation term is active.
pub fn objective(
    student_logits: &Tensor,
    student_taps: &FeatureTaps,
    targets: Option<&TeacherTargets>,
    pairing: &TapPairing,
    masks: &[LabelMask],
    cfg: &LossConfig,
) -> Result<LossTerms> {
    cfg.validate()?;
    let seg = seg_loss(student_logits, masks, cfg.seg)?;
    let zero = Tensor::scalar(0.0);
    let (mut pm, mut im, mut ra) = (zero.clone(), zero.clone(), zero);
    let w = cfg.weights;
    if let Some(tg) = targets {
        if w.alpha != 0.0 {
            let lp = tg
                .log_probs
                .as_ref()
                .ok_or_else(|| Error::Config("targets lack teacher probabilities".into()))?;
            pm = pmd_against(student_logits, lp, cfg.direction, cfg.temperature)?;
        }
        let n_pairs = pairing.pairs.len();
        if w.beta1 != 0.0 && tg.maps.len() != n_pairs || w.beta2 != 0.0 && tg.grams.len() != n_pairs
        {
            return Err(Error::Config("targets do not cover every tap pair".into()));
        }
        for (i, (sname, _)) in pairing.pairs.iter().enumerate() {
            let s = student_taps
                .get(sname)
                .ok_or_else(|| Error::Pairing(format!("student has no tap {sname}")))?;
            let hw = tg.extents[i];
            if w.beta1 != 0.0 {
                im = im.add(&imd_against(s, &tg.maps[i], hw, cfg.exponent)?)?;
            }
            if w.beta2 != 0.0 {
                let oh = one_hots(masks, cfg.num_classes, hw)?;
                ra = ra.add(&rad_against(s, &tg.grams[i], &oh, cfg.norm_p, cfg.form)?)?;
            }
        }
    }
    let total = total_loss(&seg, &pm, &im, &ra, w)?;
    Ok(LossTerms {
        seg,
        pm,
        im,
        ra,
        total,
    })
}
