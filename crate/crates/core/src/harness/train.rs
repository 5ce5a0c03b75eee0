use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate, split_cases, Split};
use super::optim::{adam_step, cosine_lr, AdamState};
use super::{EpochRecord, RunReport, TrainConfig};
use crate::data::{hu_window, Dataset, LabelMask, WindowSpec, D4};
use crate::distill::{objective, DistillWeights, LossConfig, TeacherTargets};
use crate::metrics::summarize;
use crate::nets::{match_taps, Network, NetworkConfig, TapPairing};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Trained weights and the run's record.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub last: Network,
    pub best: Network,
    pub report: RunReport,
}

/// Hex digest of every parameter bit pattern, in layout order.
pub fn param_checksum(net: &Network) -> String {
    let mut h = DefaultHasher::new();
    for (name, p) in net.param_names().iter().zip(net.params()) {
        name.hash(&mut h);
        p.shape().hash(&mut h);
        for v in p.data() {
            v.to_bits().hash(&mut h);
        }
    }
    format!("{:016x}", h.finish())
}

/// `plain` or the active distillation terms, e.g. `+PMD+RAD`.
pub fn run_label(w: &DistillWeights) -> String {
    let mut s = String::new();
    for (on, name) in [
        (w.alpha != 0.0, "+PMD"),
        (w.beta1 != 0.0, "+IMD"),
        (w.beta2 != 0.0, "+RAD"),
    ] {
        if on {
            s.push_str(name);
        }
    }
    if s.is_empty() {
        "plain".into()
    } else {
        s
    }
}

/// One training slice: windowed image `[H, W]` and its labels.
struct Sample {
    case: usize,
    slice: usize,
    image: Tensor,
    mask: LabelMask,
}

fn training_samples(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for case in split_cases(ds, cfg.folds, cfg.fold, Split::Train)? {
        for (k, (img, mask)) in case.images.iter().zip(&case.masks).enumerate() {
            out.push(Sample {
                case: case.id,
                slice: k,
                image: hu_window(img, cfg.window),
                mask: mask.clone(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Data("training split holds no slices".into()));
    }
    Ok(out)
}

/// Visit order and augmentation of one epoch, a pure function of
/// `(seed, epoch)`.
fn epoch_plan(seed: u64, epoch: usize, n: usize, augment: bool) -> Vec<(usize, D4)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .map(|i| {
            let g = if augment {
                D4::from_index(rng.random_range(0..8))
            } else {
                D4::IDENTITY
            };
            (i, g)
        })
        .collect()
}

fn transformed(s: &Sample, g: D4) -> Result<(Tensor, LabelMask)> {
    let img = g.apply_image(&s.image)?;
    let sh = img.shape().to_vec();
    Ok((img.reshape(&[1, 1, sh[0], sh[1]])?, g.apply_mask(&s.mask)?))
}

/// Teacher-side targets per (case, slice, augmentation), computed on first
/// use. The teacher is frozen, so entries never go stale; sharing one cache
/// across student runs avoids repeating teacher forward passes.
pub struct TeacherCache {
    teacher: Network,
    pairing: TapPairing,
    loss: LossConfig,
    window: WindowSpec,
    entries: Mutex<HashMap<(usize, usize, u8), Arc<TeacherTargets>>>,
}

impl TeacherCache {
    pub fn new(teacher: &Network, cfg: &TrainConfig, ds: &Dataset) -> Result<Self> {
        let teacher = teacher.frozen();
        let student = student_config(cfg, ds);
        let pairing = pair_for(&student, &teacher, ds.spec.image_size, cfg)?;
        if teacher.config().num_classes != ds.spec.num_classes {
            return Err(Error::Config(format!(
                "teacher predicts {} classes, dataset has {}",
                teacher.config().num_classes,
                ds.spec.num_classes
            )));
        }
        let mut loss = cfg.loss;
        loss.num_classes = ds.spec.num_classes;
        loss.weights = DistillWeights {
            alpha: 1.0,
            beta1: 1.0,
            beta2: 1.0,
        };
        Ok(TeacherCache {
            teacher,
            pairing,
            loss,
            window: cfg.window,
            entries: Mutex::new(HashMap::new()),
        })
    }

    /// Whether the cached targets are valid for a run with `cfg`.
    fn serves(&self, cfg: &TrainConfig, pairing: &TapPairing) -> bool {
        let l = &cfg.loss;
        self.pairing == *pairing
            && self.window == cfg.window
            && self.loss.temperature == l.temperature
            && self.loss.exponent == l.exponent
    }

    fn get(
        &self,
        s: &Sample,
        g: D4,
        input: &Tensor,
        mask: &LabelMask,
    ) -> Result<Arc<TeacherTargets>> {
        let key = (s.case, s.slice, g.index());
        if let Some(t) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(t.clone());
        }
        let (logits, taps) = self.teacher.forward_with_taps(input)?;
        let t = Arc::new(TeacherTargets::compute(
            &logits,
            &taps,
            &self.pairing,
            std::slice::from_ref(mask),
            &self.loss,
        )?);
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key, t.clone());
        Ok(t)
    }

    /// Number of cached samples.
    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn student_config(cfg: &TrainConfig, ds: &Dataset) -> NetworkConfig {
    NetworkConfig {
        num_classes: ds.spec.num_classes,
        seed: cfg.seed,
        ..cfg.student.clone()
    }
}

fn pair_for(
    student: &NetworkConfig,
    teacher: &Network,
    size: usize,
    cfg: &TrainConfig,
) -> Result<TapPairing> {
    let s = Network::new(student.clone())?;
    match_taps(
        &s.tap_extents(size, size),
        &teacher.tap_extents(size, size),
        cfg.tap_policy,
    )
}

fn check_dataset(ds: &Dataset, net: &NetworkConfig) -> Result<()> {
    let f = 1 << net.depth;
    if !ds.spec.image_size.is_multiple_of(f) {
        return Err(Error::Config(format!(
            "image size {} is not divisible by 2^depth = {f}",
            ds.spec.image_size
        )));
    }
    Ok(())
}

struct Teacher<'a> {
    cache: &'a TeacherCache,
    pairing: TapPairing,
}

fn run(
    cfg: &TrainConfig,
    ds: &Dataset,
    net_cfg: NetworkConfig,
    kind: &str,
    teacher: Option<Teacher<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    check_dataset(ds, &net_cfg)?;
    let start = Instant::now();
    let samples = training_samples(ds, cfg)?;
    let test_cases = split_cases(ds, cfg.folds, cfg.fold, Split::Test)?;
    if test_cases.is_empty() {
        return Err(Error::Data("held-out split is empty".into()));
    }
    let mut loss = cfg.loss;
    loss.num_classes = ds.spec.num_classes;
    let weights = loss.weights;
    let distilling = teacher.is_some() && !weights.is_zero();
    let pairing = teacher
        .as_ref()
        .map_or(TapPairing { pairs: Vec::new() }, |t| t.pairing.clone());

    let mut net = Network::new(net_cfg)?;
    let mut adam = AdamState::default();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;
    let mut final_metrics = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min);
        let plan = epoch_plan(cfg.seed, epoch, samples.len(), cfg.augment);
        let mut sums = [0.0; 5];
        for batch in plan.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            let mut masks = Vec::with_capacity(batch.len());
            let mut targets = Vec::new();
            for &(i, g) in batch {
                let (x, m) = transformed(&samples[i], g)?;
                if distilling {
                    let t = teacher.as_ref().expect("distilling implies a teacher");
                    targets.push(t.cache.get(&samples[i], g, &x, &m)?);
                }
                inputs.push(x);
                masks.push(m);
            }
            let x = Tensor::concat(&inputs.iter().collect::<Vec<_>>(), 0)?;
            let joined = if distilling {
                Some(TeacherTargets::concat(
                    &targets.iter().map(|t| t.as_ref()).collect::<Vec<_>>(),
                )?)
            } else {
                None
            };
            let (logits, taps) = net.forward_with_taps(&x)?;
            let terms = objective(&logits, &taps, joined.as_ref(), &pairing, &masks, &loss)?;
            terms.total.backward()?;
            let grads: Vec<Vec<f64>> = net
                .params()
                .iter()
                .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
                .collect();
            let updated = adam_step(net.params(), &grads, &mut adam, lr, cfg.adam)?;
            net.set_params(updated)?;
            let share = batch.len() as f64 / samples.len() as f64;
            for (acc, v) in sums.iter_mut().zip(terms.values()) {
                *acc += v * share;
            }
        }
        let rows = evaluate(&net, &test_cases, cfg.window, cfg.voe_variant)?;
        let per_class: Vec<f64> = (1..ds.spec.num_classes)
            .map(|c| {
                let d: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.class == c)
                    .map(|r| r.dice)
                    .collect();
                d.iter().sum::<f64>() / d.len() as f64
            })
            .collect();
        let val_dice = per_class.iter().sum::<f64>() / per_class.len() as f64;
        log::info!(
            "{kind} {} epoch {epoch}: lr {lr:.2e} total {:.4} val dice {val_dice:.4}",
            run_label(&weights),
            sums[4]
        );
        if best.as_ref().is_none_or(|(d, _, _)| val_dice > *d) {
            best = Some((val_dice, epoch, net.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            lr,
            seg: sums[0],
            pm: sums[1],
            im: sums[2],
            ra: sums[3],
            total: sums[4],
            val_dice,
            val_dice_per_class: per_class,
        });
        final_metrics = rows;
    }
    let (_, best_epoch, best_net) = best.expect("at least one epoch");
    let final_summary = summarize(&final_metrics)?;
    let mut snapshot_cfg = cfg.clone();
    snapshot_cfg.loss.weights = weights;
    let report = RunReport {
        kind: kind.into(),
        label: if kind == "teacher" {
            "teacher".into()
        } else {
            run_label(&weights)
        },
        config: snapshot_cfg.snapshot(),
        tap_pairs: pairing.pairs.clone(),
        params: net.count_params(),
        epochs,
        best_epoch,
        final_metrics,
        final_summary,
        teacher_checksum_before: None,
        teacher_checksum_after: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        last: net,
        best: best_net,
        report,
    })
}

/// Trains the teacher preset with the segmentation loss alone.
pub fn train_teacher(cfg: &TrainConfig, ds: &Dataset) -> Result<RunOutput> {
    let cfg = cfg.clone().with_weights(DistillWeights::ZERO);
    let net_cfg = NetworkConfig {
        num_classes: ds.spec.num_classes,
        seed: cfg.seed,
        ..cfg.teacher.clone()
    };
    run(&cfg, ds, net_cfg, "teacher", None)
}

/// Trains the student preset with the segmentation loss alone.
pub fn train_student(cfg: &TrainConfig, ds: &Dataset) -> Result<RunOutput> {
    let cfg = cfg.clone().with_weights(DistillWeights::ZERO);
    run(&cfg, ds, student_config(&cfg, ds), "student", None)
}

/// Trains the student against the frozen `teacher` with the configured
/// weights. `cache` may carry teacher targets from earlier runs.
pub fn distill_student(
    cfg: &TrainConfig,
    ds: &Dataset,
    teacher: &Network,
    cache: Option<&TeacherCache>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let before = param_checksum(teacher);
    let student = student_config(cfg, ds);
    let pairing = pair_for(&student, teacher, ds.spec.image_size, cfg)?;
    let own;
    let cache = match cache {
        Some(c) if c.serves(cfg, &pairing) && param_checksum(&c.teacher) == before => c,
        Some(_) => {
            return Err(Error::Config(
                "teacher cache was built for a different teacher or setup".into(),
            ))
        }
        None => {
            own = TeacherCache::new(teacher, cfg, ds)?;
            &own
        }
    };
    let mut out = run(
        cfg,
        ds,
        student,
        "student",
        Some(Teacher { cache, pairing }),
    )?;
    let after = param_checksum(teacher);
    if before != after {
        return Err(Error::Param(
            "teacher parameters changed during distillation".into(),
        ));
    }
    out.report.teacher_checksum_before = Some(before);
    out.report.teacher_checksum_after = Some(after);
    Ok(out)
}
