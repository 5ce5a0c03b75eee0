//! Finite-difference checks of every differentiable operation and loss on
//! seeded random instances. Backs `emkd gradcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabelMask;
use crate::distill::{
    imd_loss, pmd_loss, rad_loss, seg_loss, total_loss, ContrastForm, DistillWeights, KlDirection,
    SegLossKind,
};
use crate::nets::{FeatureTaps, TapPairing};
use crate::tensor::{grad_check, Tensor};
use crate::{Error, Result};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Every name accepted by [`check`].
pub const CHECKS: &[&str] = &[
    "conv2d",
    "avg_pool2d",
    "max_pool2d",
    "upsample_nearest",
    "softmax",
    "log_softmax",
    "pmd",
    "imd",
    "rad",
    "seg_cross_entropy",
    "seg_soft_dice",
    "total",
];

/// Worst relative error of one check over all its instances.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape)
        .expect("shape matches data")
}

fn rand_masks(rng: &mut ChaCha8Rng, n: usize, hw: usize, classes: u8) -> Vec<LabelMask> {
    (0..n)
        .map(|_| {
            let labels = (0..hw * hw).map(|_| rng.random_range(0..classes)).collect();
            LabelMask::new(hw, hw, classes, labels).expect("labels below class count")
        })
        .collect()
}

fn taps(name: &str, t: Tensor) -> Result<FeatureTaps> {
    FeatureTaps::new(vec![(name.to_string(), t)])
}

fn one_pair() -> TapPairing {
    TapPairing {
        pairs: vec![("s".into(), "t".into())],
    }
}

/// `Σ op(x) ⊙ r` for a fixed random `r`, so every output element matters.
fn probe_sum(y: Tensor, r: &Tensor) -> Result<Tensor> {
    Ok(y.mul(r)?.sum())
}

fn one_instance(name: &str, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = rng.random_range(1..=2);
    let c = rng.random_range(2..=3);
    match name {
        "conv2d" => {
            let x = rand_tensor(rng, &[n, c, 5, 5]);
            let k = rand_tensor(rng, &[2, c, 3, 3]);
            let b = rand_tensor(rng, &[2]);
            let stride = rng.random_range(1..=2);
            let r = rand_tensor(rng, x.conv2d(&k, Some(&b), stride, 1)?.shape());
            let ex = grad_check(
                |x| probe_sum(x.conv2d(&k, Some(&b), stride, 1)?, &r),
                &x,
                STEP,
            )?;
            let ek = grad_check(
                |k| probe_sum(x.conv2d(k, Some(&b), stride, 1)?, &r),
                &k,
                STEP,
            )?;
            let eb = grad_check(
                |b| probe_sum(x.conv2d(&k, Some(b), stride, 1)?, &r),
                &b,
                STEP,
            )?;
            Ok(ex.max(ek).max(eb))
        }
        "avg_pool2d" | "max_pool2d" | "upsample_nearest" => {
            let x = rand_tensor(rng, &[n, c, 4, 4]);
            let op = |x: &Tensor| match name {
                "avg_pool2d" => x.avg_pool2d(2),
                "max_pool2d" => x.max_pool2d(2),
                _ => x.upsample_nearest(2),
            };
            let r = rand_tensor(rng, op(&x)?.shape());
            grad_check(|x| probe_sum(op(x)?, &r), &x, STEP)
        }
        "softmax" | "log_softmax" => {
            let x = rand_tensor(rng, &[n, c, 3, 3]);
            let r = rand_tensor(rng, x.shape());
            let op = |x: &Tensor| {
                if name == "softmax" {
                    x.softmax(1)
                } else {
                    x.log_softmax(1)
                }
            };
            grad_check(|x| probe_sum(op(x)?, &r), &x, STEP)
        }
        "pmd" => {
            let s = rand_tensor(rng, &[n, c, 4, 4]);
            let t = rand_tensor(rng, &[n, c, 4, 4]).scale(3.0);
            let mut worst = 0.0f64;
            for dir in [KlDirection::StudentToTeacher, KlDirection::TeacherToStudent] {
                for temp in [1.0, 2.0] {
                    worst = worst.max(grad_check(|s| pmd_loss(s, &t, dir, temp), &s, STEP)?);
                }
            }
            Ok(worst)
        }
        "imd" => {
            let (hs, ht) = [(4, 4), (4, 8), (8, 4)][rng.random_range(0..3)];
            let s = rand_tensor(rng, &[n, c, hs, hs]);
            let t = taps("t", rand_tensor(rng, &[n, 4, ht, ht]))?;
            grad_check(
                |s| imd_loss(&one_pair(), &taps("s", s.clone())?, &t, 2.0),
                &s,
                STEP,
            )
        }
        "rad" => {
            let (hs, ht) = [(4, 4), (4, 8), (8, 4)][rng.random_range(0..3)];
            let classes = rng.random_range(2..=3u8);
            let s = rand_tensor(rng, &[n, c, hs, hs]);
            let t = taps("t", rand_tensor(rng, &[n, 4, ht, ht]))?;
            let masks = rand_masks(rng, n, 8, classes);
            let mut worst = 0.0f64;
            for p in [1, 2] {
                for form in [ContrastForm::Scalar, ContrastForm::Vector] {
                    let f = |s: &Tensor| {
                        rad_loss(
                            &one_pair(),
                            &taps("s", s.clone())?,
                            &t,
                            &masks,
                            classes as usize,
                            p,
                            form,
                        )
                    };
                    worst = worst.max(grad_check(f, &s, STEP)?);
                }
            }
            Ok(worst)
        }
        "seg_cross_entropy" | "seg_soft_dice" => {
            let kind = if name == "seg_soft_dice" {
                SegLossKind::SoftDice
            } else {
                SegLossKind::CrossEntropy
            };
            let x = rand_tensor(rng, &[n, c, 4, 4]);
            let masks = rand_masks(rng, n, 4, c as u8);
            grad_check(|x| seg_loss(x, &masks, kind), &x, STEP)
        }
        "total" => {
            // logits are a 1×1 conv of the student feature, so every term
            // depends on it
            let feat = rand_tensor(rng, &[n, 3, 8, 8]);
            let head = rand_tensor(rng, &[c, 3, 1, 1]);
            let t_logits = rand_tensor(rng, &[n, c, 8, 8]);
            let t = taps("t", rand_tensor(rng, &[n, 4, 4, 4]))?;
            let masks = rand_masks(rng, n, 8, c as u8);
            let f = |x: &Tensor| {
                let logits = x.conv2d(&head, None, 1, 0)?;
                let s = taps("s", x.clone())?;
                let seg = seg_loss(&logits, &masks, SegLossKind::CrossEntropy)?;
                let pm = pmd_loss(&logits, &t_logits, KlDirection::StudentToTeacher, 1.0)?;
                let im = imd_loss(&one_pair(), &s, &t, 2.0)?;
                let ra = rad_loss(&one_pair(), &s, &t, &masks, c, 2, ContrastForm::Scalar)?;
                total_loss(&seg, &pm, &im, &ra, DistillWeights::default())
            };
            grad_check(f, &feat, STEP)
        }
        other => Err(Error::Config(format!(
            "unknown gradcheck {other:?}; known: {}",
            CHECKS.join(", ")
        ))),
    }
}

/// Runs check `name` on `instances` random instances drawn from `seed`.
pub fn check(name: &str, instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        worst = worst.max(one_instance(name, &mut rng)?);
    }
    Ok(CheckResult {
        name: name.to_string(),
        instances,
        max_rel_error: worst,
    })
}

/// Every check in [`CHECKS`] order.
pub fn check_all(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    CHECKS.iter().map(|n| check(n, instances, seed)).collect()
}
