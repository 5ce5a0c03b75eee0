//! Check bodies shared by the suites and the acceptance runner. Each
//! panics on the first violation.

use super::*;
use emkd::data::{Dataset, DatasetSpec};
use emkd::distill::{
    imd_loss, objective, pmd_loss, rad_loss, seg_loss, total_loss, ContrastForm, DistillWeights,
    KlDirection, LossConfig, SegLossKind, TeacherTargets,
};
use emkd::harness::{distill_student, param_checksum, train_teacher, TrainConfig};
use emkd::metrics::{aggregate_range, dice, rvd, voe, VoeVariant};
use emkd::nets::{Network, NetworkConfig, TapPairing};
use emkd::oracle::{self, RefOptions, RefSide};
use emkd::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LOSS_TOL: f64 = 1e-9;
pub const METRIC_TOL: f64 = 1e-12;

// ---------------------------------------------------------------- oracle
pub fn conv2d_agrees_with_direct_sum(instances: usize) {
    let mut r = rng(10);
    for _ in 0..instances {
        let (n, cin, cout) = (
            r.random_range(1..=2),
            r.random_range(1..=3),
            r.random_range(1..=3),
        );
        let (h, w) = (r.random_range(3..=7), r.random_range(3..=7));
        let k = r.random_range(1..=3);
        let (stride, pad) = (r.random_range(1..=2), r.random_range(0..=1));
        let x = rand_tensor(&mut r, &[n, cin, h, w]);
        let kern = rand_tensor(&mut r, &[cout, cin, k, k]);
        let bias = rand_tensor(&mut r, &[cout]);
        let use_bias = r.random_bool(0.5);
        let got = x
            .conv2d(&kern, use_bias.then_some(&bias), stride, pad)
            .unwrap();
        let want = oracle::ref_conv2d(
            &arr(&x),
            &arr(&kern),
            use_bias.then(|| bias.data()),
            stride,
            pad,
        );
        assert_eq!(got.shape(), &want.shape[..]);
        assert!(max_abs_diff(got.data(), &want.data) <= LOSS_TOL);
    }
}

pub fn pooling_upsampling_and_softmax_agree(instances: usize) {
    let mut r = rng(11);
    for _ in 0..instances {
        let k = r.random_range(1..=3);
        let (n, c) = (r.random_range(1..=2), r.random_range(1..=3));
        let (h, w) = (k * r.random_range(1..=4), k * r.random_range(1..=4));
        let x = rand_tensor(&mut r, &[n, c, h, w]);
        let a = arr(&x);
        assert!(
            max_abs_diff(
                x.avg_pool2d(k).unwrap().data(),
                &oracle::ref_avg_pool(&a, k).data
            ) <= LOSS_TOL
        );
        assert_eq!(
            x.max_pool2d(k).unwrap().data(),
            &oracle::ref_max_pool(&a, k).data[..]
        );
        assert_eq!(
            x.upsample_nearest(k).unwrap().data(),
            &oracle::ref_upsample(&a, k).data[..]
        );
        let s = x.scale(5.0);
        assert!(
            max_abs_diff(
                s.softmax(1).unwrap().data(),
                &oracle::ref_softmax(&arr(&s)).data
            ) <= LOSS_TOL
        );
    }
}

pub fn pmd_agrees_in_both_directions(instances: usize) {
    let mut r = rng(12);
    for i in 0..instances {
        let shape = [r.random_range(1..=2), r.random_range(2..=4), 3, 4];
        let s = rand_tensor(&mut r, &shape).scale(3.0);
        let t = rand_tensor(&mut r, &shape).scale(3.0);
        let temp = [1.0, 2.0, 0.5][i % 3];
        for (dir, first) in [
            (KlDirection::StudentToTeacher, true),
            (KlDirection::TeacherToStudent, false),
        ] {
            let got = pmd_loss(&s, &t, dir, temp).unwrap().item().unwrap();
            let want = oracle::ref_pmd(&arr(&s), &arr(&t), first, temp);
            assert!((got - want).abs() <= LOSS_TOL, "{got} vs {want}");
        }
    }
}

fn extents(r: &mut ChaCha8Rng) -> (usize, usize) {
    [(4, 4), (2, 4), (4, 2), (8, 2), (2, 8)][r.random_range(0..5)]
}

pub fn imd_agrees_across_rescale_cases(instances: usize) {
    let mut r = rng(13);
    for _ in 0..instances {
        let (hs, ht) = extents(&mut r);
        let n = r.random_range(1..=2);
        let (cs, ct) = (r.random_range(1..=3), r.random_range(1..=4));
        let s = rand_tensor(&mut r, &[n, cs, hs, hs]);
        let t = rand_tensor(&mut r, &[n, ct, ht, ht]);
        let exponent = [2.0, 1.0][r.random_range(0..2)];
        let got = imd_loss(
            &pairing(&[("s", "t")]),
            &taps(&[("s", &s)]),
            &taps(&[("t", &t)]),
            exponent,
        )
        .unwrap()
        .item()
        .unwrap();
        let want = oracle::ref_imd_pair(&arr(&s), &arr(&t), exponent);
        assert!((got - want).abs() <= LOSS_TOL, "{got} vs {want}");
    }
}

pub fn rad_agrees_for_every_form_and_norm(instances: usize) {
    let mut r = rng(14);
    for i in 0..instances {
        let (hs, ht) = extents(&mut r);
        let n = r.random_range(1..=2);
        let classes = r.random_range(2..=4u8);
        let (cs, ct) = (r.random_range(1..=3), r.random_range(1..=4));
        let s = rand_tensor(&mut r, &[n, cs, hs, hs]);
        let t = rand_tensor(&mut r, &[n, ct, ht, ht]);
        let masks = rand_masks(&mut r, n, 8, 8, classes);
        let (p, vector) = [(1, false), (2, false), (1, true), (2, true)][i % 4];
        let form = if vector {
            ContrastForm::Vector
        } else {
            ContrastForm::Scalar
        };
        let got = rad_loss(
            &pairing(&[("s", "t")]),
            &taps(&[("s", &s)]),
            &taps(&[("t", &t)]),
            &masks,
            classes as usize,
            p,
            form,
        )
        .unwrap()
        .item()
        .unwrap();
        let want = oracle::ref_rad_pair(
            &arr(&s),
            &arr(&t),
            &labels(&masks),
            8,
            8,
            classes as usize,
            p,
            vector,
        );
        assert!((got - want).abs() <= LOSS_TOL, "{got} vs {want}");
    }
}

pub fn segmentation_losses_agree(instances: usize) {
    let mut r = rng(15);
    for _ in 0..instances {
        let (n, c) = (r.random_range(1..=3), r.random_range(2..=4));
        let x = rand_tensor(&mut r, &[n, c, 4, 4]).scale(4.0);
        let masks = rand_masks(&mut r, n, 4, 4, c as u8);
        let ce = seg_loss(&x, &masks, SegLossKind::CrossEntropy)
            .unwrap()
            .item()
            .unwrap();
        let sd = seg_loss(&x, &masks, SegLossKind::SoftDice)
            .unwrap()
            .item()
            .unwrap();
        assert!((ce - oracle::ref_cross_entropy(&arr(&x), &labels(&masks))).abs() <= LOSS_TOL);
        assert!((sd - oracle::ref_soft_dice(&arr(&x), &labels(&masks))).abs() <= LOSS_TOL);
    }
}

pub fn full_objective_agrees_with_straight_line_losses(instances: usize) {
    let mut r = rng(16);
    let pairs = pairing(&[("s1", "t1"), ("s2", "t2")]);
    for i in 0..instances {
        let (n, c) = (r.random_range(1..=2), r.random_range(2..=3));
        let s_logits = rand_tensor(&mut r, &[n, c, 8, 8]).scale(2.0);
        let t_logits = rand_tensor(&mut r, &[n, c, 8, 8]).scale(2.0);
        let s1 = rand_tensor(&mut r, &[n, 2, 4, 4]);
        let t1 = rand_tensor(&mut r, &[n, 5, 4, 4]);
        let s2 = rand_tensor(&mut r, &[n, 3, 2, 2]);
        let t2 = rand_tensor(&mut r, &[n, 4, 8, 8]);
        let masks = rand_masks(&mut r, n, 8, 8, c as u8);

        let mut cfg = LossConfig::new(c);
        cfg.seg = if i % 2 == 0 {
            SegLossKind::CrossEntropy
        } else {
            SegLossKind::SoftDice
        };
        cfg.direction = if i % 3 == 0 {
            KlDirection::TeacherToStudent
        } else {
            KlDirection::StudentToTeacher
        };
        cfg.form = if i % 4 < 2 {
            ContrastForm::Scalar
        } else {
            ContrastForm::Vector
        };
        cfg.norm_p = 1 + (i % 2) as u32;
        cfg.temperature = if i % 5 == 0 { 2.0 } else { 1.0 };
        cfg.weights = if i % 7 == 0 {
            DistillWeights {
                alpha: 0.3,
                beta1: 1.7,
                beta2: 0.2,
            }
        } else {
            DistillWeights::default()
        };

        let t_taps = taps(&[("t1", &t1), ("t2", &t2)]);
        let targets = TeacherTargets::compute(&t_logits, &t_taps, &pairs, &masks, &cfg).unwrap();
        let terms = objective(
            &s_logits,
            &taps(&[("s1", &s1), ("s2", &s2)]),
            Some(&targets),
            &pairs,
            &masks,
            &cfg,
        )
        .unwrap();

        let opts = RefOptions {
            student_first_kl: cfg.direction == KlDirection::StudentToTeacher,
            temperature: cfg.temperature,
            exponent: cfg.exponent,
            norm_p: cfg.norm_p,
            vector_form: cfg.form == ContrastForm::Vector,
            dice: cfg.seg == SegLossKind::SoftDice,
        };
        let student = RefSide {
            logits: arr(&s_logits),
            taps: vec![arr(&s1), arr(&s2)],
        };
        let teacher = RefSide {
            logits: arr(&t_logits),
            taps: vec![arr(&t1), arr(&t2)],
        };
        let w = cfg.weights;
        let want = oracle::ref_losses(
            &student,
            &teacher,
            &labels(&masks),
            c,
            (w.alpha, w.beta1, w.beta2),
            opts,
        );
        let got = terms.values();
        let want = [want.0, want.1, want.2, want.3, want.4];
        assert!(max_abs_diff(&got, &want) <= LOSS_TOL, "{got:?} vs {want:?}");
    }
}

pub fn metrics_agree_on_random_volumes(instances: usize) {
    let mut r = rng(17);
    for i in 0..instances {
        let (s, h, w) = (
            r.random_range(1..=3),
            r.random_range(1..=6),
            r.random_range(1..=6),
        );
        let density = [0.0, 0.05, 0.3, 0.7, 1.0][i % 5];
        let p = rand_volume(&mut r, s, h, w, density);
        let g = rand_volume(&mut r, s, h, w, [0.0, 0.2, 0.5][i % 3]);
        let (rd, rvp, rvu, rr) = oracle::ref_metrics(&p.concat(), &g.concat());
        let (pv, gv) = (volume(p, h, w), volume(g, h, w));
        assert!((dice(&pv, &gv).unwrap() - rd).abs() <= METRIC_TOL);
        assert!((voe(&pv, &gv, VoeVariant::AsPrinted).unwrap() - rvp).abs() <= METRIC_TOL);
        assert!((voe(&pv, &gv, VoeVariant::Union).unwrap() - rvu).abs() <= METRIC_TOL);
        match rr {
            Some(want) => assert!((rvd(&pv, &gv).unwrap() - want).abs() <= METRIC_TOL),
            None => assert!(rvd(&pv, &gv).is_err()),
        }
    }
}

// ---------------------------------------------------------------- invariance

fn form(vector: bool) -> ContrastForm {
    if vector {
        ContrastForm::Vector
    } else {
        ContrastForm::Scalar
    }
}

/// Every loss between a network and itself, all taps paired with
/// themselves.
pub fn self_distillation_zero(seed: u64, depth: usize, skips: bool, classes: usize) {
    let net = Network::new(NetworkConfig {
        depth,
        base_channels: 3,
        channel_growth: 2,
        num_classes: classes,
        use_skips: skips,
        seed,
    })
    .unwrap();
    let mut r = rng(seed);
    let x = rand_tensor(&mut r, &[2, 1, 16, 16]);
    let (logits, t) = net.forward_with_taps(&x).unwrap();
    let pairs = TapPairing {
        pairs: t
            .iter()
            .map(|(n, _)| (n.to_string(), n.to_string()))
            .collect(),
    };
    let masks = rand_masks(&mut r, 2, 16, 16, classes as u8);
    for dir in [KlDirection::StudentToTeacher, KlDirection::TeacherToStudent] {
        assert!(
            pmd_loss(&logits, &logits, dir, 1.0)
                .unwrap()
                .item()
                .unwrap()
                .abs()
                <= 1e-12
        );
    }
    assert!(imd_loss(&pairs, &t, &t, 2.0).unwrap().item().unwrap().abs() <= 1e-12);
    for (p, v) in [(1, false), (2, false), (1, true), (2, true)] {
        let ra = rad_loss(&pairs, &t, &t, &masks, classes, p, form(v))
            .unwrap()
            .item()
            .unwrap();
        assert!(ra.abs() <= 1e-12, "rad {ra}");
    }
}

pub fn pmd_shift_invariance(seed: u64, c: usize, t_to_s: bool, temp: f64) {
    let mut r = rng(seed);
    let s = rand_tensor(&mut r, &[2, c, 4, 4]).scale(3.0);
    let shift = rand_tensor(&mut r, &[2, 1, 4, 4]).scale(10.0);
    let t = s.add(&shift).unwrap();
    let dir = if t_to_s {
        KlDirection::TeacherToStudent
    } else {
        KlDirection::StudentToTeacher
    };
    let v = pmd_loss(&s, &t, dir, temp).unwrap().item().unwrap();
    assert!(v.abs() <= 1e-12, "pmd {v}");
}

/// IMD and RAD unchanged when either side's features are scaled by `k > 0`.
pub fn feature_scale_invariance(
    seed: u64,
    k: f64,
    scale_student: bool,
    p: u32,
    vector: bool,
    ext: usize,
) {
    let (hs, ht) = [(4, 4), (2, 4), (8, 4)][ext % 3];
    let mut r = rng(seed);
    let s = rand_tensor(&mut r, &[2, 3, hs, hs]);
    let t = rand_tensor(&mut r, &[2, 4, ht, ht]);
    let masks = rand_masks(&mut r, 2, 8, 8, 3);
    let pairs = pairing(&[("s", "t")]);
    let both = |s: &Tensor, t: &Tensor| {
        let (st, tt) = (taps(&[("s", s)]), taps(&[("t", t)]));
        let im = imd_loss(&pairs, &st, &tt, 2.0).unwrap().item().unwrap();
        let ra = rad_loss(&pairs, &st, &tt, &masks, 3, p, form(vector))
            .unwrap()
            .item()
            .unwrap();
        (im, ra)
    };
    let base = both(&s, &t);
    let scaled = if scale_student {
        both(&s.scale(k), &t)
    } else {
        both(&s, &t.scale(k))
    };
    assert!(
        (base.0 - scaled.0).abs() <= 1e-9,
        "imd {} vs {}",
        base.0,
        scaled.0
    );
    assert!(
        (base.1 - scaled.1).abs() <= 1e-9,
        "rad {} vs {}",
        base.1,
        scaled.1
    );
}

/// Pooling a nearest upsample by the same power-of-two factor is the
/// identity, bit for bit.
pub fn pool_upsample_identity(seed: u64, log_k: u32, h: usize, w: usize) {
    let k = 1usize << log_k;
    let x = rand_tensor(&mut rng(seed), &[2, 2, h, w]);
    let back = x.upsample_nearest(k).unwrap().avg_pool2d(k).unwrap();
    assert_eq!(back.data(), x.data());
}

pub fn total_decomposition(v: [f64; 4], w: [f64; 3]) {
    let t = Tensor::scalar;
    let weights = DistillWeights {
        alpha: w[0],
        beta1: w[1],
        beta2: w[2],
    };
    let got = total_loss(&t(v[0]), &t(v[1]), &t(v[2]), &t(v[3]), weights)
        .unwrap()
        .item()
        .unwrap();
    let want = v[0] + w[0] * v[1] + w[1] * v[2] + w[2] * v[3];
    assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
}

pub fn tiny_dataset() -> Dataset {
    Dataset::generate(&DatasetSpec {
        image_size: 16,
        num_cases: 5,
        slices_min: 1,
        slices_max: 2,
        organ_radius_min: 4.0,
        organ_radius_max: 5.0,
        tumor_radius_min: 1.5,
        tumor_radius_max: 2.5,
        ..DatasetSpec::default()
    })
    .unwrap()
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        teacher: NetworkConfig {
            base_channels: 4,
            ..NetworkConfig::teacher(2, 0)
        },
        ..TrainConfig::default()
    }
}

/// Distillation leaves every teacher parameter bit untouched and never
/// gives it a gradient.
pub fn frozen_teacher() {
    let ds = tiny_dataset();
    let cfg = tiny_config();
    let teacher = train_teacher(&cfg, &ds).unwrap().last;
    let bits = |n: &Network| -> Vec<Vec<u64>> {
        n.params()
            .iter()
            .map(|p| p.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    let before = bits(&teacher);
    let out = distill_student(&cfg, &ds, &teacher, None).unwrap();
    assert_eq!(before, bits(&teacher));
    assert_eq!(
        out.report.teacher_checksum_before,
        Some(param_checksum(&teacher))
    );
    assert_eq!(
        out.report.teacher_checksum_before,
        out.report.teacher_checksum_after
    );
    assert!(teacher.params().iter().all(|p| p.grad().is_none()));
}

// ---------------------------------------------------------------- metric identities

pub fn dice_self_is_one(seed: u64, density: f64) {
    let v = volume(rand_volume(&mut rng(seed), 3, 5, 4, density), 5, 4);
    assert_eq!(dice(&v, &v).unwrap(), 1.0);
}

pub fn voe_at_perfect_overlap(seed: u64, density: f64) {
    let v = volume(rand_volume(&mut rng(seed), 2, 6, 6, density), 6, 6);
    assert_eq!(voe(&v, &v, VoeVariant::AsPrinted).unwrap(), 0.5);
    assert_eq!(voe(&v, &v, VoeVariant::Union).unwrap(), 0.0);
}

pub fn union_voe_from_dice(seed: u64, dp: f64, dg: f64) {
    let mut r = rng(seed);
    let p = volume(rand_volume(&mut r, 2, 7, 5, dp), 7, 5);
    let g = volume(rand_volume(&mut r, 2, 7, 5, dg), 7, 5);
    let d = dice(&p, &g).unwrap();
    let want = 1.0 - d / (2.0 - d);
    let got = voe(&p, &g, VoeVariant::Union).unwrap();
    assert!((got - want).abs() <= METRIC_TOL, "{got} vs {want}");
}

pub fn range_endpoints(scores: &[f64]) {
    let r = aggregate_range(scores).unwrap();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.max(), max);
    assert_eq!(r.min(), min);
}
