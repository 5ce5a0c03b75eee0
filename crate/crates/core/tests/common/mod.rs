#![allow(dead_code)]

use emkd::data::LabelMask;
use emkd::metrics::CaseVolume;
use emkd::nets::{FeatureTaps, TapPairing};
use emkd::oracle::Arr;
use emkd::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

pub fn arr(t: &Tensor) -> Arr {
    Arr::new(t.shape(), t.to_vec())
}

pub fn rand_masks(
    rng: &mut ChaCha8Rng,
    n: usize,
    h: usize,
    w: usize,
    classes: u8,
) -> Vec<LabelMask> {
    (0..n)
        .map(|_| {
            LabelMask::new(
                h,
                w,
                classes,
                (0..h * w).map(|_| rng.random_range(0..classes)).collect(),
            )
            .unwrap()
        })
        .collect()
}

pub fn labels(masks: &[LabelMask]) -> Vec<Vec<u8>> {
    masks.iter().map(|m| m.labels().to_vec()).collect()
}

pub fn taps(items: &[(&str, &Tensor)]) -> FeatureTaps {
    FeatureTaps::new(
        items
            .iter()
            .map(|(n, t)| (n.to_string(), (*t).clone()))
            .collect(),
    )
    .unwrap()
}

pub fn pairing(pairs: &[(&str, &str)]) -> TapPairing {
    TapPairing {
        pairs: pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    }
}

/// Random volume with roughly `density` of voxels set.
pub fn rand_volume(
    rng: &mut ChaCha8Rng,
    slices: usize,
    h: usize,
    w: usize,
    density: f64,
) -> Vec<Vec<bool>> {
    (0..slices)
        .map(|_| (0..h * w).map(|_| rng.random_bool(density)).collect())
        .collect()
}

pub fn volume(slices: Vec<Vec<bool>>, h: usize, w: usize) -> CaseVolume {
    CaseVolume::new("v", h, w, slices).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub mod checks;
