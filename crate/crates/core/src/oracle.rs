//! Naive reference implementations.
//!
//! Everything here works on plain `Vec<f64>` arrays with explicit loops and
//! allocates freely. Nothing is imported from the tensor, distillation or
//! metrics code paths: these functions exist only to be compared against
//! them (tests and `emkd gradcheck`).

/// A plain row-major array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Arr {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Arr::new(shape, vec![0.0; shape.iter().product()])
    }

    /// Element of a rank-4 array.
    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let s = &self.shape;
        self.data[((n * s[1] + c) * s[2] + h) * s[3] + w]
    }

    fn set4(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let s = self.shape.clone();
        self.data[((n * s[1] + c) * s[2] + h) * s[3] + w] = v;
    }
}

/// Direct-sum 2-D cross-correlation with zero padding.
pub fn ref_conv2d(
    input: &Arr,
    kernel: &Arr,
    bias: Option<&[f64]>,
    stride: usize,
    padding: usize,
) -> Arr {
    let (n, cin, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let (cout, kh, kw) = (kernel.shape[0], kernel.shape[2], kernel.shape[3]);
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    let mut out = Arr::zeros(&[n, cout, ho, wo]);
    for b in 0..n {
        for co in 0..cout {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = bias.map_or(0.0, |bs| bs[co]);
                    for ci in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                let ih = (oh * stride + i) as isize - padding as isize;
                                let iw = (ow * stride + j) as isize - padding as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= w as isize {
                                    continue;
                                }
                                acc += input.at4(b, ci, ih as usize, iw as usize)
                                    * kernel.at4(co, ci, i, j);
                            }
                        }
                    }
                    out.set4(b, co, oh, ow, acc);
                }
            }
        }
    }
    out
}

pub fn ref_avg_pool(input: &Arr, k: usize) -> Arr {
    let (n, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let mut out = Arr::zeros(&[n, c, h / k, w / k]);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h / k {
                for j in 0..w / k {
                    let mut s = 0.0;
                    for di in 0..k {
                        for dj in 0..k {
                            s += input.at4(b, ch, i * k + di, j * k + dj);
                        }
                    }
                    out.set4(b, ch, i, j, s / (k * k) as f64);
                }
            }
        }
    }
    out
}

pub fn ref_max_pool(input: &Arr, k: usize) -> Arr {
    let (n, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let mut out = Arr::zeros(&[n, c, h / k, w / k]);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h / k {
                for j in 0..w / k {
                    let mut m = f64::NEG_INFINITY;
                    for di in 0..k {
                        for dj in 0..k {
                            m = m.max(input.at4(b, ch, i * k + di, j * k + dj));
                        }
                    }
                    out.set4(b, ch, i, j, m);
                }
            }
        }
    }
    out
}

pub fn ref_upsample(input: &Arr, k: usize) -> Arr {
    let (n, c, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let mut out = Arr::zeros(&[n, c, h * k, w * k]);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..h * k {
                for j in 0..w * k {
                    out.set4(b, ch, i, j, input.at4(b, ch, i / k, j / k));
                }
            }
        }
    }
    out
}

/// Channel softmax by direct exponentiation and normalization.
pub fn ref_softmax(logits: &Arr) -> Arr {
    let (n, c, h, w) = (
        logits.shape[0],
        logits.shape[1],
        logits.shape[2],
        logits.shape[3],
    );
    let mut out = Arr::zeros(&logits.shape);
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let mut z = 0.0;
                for ch in 0..c {
                    z += logits.at4(b, ch, i, j).exp();
                }
                for ch in 0..c {
                    out.set4(b, ch, i, j, logits.at4(b, ch, i, j).exp() / z);
                }
            }
        }
    }
    out
}

fn scaled(a: &Arr, s: f64) -> Arr {
    Arr::new(&a.shape, a.data.iter().map(|v| v * s).collect())
}

/// Mean per-pixel KL divergence. `student_first` selects KL(p_s‖p_t).
pub fn ref_pmd(student: &Arr, teacher: &Arr, student_first: bool, temperature: f64) -> f64 {
    let ps = ref_softmax(&scaled(student, 1.0 / temperature));
    let pt = ref_softmax(&scaled(teacher, 1.0 / temperature));
    let (p, q) = if student_first {
        (&ps, &pt)
    } else {
        (&pt, &ps)
    };
    let (n, c, h, w) = (p.shape[0], p.shape[1], p.shape[2], p.shape[3]);
    let mut total = 0.0;
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let (pv, qv) = (p.at4(b, ch, i, j), q.at4(b, ch, i, j));
                    total += pv * (pv / qv).ln();
                }
            }
        }
    }
    total / (n * h * w) as f64
}

/// Rescales the spatial extent of `feat` to `(ht, wt)`: replicate when
/// smaller, block-average when larger.
pub fn ref_rescale(feat: &Arr, ht: usize, wt: usize) -> Arr {
    let (hs, ws) = (feat.shape[2], feat.shape[3]);
    assert!(hs * wt == ws * ht, "aspect ratio must be preserved");
    if hs == ht {
        feat.clone()
    } else if hs < ht {
        ref_upsample(feat, ht / hs)
    } else {
        ref_avg_pool(feat, hs / ht)
    }
}

/// Per-pixel Σ_c |x|^exponent, shape `[N, h, w]`.
pub fn ref_importance_map(feat: &Arr, exponent: f64) -> Arr {
    let (n, c, h, w) = (feat.shape[0], feat.shape[1], feat.shape[2], feat.shape[3]);
    let mut out = Arr::zeros(&[n, h, w]);
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let mut s = 0.0;
                for ch in 0..c {
                    s += feat.at4(b, ch, i, j).abs().powf(exponent);
                }
                out.data[(b * h + i) * w + j] = s;
            }
        }
    }
    out
}

/// Importance-map distillation term for one tap pair.
pub fn ref_imd_pair(student: &Arr, teacher: &Arr, exponent: f64) -> f64 {
    let (ht, wt) = (teacher.shape[2], teacher.shape[3]);
    let ms = ref_importance_map(&ref_rescale(student, ht, wt), exponent);
    let mt = ref_importance_map(teacher, exponent);
    let n = teacher.shape[0];
    let len = ht * wt;
    let mut total = 0.0;
    for b in 0..n {
        let s = &ms.data[b * len..(b + 1) * len];
        let t = &mt.data[b * len..(b + 1) * len];
        let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
        let nt = t.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12;
        let mut l1 = 0.0;
        for k in 0..len {
            l1 += (s[k] / ns - t[k] / nt).abs();
        }
        total += l1;
    }
    total / n as f64
}

/// Nearest (top-left) label downsample followed by one-hot expansion.
/// Returns `(masks [c][h*w], counts)`.
pub fn ref_resize_one_hot(
    labels: &[u8],
    big_h: usize,
    big_w: usize,
    classes: usize,
    h: usize,
    w: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (fh, fw) = (big_h / h, big_w / w);
    let mut masks = vec![vec![0.0; h * w]; classes];
    let mut counts = vec![0; classes];
    for i in 0..h {
        for j in 0..w {
            let lab = labels[(i * fh) * big_w + j * fw] as usize;
            masks[lab][i * w + j] = 1.0;
            counts[lab] += 1;
        }
    }
    (masks, counts)
}

/// Masked mean feature vector per class; `None` for an empty class.
/// `feat` is one batch item, `[C, h, w]` flattened.
pub fn ref_region_vectors(
    feat: &[f64],
    channels: usize,
    masks: &[Vec<f64>],
    counts: &[usize],
) -> Vec<Option<Vec<f64>>> {
    let hw = feat.len() / channels;
    masks
        .iter()
        .zip(counts)
        .map(|(m, &cnt)| {
            if cnt == 0 {
                return None;
            }
            let mut r = vec![0.0; channels];
            for (ch, rv) in r.iter_mut().enumerate() {
                for j in 0..hw {
                    *rv += feat[ch * hw + j] * m[j];
                }
                *rv /= cnt as f64;
            }
            Some(r)
        })
        .collect()
}

/// `a·b / ((‖a‖ + 1e-12)(‖b‖ + 1e-12))`.
pub fn ref_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    dot / ((na.sqrt() + 1e-12) * (nb.sqrt() + 1e-12))
}

/// Cosines over class pairs `i < j` where both regions are present.
pub fn ref_pair_cosines(regions: &[Option<Vec<f64>>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if let (Some(a), Some(b)) = (&regions[i], &regions[j]) {
                out.push(ref_cosine(a, b));
            }
        }
    }
    out
}

/// Region-affinity term for one tap pair.
#[allow(clippy::too_many_arguments)]
pub fn ref_rad_pair(
    student: &Arr,
    teacher: &Arr,
    labels: &[Vec<u8>],
    big_h: usize,
    big_w: usize,
    classes: usize,
    norm_p: u32,
    vector_form: bool,
) -> f64 {
    let (ht, wt) = (teacher.shape[2], teacher.shape[3]);
    let s = ref_rescale(student, ht, wt);
    let n = teacher.shape[0];
    let (cs, ct) = (s.shape[1], teacher.shape[1]);
    let mut total = 0.0;
    for b in 0..n {
        let (masks, counts) = ref_resize_one_hot(&labels[b], big_h, big_w, classes, ht, wt);
        let fs = &s.data[b * cs * ht * wt..(b + 1) * cs * ht * wt];
        let ft = &teacher.data[b * ct * ht * wt..(b + 1) * ct * ht * wt];
        let vs = ref_pair_cosines(&ref_region_vectors(fs, cs, &masks, &counts));
        let vt = ref_pair_cosines(&ref_region_vectors(ft, ct, &masks, &counts));
        if vs.is_empty() {
            continue;
        }
        let diffs: Vec<f64> = if vector_form {
            vs.iter().zip(&vt).map(|(a, b)| a - b).collect()
        } else {
            let ms = vs.iter().sum::<f64>() / vs.len() as f64;
            let mt = vt.iter().sum::<f64>() / vt.len() as f64;
            vec![ms - mt]
        };
        total += if norm_p == 1 {
            diffs.iter().map(|d| d.abs()).sum::<f64>()
        } else {
            diffs.iter().map(|d| d * d).sum::<f64>().sqrt()
        };
    }
    total / n as f64
}

/// Mean negative log-likelihood of the labelled class.
pub fn ref_cross_entropy(logits: &Arr, labels: &[Vec<u8>]) -> f64 {
    let p = ref_softmax(logits);
    let (n, h, w) = (p.shape[0], p.shape[2], p.shape[3]);
    let mut total = 0.0;
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let lab = labels[b][i * w + j] as usize;
                total -= p.at4(b, lab, i, j).ln();
            }
        }
    }
    total / (n * h * w) as f64
}

/// `1 − mean_{c ≥ 1} (2Σpg + ε) / (Σp + Σg + ε)` over the whole batch.
pub fn ref_soft_dice(logits: &Arr, labels: &[Vec<u8>]) -> f64 {
    let eps = 1e-6;
    let p = ref_softmax(logits);
    let (n, c, h, w) = (p.shape[0], p.shape[1], p.shape[2], p.shape[3]);
    let mut acc = 0.0;
    for ch in 1..c {
        let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
        for b in 0..n {
            for i in 0..h {
                for j in 0..w {
                    let g = if labels[b][i * w + j] as usize == ch {
                        1.0
                    } else {
                        0.0
                    };
                    let pv = p.at4(b, ch, i, j);
                    inter += pv * g;
                    sp += pv;
                    sg += g;
                }
            }
        }
        acc += (2.0 * inter + eps) / (sp + sg + eps);
    }
    1.0 - acc / (c - 1) as f64
}

/// Knobs shared by [`ref_losses`].
#[derive(Debug, Clone, Copy)]
pub struct RefOptions {
    pub student_first_kl: bool,
    pub temperature: f64,
    pub exponent: f64,
    pub norm_p: u32,
    pub vector_form: bool,
    pub dice: bool,
}

impl Default for RefOptions {
    fn default() -> Self {
        RefOptions {
            student_first_kl: true,
            temperature: 1.0,
            exponent: 2.0,
            norm_p: 2,
            vector_form: false,
            dice: false,
        }
    }
}

/// One network's side of a distillation instance.
#[derive(Debug, Clone)]
pub struct RefSide {
    pub logits: Arr,
    /// Features for each tap pair, in pairing order.
    pub taps: Vec<Arr>,
}

/// Loss components `(seg, pm, im, ra, total)` from straight-line loops.
pub fn ref_losses(
    student: &RefSide,
    teacher: &RefSide,
    labels: &[Vec<u8>],
    classes: usize,
    weights: (f64, f64, f64),
    opts: RefOptions,
) -> (f64, f64, f64, f64, f64) {
    let (big_h, big_w) = (student.logits.shape[2], student.logits.shape[3]);
    let seg = if opts.dice {
        ref_soft_dice(&student.logits, labels)
    } else {
        ref_cross_entropy(&student.logits, labels)
    };
    let pm = ref_pmd(
        &student.logits,
        &teacher.logits,
        opts.student_first_kl,
        opts.temperature,
    );
    let mut im = 0.0;
    let mut ra = 0.0;
    for (s, t) in student.taps.iter().zip(&teacher.taps) {
        im += ref_imd_pair(s, t, opts.exponent);
        ra += ref_rad_pair(
            s,
            t,
            labels,
            big_h,
            big_w,
            classes,
            opts.norm_p,
            opts.vector_form,
        );
    }
    let (alpha, beta1, beta2) = weights;
    (seg, pm, im, ra, seg + alpha * pm + beta1 * im + beta2 * ra)
}

/// Voxel counts behind the volume metrics.
fn counts(p: &[bool], g: &[bool]) -> (f64, f64, f64, f64) {
    let (mut np, mut ng, mut inter, mut union) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..p.len() {
        if p[k] {
            np += 1.0;
        }
        if g[k] {
            ng += 1.0;
        }
        if p[k] && g[k] {
            inter += 1.0;
        }
        if p[k] || g[k] {
            union += 1.0;
        }
    }
    (np, ng, inter, union)
}

/// `(dice, voe as printed, voe over the union, rvd)`; rvd is `None` when
/// the ground truth is empty.
pub fn ref_metrics(p: &[bool], g: &[bool]) -> (f64, f64, f64, Option<f64>) {
    let (np, ng, inter, union) = counts(p, g);
    let dice = if np + ng == 0.0 {
        1.0
    } else {
        2.0 * inter / (np + ng)
    };
    let voe_printed = if np + ng == 0.0 {
        0.5
    } else {
        1.0 - inter / (np + ng)
    };
    let voe_union = if union == 0.0 {
        0.0
    } else {
        1.0 - inter / union
    };
    let rvd = (ng > 0.0).then(|| (np - ng) / ng);
    (dice, voe_printed, voe_union, rvd)
}
