use crate::data::{hu_window, make_folds, Case, Dataset, LabelMask, WindowSpec};
use crate::metrics::{case_metrics, CaseMetrics, CaseVolume, VoeVariant};
use crate::nets::Network;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// Cases of one side of a fold. Folds are keyed on the dataset seed, so
/// every run on a dataset sees the same partition.
pub fn split_cases(ds: &Dataset, folds: usize, fold: usize, split: Split) -> Result<Vec<&Case>> {
    let ids = match split {
        Split::All => ds.case_ids(),
        _ => {
            let all = make_folds(&ds.case_ids(), folds, ds.spec.seed)?;
            let (train, test) = all
                .into_iter()
                .nth(fold)
                .ok_or_else(|| Error::Config(format!("fold {fold} of {folds}")))?;
            if split == Split::Train {
                train
            } else {
                test
            }
        }
    };
    ids.iter().map(|&id| ds.case(id)).collect()
}

/// Windowed `[S, 1, H, W]` stack of a case's slices.
pub(crate) fn case_input(case: &Case, window: WindowSpec) -> Result<Tensor> {
    let parts: Vec<Tensor> = case
        .images
        .iter()
        .map(|img| {
            let s = img.shape();
            hu_window(img, window).reshape(&[1, 1, s[0], s[1]])
        })
        .collect::<Result<_>>()?;
    Tensor::concat(&parts.iter().collect::<Vec<_>>(), 0)
}

/// Per-pixel argmax over class logits, one mask per slice.
pub fn predict_case(net: &Network, case: &Case, window: WindowSpec) -> Result<Vec<LabelMask>> {
    let logits = net.frozen().forward(&case_input(case, window)?)?;
    let s = logits.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let d = logits.data();
    (0..n)
        .map(|b| {
            let labels = (0..h * w)
                .map(|p| {
                    let mut best = 0;
                    for k in 1..c {
                        if d[(b * c + k) * h * w + p] > d[(b * c + best) * h * w + p] {
                            best = k;
                        }
                    }
                    best as u8
                })
                .collect();
            LabelMask::new(h, w, c as u8, labels)
        })
        .collect()
}

/// Metrics for every foreground class of one case.
pub fn case_rows(
    case_id: &str,
    pred: &[LabelMask],
    gt: &[LabelMask],
    num_classes: usize,
    variant: VoeVariant,
) -> Result<Vec<CaseMetrics>> {
    if pred.len() != gt.len() || gt.is_empty() {
        return Err(Error::Shape(format!(
            "{} predicted vs {} ground-truth slices",
            pred.len(),
            gt.len()
        )));
    }
    let (h, w) = (gt[0].height(), gt[0].width());
    let volume = |masks: &[LabelMask], c: u8| {
        CaseVolume::new(
            case_id,
            h,
            w,
            masks.iter().map(|m| m.class_pixels(c)).collect(),
        )
    };
    (1..num_classes)
        .map(|c| case_metrics(&volume(pred, c as u8)?, &volume(gt, c as u8)?, c, variant))
        .collect()
}

/// Predicts every case and scores each foreground class. Cases are spread
/// over worker threads; row order follows `cases`.
pub fn evaluate(
    net: &Network,
    cases: &[&Case],
    window: WindowSpec,
    variant: VoeVariant,
) -> Result<Vec<CaseMetrics>> {
    if cases.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let classes = net.config().num_classes;
    let one = |case: &Case| -> Result<Vec<CaseMetrics>> {
        let pred = predict_case(net, case, window)?;
        case_rows(
            &format!("case_{}", case.id),
            &pred,
            &case.masks,
            classes,
            variant,
        )
    };
    let threads = super::worker_threads().min(cases.len());
    let per_case: Vec<Result<Vec<CaseMetrics>>> = if threads <= 1 {
        cases.iter().map(|c| one(c)).collect()
    } else {
        let chunk = cases.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = cases
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|c| one(c)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    let mut rows = Vec::new();
    for r in per_case {
        rows.extend(r?);
    }
    Ok(rows)
}
