//! Per-case overlap metrics and `a ± b` range summaries.
//!
//! All counts run over every voxel of a case (all slices together).

use std::fmt;

use crate::{Error, Result};

/// Binary masks of one class for one case, slice by slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseVolume {
    pub case_id: String,
    pub h: usize,
    pub w: usize,
    pub slices: Vec<Vec<bool>>,
}

impl CaseVolume {
    pub fn new(
        case_id: impl Into<String>,
        h: usize,
        w: usize,
        slices: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if let Some(bad) = slices.iter().find(|s| s.len() != h * w) {
            return Err(Error::Shape(format!(
                "slice of {} voxels in a {h}×{w} volume",
                bad.len()
            )));
        }
        Ok(CaseVolume {
            case_id: case_id.into(),
            h,
            w,
            slices,
        })
    }

    pub fn voxels(&self) -> usize {
        self.slices
            .iter()
            .map(|s| s.iter().filter(|&&v| v).count())
            .sum()
    }
}

/// `(|P|, |G|, |P ∩ G|)`
fn counts(p: &CaseVolume, g: &CaseVolume) -> Result<(usize, usize, usize)> {
    if (p.h, p.w, p.slices.len()) != (g.h, g.w, g.slices.len()) {
        return Err(Error::Shape(format!(
            "volumes differ: {}×{}×{} vs {}×{}×{}",
            p.slices.len(),
            p.h,
            p.w,
            g.slices.len(),
            g.h,
            g.w
        )));
    }
    let (mut np, mut ng, mut inter) = (0, 0, 0);
    for (ps, gs) in p.slices.iter().zip(&g.slices) {
        for (&a, &b) in ps.iter().zip(gs) {
            np += a as usize;
            ng += b as usize;
            inter += (a && b) as usize;
        }
    }
    Ok((np, ng, inter))
}

/// `2|P∩G| / (|P|+|G|)`; 1 when both are empty.
pub fn dice(p: &CaseVolume, g: &CaseVolume) -> Result<f64> {
    let (np, ng, inter) = counts(p, g)?;
    Ok(if np + ng == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (np + ng) as f64
    })
}

/// Denominator of the volume overlap error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoeVariant {
    /// `1 − |P∩G| / (|P|+|G|)`, which is 0.5 at perfect overlap.
    #[default]
    AsPrinted,
    /// `1 − |P∩G| / |P∪G|`
    Union,
}

impl fmt::Display for VoeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VoeVariant::AsPrinted => "as_printed",
            VoeVariant::Union => "union",
        })
    }
}

impl std::str::FromStr for VoeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(VoeVariant::AsPrinted),
            "union" => Ok(VoeVariant::Union),
            _ => Err(Error::Config(format!("unknown VOE variant {s:?}"))),
        }
    }
}

/// Volume overlap error; both-empty gives 0.5 (as printed) or 0 (union).
pub fn voe(p: &CaseVolume, g: &CaseVolume, variant: VoeVariant) -> Result<f64> {
    let (np, ng, inter) = counts(p, g)?;
    let inter = inter as f64;
    Ok(match variant {
        VoeVariant::AsPrinted if np + ng == 0 => 0.5,
        VoeVariant::AsPrinted => 1.0 - inter / (np + ng) as f64,
        VoeVariant::Union => {
            let union = (np + ng) as f64 - inter;
            if union == 0.0 {
                0.0
            } else {
                1.0 - inter / union
            }
        }
    })
}

/// `(|P| − |G|) / |G|`, signed.
pub fn rvd(p: &CaseVolume, g: &CaseVolume) -> Result<f64> {
    let (np, ng, _) = counts(p, g)?;
    if ng == 0 {
        return Err(Error::UndefinedMetric(format!(
            "RVD of case {} with empty ground truth",
            g.case_id
        )));
    }
    Ok((np as f64 - ng as f64) / ng as f64)
}

/// `a ± b` with `a = (max + min)/2` and `b = (max − min)/2`. The endpoints
/// are stored so that they are recovered exactly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
}

impl MetricRange {
    pub fn center(&self) -> f64 {
        (self.max + self.min) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.max - self.min) / 2.0
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn min(&self) -> f64 {
        self.min
    }
}

impl fmt::Display for MetricRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.p$}±{:.p$}", self.center(), self.half_width()),
            None => write!(f, "{}±{}", self.center(), self.half_width()),
        }
    }
}

pub fn aggregate_range(scores: &[f64]) -> Result<MetricRange> {
    if scores.is_empty() {
        return Err(Error::UndefinedMetric(
            "range of an empty score list".into(),
        ));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MetricRange { min, max })
}

/// Metrics of one class of one case.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub class: usize,
    pub dice: f64,
    pub voe: f64,
    pub voe_variant: String,
    /// `None` when the ground truth is empty.
    pub rvd: Option<f64>,
}

pub fn case_metrics(
    p: &CaseVolume,
    g: &CaseVolume,
    class: usize,
    variant: VoeVariant,
) -> Result<CaseMetrics> {
    let rvd = match rvd(p, g) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(CaseMetrics {
        case_id: p.case_id.clone(),
        class,
        dice: dice(p, g)?,
        voe: voe(p, g, variant)?,
        voe_variant: variant.to_string(),
        rvd,
    })
}

/// Ranges of dice, voe and (defined) rvd for one class.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassSummary {
    pub class: usize,
    pub dice: MetricRange,
    pub voe: MetricRange,
    pub rvd: Option<MetricRange>,
    pub mean_dice: f64,
}

pub fn summarize(rows: &[CaseMetrics]) -> Result<Vec<ClassSummary>> {
    let mut classes: Vec<usize> = rows.iter().map(|r| r.class).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let of = |f: &dyn Fn(&CaseMetrics) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter(|r| r.class == c).filter_map(f).collect()
            };
            let d = of(&|r| Some(r.dice));
            let rv = of(&|r| r.rvd);
            Ok(ClassSummary {
                class: c,
                dice: aggregate_range(&d)?,
                voe: aggregate_range(&of(&|r| Some(r.voe)))?,
                rvd: if rv.is_empty() {
                    None
                } else {
                    Some(aggregate_range(&rv)?)
                },
                mean_dice: d.iter().sum::<f64>() / d.len() as f64,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "case_id,class,dice,voe,voe_variant,rvd";

/// One row per case per class, then one `ALL(a±b)` row per class.
pub fn metrics_csv(rows: &[CaseMetrics]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.case_id,
            r.class,
            r.dice,
            r.voe,
            r.voe_variant,
            opt(r.rvd)
        ));
    }
    let variant = rows
        .first()
        .map_or(String::new(), |r| r.voe_variant.clone());
    for s in summarize(rows)? {
        out.push_str(&format!(
            "ALL(a±b),{},{},{},{},{}\n",
            s.class,
            s.dice,
            s.voe,
            variant,
            s.rvd.map_or("NA".to_string(), |r| r.to_string())
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ref_metrics;
    use rand::{Rng, SeedableRng};

    fn vol(bits: &[u8]) -> CaseVolume {
        CaseVolume::new(
            "c",
            1,
            bits.len(),
            vec![bits.iter().map(|&b| b == 1).collect()],
        )
        .unwrap()
    }

    #[test]
    fn dice_examples() {
        let p = vol(&[1, 1, 0, 0]);
        assert_eq!(dice(&p, &p).unwrap(), 1.0);
        assert_eq!(dice(&vol(&[1, 0]), &vol(&[0, 1])).unwrap(), 0.0);
        let p = vol(&[1, 1, 1, 1, 0, 0]);
        let g = vol(&[0, 0, 1, 1, 1, 1]);
        assert_eq!(dice(&p, &g).unwrap(), 0.5);
        assert_eq!(dice(&vol(&[0, 0]), &vol(&[0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn voe_examples() {
        let p = vol(&[1, 1, 0]);
        assert_eq!(voe(&p, &p, VoeVariant::AsPrinted).unwrap(), 0.5);
        assert_eq!(voe(&p, &p, VoeVariant::Union).unwrap(), 0.0);
        let p = vol(&[1, 1, 1, 1, 0, 0]);
        let g = vol(&[0, 0, 1, 1, 1, 1]);
        assert_eq!(voe(&p, &g, VoeVariant::AsPrinted).unwrap(), 0.75);
        assert!((voe(&p, &g, VoeVariant::Union).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let e = vol(&[0]);
        assert_eq!(voe(&e, &e, VoeVariant::AsPrinted).unwrap(), 0.5);
        assert_eq!(voe(&e, &e, VoeVariant::Union).unwrap(), 0.0);
    }

    #[test]
    fn rvd_examples() {
        let g = vol(&[1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(rvd(&g, &g).unwrap(), 0.0);
        assert_eq!(rvd(&vol(&[1, 1, 1, 0, 0, 0, 0, 0]), &g).unwrap(), -0.25);
        assert_eq!(rvd(&vol(&[1; 8]), &g).unwrap(), 1.0);
        assert!(matches!(
            rvd(&g, &vol(&[0; 8])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn range_examples() {
        let r = aggregate_range(&[0.5]).unwrap();
        assert_eq!((r.center(), r.half_width()), (0.5, 0.0));
        let r = aggregate_range(&[0.1, 0.3]).unwrap();
        assert!((r.center() - 0.2).abs() < 1e-15 && (r.half_width() - 0.1).abs() < 1e-15);
        assert_eq!(
            aggregate_range(&[0.3, 0.1, 0.2]).unwrap(),
            aggregate_range(&[0.2, 0.3, 0.1]).unwrap()
        );
        assert!(aggregate_range(&[]).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(dice(&vol(&[1, 0]), &vol(&[1])).is_err());
        assert!(CaseVolume::new("x", 2, 2, vec![vec![true; 3]]).is_err());
    }

    #[test]
    fn agrees_with_oracle_on_random_volumes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let density = rng.random_range(0.0..1.0);
            let mut bits = || {
                (0..n)
                    .map(|_| rng.random_bool(density))
                    .collect::<Vec<bool>>()
            };
            let (pb, gb) = (bits(), bits());
            let p = CaseVolume::new("r", 1, n, vec![pb.clone()]).unwrap();
            let g = CaseVolume::new("r", 1, n, vec![gb.clone()]).unwrap();
            let (d, vp, vu, r) = ref_metrics(&pb, &gb);
            assert_eq!(dice(&p, &g).unwrap(), d);
            assert_eq!(voe(&p, &g, VoeVariant::AsPrinted).unwrap(), vp);
            assert!((voe(&p, &g, VoeVariant::Union).unwrap() - vu).abs() <= 1e-12);
            assert_eq!(rvd(&p, &g).ok(), r);
        }
    }

    #[test]
    fn csv_layout_and_summary_consistency() {
        let g = vol(&[1, 1, 0, 0]);
        let rows = vec![
            case_metrics(&vol(&[1, 1, 0, 0]), &g, 1, VoeVariant::AsPrinted).unwrap(),
            case_metrics(&vol(&[1, 0, 0, 0]), &g, 1, VoeVariant::AsPrinted).unwrap(),
        ];
        let csv = metrics_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        let summary: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(summary[0], "ALL(a±b)");
        let want = aggregate_range(&[rows[0].dice, rows[1].dice]).unwrap();
        assert_eq!(summary[2], want.to_string());
    }
}
