use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use super::RunReport;
use crate::metrics::{ClassSummary, MetricRange};
use crate::{Error, Result};

/// One run in the comparison table. Metrics are those of the tumor class,
/// the last foreground class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dir: PathBuf,
    pub label: String,
    /// Hash of the config snapshot; equal fingerprints mean equal setups.
    pub fingerprint: String,
    pub dice: MetricRange,
    pub voe: MetricRange,
    pub rvd: Option<MetricRange>,
    pub mean_dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    /// Directories whose `report.json` was missing.
    pub skipped: Vec<PathBuf>,
    pub text: String,
    pub csv: String,
}

fn fingerprint(r: &RunReport) -> String {
    let mut h = DefaultHasher::new();
    r.config.hash(&mut h);
    format!("{:016x}", h.finish())
}

fn row(dir: &Path, r: &RunReport) -> Result<ReportRow> {
    let s: &ClassSummary = r
        .final_summary
        .last()
        .ok_or_else(|| Error::Data(format!("{}: report has no class summary", dir.display())))?;
    Ok(ReportRow {
        dir: dir.to_path_buf(),
        label: r.label.clone(),
        fingerprint: fingerprint(r),
        dice: s.dice,
        voe: s.voe,
        rvd: s.rvd,
        mean_dice: s.mean_dice,
    })
}

/// Builds the comparison table from run directories, best Dice first.
/// Directories without `report.json` are skipped with a warning.
pub fn report(dirs: &[PathBuf]) -> Result<ReportTable> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        let path = dir.join("report.json");
        if !path.is_file() {
            log::warn!("skipping {}: no report.json", dir.display());
            skipped.push(dir.clone());
            continue;
        }
        rows.push(row(dir, &RunReport::load(&path)?)?);
    }
    if rows.is_empty() {
        let listed: Vec<String> = skipped.iter().map(|d| d.display().to_string()).collect();
        return Err(Error::Data(format!(
            "no run reports found in: {}",
            listed.join(", ")
        )));
    }
    rows.sort_by(|a, b| b.dice.center().total_cmp(&a.dice.center()));

    let rvd = |r: &ReportRow| r.rvd.map_or("NA".to_string(), |v| format!("{v:.4}"));
    let mut csv = String::from("label,fingerprint,dice,voe,rvd,mean_dice,dir\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{:.4},{:.4},{},{:.4},{}",
            r.label,
            r.fingerprint,
            r.dice,
            r.voe,
            rvd(r),
            r.mean_dice,
            r.dir.display()
        );
    }
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut text = format!(
        "{:<width$}  {:<16}  {:<15}  {:<15}  {:<15}\n",
        "label", "fingerprint", "dice", "voe", "rvd"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<width$}  {:<16}  {:<15}  {:<15}  {:<15}",
            r.label,
            r.fingerprint,
            format!("{:.4}", r.dice),
            format!("{:.4}", r.voe),
            rvd(r)
        );
    }
    for d in &skipped {
        let _ = writeln!(text, "skipped (no report.json): {}", d.display());
    }
    Ok(ReportTable {
        rows,
        skipped,
        text,
        csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn fake(label: &str, dice: f64) -> RunReport {
        RunReport {
            kind: "student".into(),
            label: label.into(),
            config: BTreeMap::from([("label".to_string(), label.to_string())]),
            tap_pairs: Vec::new(),
            params: 1,
            epochs: Vec::new(),
            best_epoch: 0,
            final_metrics: Vec::new(),
            final_summary: vec![ClassSummary {
                class: 1,
                dice: MetricRange {
                    min: dice - 0.01,
                    max: dice + 0.01,
                },
                voe: MetricRange {
                    min: 0.49,
                    max: 0.51,
                },
                rvd: None,
                mean_dice: dice,
            }],
            teacher_checksum_before: None,
            teacher_checksum_after: None,
            wall_clock_secs: 0.0,
        }
    }

    fn write(dir: &Path, r: &RunReport) {
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(dir.join("report.json"), r.to_json()).unwrap();
    }

    #[test]
    fn ablation_grid_sorted_by_dice() {
        let tmp = tempfile::tempdir().unwrap();
        let labels = [
            "plain",
            "+PMD",
            "+IMD",
            "+RAD",
            "+PMD+IMD",
            "+PMD+RAD",
            "+IMD+RAD",
            "+PMD+IMD+RAD",
        ];
        let mut dirs = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let d = tmp.path().join(format!("run{i}"));
            write(&d, &fake(l, 0.5 + 0.037 * ((i * 5) % 8) as f64));
            dirs.push(d);
        }
        dirs.push(tmp.path().join("missing"));
        let t = report(&dirs).unwrap();
        assert_eq!(t.rows.len(), 8);
        assert_eq!(t.skipped.len(), 1);
        assert!(t
            .rows
            .windows(2)
            .all(|w| w[0].dice.center() >= w[1].dice.center()));
        let mut got: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        got.sort_unstable();
        let mut want = labels.to_vec();
        want.sort_unstable();
        assert_eq!(got, want);
        assert_eq!(t.csv.lines().count(), 9);
        assert!(t.text.contains("skipped"));
    }

    #[test]
    fn single_run_and_no_runs() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path().join("a");
        write(&d, &fake("plain", 0.7));
        assert_eq!(report(std::slice::from_ref(&d)).unwrap().rows.len(), 1);
        assert!(report(&[tmp.path().join("b")]).is_err());
    }
}
