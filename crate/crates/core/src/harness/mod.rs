//! Teacher pretraining, student distillation, evaluation and reporting.

mod config;
mod eval;
mod optim;
mod report;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{metrics_csv, CaseMetrics, ClassSummary};
use crate::nets::save_model;
use crate::{Error, Result};

pub use config::TrainConfig;
pub use eval::{case_rows, evaluate, predict_case, split_cases, Split};
pub use optim::{adam_step, cosine_lr, AdamConfig, AdamState};
pub use report::{report, ReportRow, ReportTable};
pub use train::{
    distill_student, param_checksum, run_label, train_student, train_teacher, RunOutput,
    TeacherCache,
};

/// Loss means and validation score of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub seg: f64,
    pub pm: f64,
    pub im: f64,
    pub ra: f64,
    pub total: f64,
    /// Mean over foreground classes of the per-case mean Dice.
    pub val_dice: f64,
    /// Per foreground class, mean Dice over held-out cases.
    pub val_dice_per_class: Vec<f64>,
}

/// Everything a run records; serialized as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `teacher` or `student`.
    pub kind: String,
    /// `teacher`, `plain`, or the active terms such as `+PMD+IMD+RAD`.
    pub label: String,
    pub config: BTreeMap<String, String>,
    pub tap_pairs: Vec<(String, String)>,
    pub params: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Last-epoch model on the held-out cases.
    pub final_metrics: Vec<CaseMetrics>,
    pub final_summary: Vec<ClassSummary>,
    pub teacher_checksum_before: Option<String>,
    pub teacher_checksum_after: Option<String>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Mean Dice of the last epoch over foreground classes.
    pub fn final_dice(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.val_dice)
    }
}

/// Worker thread cap: `EMKD_THREADS` if set, else available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("EMKD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Writes `model_last.emkm`, `model_best.emkm`, `report.json` and
/// `metrics.csv` into `dir`.
pub fn save_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_model(&out.last, &dir.join("model_last.emkm"))?;
    save_model(&out.best, &dir.join("model_best.emkm"))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.json", out.report.to_json())?;
    write("metrics.csv", metrics_csv(&out.report.final_metrics)?)
}
