use std::collections::BTreeMap;
use std::path::PathBuf;

use super::optim::AdamConfig;
use crate::data::WindowSpec;
use crate::distill::{ContrastForm, DistillWeights, KlDirection, LossConfig, SegLossKind};
use crate::kvconf::KvConfig;
use crate::metrics::VoeVariant;
use crate::nets::{NetworkConfig, TapPolicy};
use crate::{Error, Result};

/// Everything a training or distillation run depends on.
///
/// `teacher.num_classes` and `student.num_classes` are overwritten from
/// the dataset when a run starts; network seeds follow `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub data: Option<PathBuf>,
    pub teacher: NetworkConfig,
    pub student: NetworkConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub tap_policy: TapPolicy,
    pub seed: u64,
    pub folds: usize,
    pub fold: usize,
    pub window: WindowSpec,
    pub augment: bool,
    pub voe_variant: VoeVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data: None,
            teacher: NetworkConfig::teacher(2, 0),
            student: NetworkConfig::student(2, 0),
            epochs: 20,
            batch_size: 4,
            lr_max: 1e-3,
            lr_min: 1e-6,
            adam: AdamConfig::default(),
            loss: LossConfig::new(2),
            tap_policy: TapPolicy::FirstAndLast,
            seed: 0,
            folds: 5,
            fold: 0,
            window: WindowSpec::LIVER,
            augment: true,
            voe_variant: VoeVariant::AsPrinted,
        }
    }
}

fn net_entries(prefix: &str, n: &NetworkConfig) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}.depth"), n.depth.to_string()),
        (
            format!("{prefix}.base_channels"),
            n.base_channels.to_string(),
        ),
        (
            format!("{prefix}.channel_growth"),
            n.channel_growth.to_string(),
        ),
        (format!("{prefix}.use_skips"), n.use_skips.to_string()),
    ]
}

fn take_net(kv: &mut KvConfig, prefix: &str, n: &mut NetworkConfig) -> Result<()> {
    if let Some(preset) = kv.take::<String>(&format!("{prefix}.preset"))? {
        *n = match preset.as_str() {
            "teacher" => NetworkConfig::teacher(n.num_classes, n.seed),
            "student" => NetworkConfig::student(n.num_classes, n.seed),
            other => return Err(Error::Config(format!("unknown network preset {other:?}"))),
        };
    }
    kv.take_into(&format!("{prefix}.depth"), &mut n.depth)?;
    kv.take_into(&format!("{prefix}.base_channels"), &mut n.base_channels)?;
    kv.take_into(&format!("{prefix}.channel_growth"), &mut n.channel_growth)?;
    kv.take_into(&format!("{prefix}.use_skips"), &mut n.use_skips)?;
    Ok(())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if !(self.lr_min <= self.lr_max && self.lr_min >= 0.0) {
            return Err(Error::Config(format!(
                "need 0 ≤ lr_min ≤ lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps be > 0".into(),
            ));
        }
        if self.folds < 2 || self.fold >= self.folds {
            return Err(Error::Config(format!(
                "fold {} of {} is invalid",
                self.fold, self.folds
            )));
        }
        WindowSpec::new(self.window.lo, self.window.hi)?;
        self.teacher.validate()?;
        self.student.validate()?;
        self.loss.validate()
    }

    /// Flat `key = value` view, also used as the report's config snapshot.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| e.push((k.to_string(), v));
        if let Some(d) = &self.data {
            push("data", d.display().to_string());
        }
        push("epochs", self.epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push("lr_max", self.lr_max.to_string());
        push("lr_min", self.lr_min.to_string());
        push("adam_beta1", self.adam.beta1.to_string());
        push("adam_beta2", self.adam.beta2.to_string());
        push("adam_eps", self.adam.eps.to_string());
        push("alpha", self.loss.weights.alpha.to_string());
        push("beta1", self.loss.weights.beta1.to_string());
        push("beta2", self.loss.weights.beta2.to_string());
        push("seg_loss", self.loss.seg.to_string());
        push("kl_direction", self.loss.direction.to_string());
        push("temperature", self.loss.temperature.to_string());
        push("importance_exponent", self.loss.exponent.to_string());
        push("rad_norm", self.loss.norm_p.to_string());
        push("rad_form", self.loss.form.to_string());
        push("tap_policy", self.tap_policy.to_string());
        push("seed", self.seed.to_string());
        push("folds", self.folds.to_string());
        push("fold", self.fold.to_string());
        push("window_lo", self.window.lo.to_string());
        push("window_hi", self.window.hi.to_string());
        push("augment", self.augment.to_string());
        push("voe_variant", self.voe_variant.to_string());
        e.extend(net_entries("teacher", &self.teacher));
        e.extend(net_entries("student", &self.student));
        e
    }

    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.to_entries().into_iter().collect()
    }

    pub fn render(&self) -> String {
        crate::kvconf::render(&self.to_entries())
    }

    /// Parses a config file over the defaults; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvConfig::parse(text)?;
        let mut c = TrainConfig::default();
        if let Some(d) = kv.take::<String>("data")? {
            c.data = Some(PathBuf::from(d));
        }
        kv.take_into("epochs", &mut c.epochs)?;
        kv.take_into("batch_size", &mut c.batch_size)?;
        kv.take_into("lr_max", &mut c.lr_max)?;
        kv.take_into("lr_min", &mut c.lr_min)?;
        kv.take_into("adam_beta1", &mut c.adam.beta1)?;
        kv.take_into("adam_beta2", &mut c.adam.beta2)?;
        kv.take_into("adam_eps", &mut c.adam.eps)?;
        kv.take_into("alpha", &mut c.loss.weights.alpha)?;
        kv.take_into("beta1", &mut c.loss.weights.beta1)?;
        kv.take_into("beta2", &mut c.loss.weights.beta2)?;
        kv.take_into::<SegLossKind>("seg_loss", &mut c.loss.seg)?;
        kv.take_into::<KlDirection>("kl_direction", &mut c.loss.direction)?;
        kv.take_into("temperature", &mut c.loss.temperature)?;
        kv.take_into("importance_exponent", &mut c.loss.exponent)?;
        kv.take_into("rad_norm", &mut c.loss.norm_p)?;
        kv.take_into::<ContrastForm>("rad_form", &mut c.loss.form)?;
        kv.take_into("tap_policy", &mut c.tap_policy)?;
        kv.take_into("seed", &mut c.seed)?;
        kv.take_into("folds", &mut c.folds)?;
        kv.take_into("fold", &mut c.fold)?;
        kv.take_into("window_lo", &mut c.window.lo)?;
        kv.take_into("window_hi", &mut c.window.hi)?;
        kv.take_into("augment", &mut c.augment)?;
        kv.take_into("voe_variant", &mut c.voe_variant)?;
        take_net(&mut kv, "teacher", &mut c.teacher)?;
        take_net(&mut kv, "student", &mut c.student)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn with_weights(mut self, w: DistillWeights) -> Self {
        self.loss.weights = w;
        self
    }
}
