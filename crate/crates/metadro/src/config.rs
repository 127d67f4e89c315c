//! Flat TOML run configuration.
//!
//! One file carries everything a run needs — task shape, model, objective,
//! and synthetic-generator settings — so a single artifact reproduces a run.
//! Unknown keys are rejected rather than silently ignored.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dro::{CountMode, DroConfig, DroMode};
use crate::episodes::TaskSpec;
use crate::error::{Error, Result};
use crate::models::MamlOrder;
use crate::synth::SynthSpec;
use crate::trainer::{ModelKind, TrainConfig};

/// The on-disk run configuration. Every field has a default, so a minimal
/// file (even an empty one) is valid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    // Task shape.
    pub n_ways: usize,
    pub k_shots: usize,
    pub q_queries: usize,

    // Model and optimization.
    /// "protonet" or "maml".
    pub model: String,
    pub meta_batch_size: usize,
    pub outer_lr: f64,
    pub meta_iterations: u64,
    pub eval_interval: u64,
    pub eval_tasks: usize,
    pub seed: u64,
    /// Encoder hidden widths; empty = single linear layer.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// "first" or "second".
    pub maml_order: String,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub holdout_classes: usize,

    // Objective.
    /// "erm", "dro", or "adjusted".
    pub mode: String,
    pub l2_coeff: f64,
    pub adjust_scale: f64,
    /// "cumulative" or "batch".
    pub count_mode: String,

    // Synthetic generator.
    pub synth_dim: usize,
    pub synth_classes: usize,
    pub synth_groups: usize,
    pub synth_records_per_class: usize,
    pub synth_mean_scale: f64,
    pub synth_noise_sigma: f64,
    pub synth_shift_delta: f64,
    pub synth_minority_frac: f64,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            n_ways: 10,
            k_shots: 5,
            q_queries: 1,
            model: "protonet".into(),
            meta_batch_size: 16,
            outer_lr: 0.01,
            meta_iterations: 500,
            eval_interval: 100,
            eval_tasks: 64,
            seed: 0,
            hidden: vec![64],
            embed_dim: 32,
            maml_order: "second".into(),
            inner_lr: 0.01,
            inner_steps: 1,
            holdout_classes: 0,
            mode: "erm".into(),
            l2_coeff: 0.0,
            adjust_scale: 1.0,
            count_mode: "cumulative".into(),
            synth_dim: 16,
            synth_classes: 20,
            synth_groups: 2,
            synth_records_per_class: 100,
            synth_mean_scale: 5.0,
            synth_noise_sigma: 1.0,
            synth_shift_delta: 0.0,
            synth_minority_frac: 0.1,
        }
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<RunConfigFile> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<RunConfigFile> {
        let cfg: RunConfigFile =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Validate everything before any work starts; errors name the field.
    pub fn validate(&self) -> Result<()> {
        self.to_train_config()?.validate()?;
        self.to_synth_spec().validate()?;
        Ok(())
    }

    fn count_mode(&self) -> Result<CountMode> {
        match self.count_mode.as_str() {
            "cumulative" => Ok(CountMode::Cumulative),
            "batch" => Ok(CountMode::Batch),
            other => Err(Error::Validation(format!(
                "count_mode: expected 'cumulative' or 'batch', got '{}'",
                other
            ))),
        }
    }

    pub fn to_dro_config(&self) -> Result<DroConfig> {
        Ok(DroConfig {
            mode: DroMode::from_str(&self.mode)
                .map_err(|e| Error::Validation(format!("mode: {}", e)))?,
            l2_coeff: self.l2_coeff,
            adjust_scale: self.adjust_scale,
            count_mode: self.count_mode()?,
        })
    }

    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            task: TaskSpec::new(self.n_ways, self.k_shots, self.q_queries)?,
            model: ModelKind::from_str(&self.model)
                .map_err(|e| Error::Validation(format!("model: {}", e)))?,
            meta_batch_size: self.meta_batch_size,
            outer_lr: self.outer_lr,
            meta_iterations: self.meta_iterations,
            eval_interval: self.eval_interval,
            eval_tasks: self.eval_tasks,
            seed: self.seed,
            dro: self.to_dro_config()?,
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim,
            maml_order: MamlOrder::from_str(&self.maml_order)
                .map_err(|e| Error::Validation(format!("maml_order: {}", e)))?,
            inner_lr: self.inner_lr,
            inner_steps: self.inner_steps,
            holdout_classes: self.holdout_classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_synth_spec(&self) -> SynthSpec {
        SynthSpec {
            dim: self.synth_dim,
            classes: self.synth_classes,
            groups_per_class: self.synth_groups,
            records_per_class: self.synth_records_per_class,
            mean_scale: self.synth_mean_scale,
            noise_sigma: self.synth_noise_sigma,
            shift_delta: self.synth_shift_delta,
            minority_frac: self.synth_minority_frac,
            seed: self.seed,
        }
    }
}
