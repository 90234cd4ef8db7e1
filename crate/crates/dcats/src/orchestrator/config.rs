//! Run settings parsed from a simple `key = value` file.
//!
//! Recognized keys (defaults in parentheses):
//!
//! | key                  | meaning                                              |
//! |----------------------|------------------------------------------------------|
//! | `model`              | `linear` \| `mlp` \| `sparsetsf` (`linear`)          |
//! | `input_len`          | input window length in steps (96)                    |
//! | `horizon`            | forecast length in steps (12)                        |
//! | `hidden`             | MLP hidden width (32)                                |
//! | `period`             | SparseTSF period in steps (12)                       |
//! | `train_stride`       | stride between training windows (4)                  |
//! | `eval_stride`        | stride between validation/test windows (2)           |
//! | `n_proposals`        | proposals requested per round (5)                    |
//! | `max_rounds`         | agent round cap (5)                                  |
//! | `k`                  | neighbors per retrieval criterion (10)               |
//! | `prune_fraction`     | fraction of most anomalous days dropped (0.10)       |
//! | `mp_window`          | matrix-profile subsequence length (24)               |
//! | `pattern_window`     | pattern-similarity window; 0 = one day (0)           |
//! | `pattern_suffix_cap` | max trailing train steps for pattern joins (10000)   |
//! | `pretrain_epochs`    | foundation epochs (30)                               |
//! | `pretrain_lr`        | foundation learning rate (0.001)                     |
//! | `finetune_epochs`    | fine-tune epochs (10)                                |
//! | `finetune_lr`        | fine-tune learning rate (0.0001)                     |
//! | `batch_size`         | mini-batch size (256)                                |
//! | `patience`           | early-stop patience in epochs (3)                    |
//! | `seed`               | master seed (0)                                      |
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys are
//! configuration errors so typos fail fast.

use std::path::Path;

use crate::error::{Error, Result};
use crate::forecast::{ModelConfig, ModelKind, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub model: ModelKind,
    pub input_len: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub period: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub n_proposals: usize,
    pub max_rounds: usize,
    pub k: usize,
    pub prune_fraction: f64,
    pub mp_window: usize,
    /// 0 means "one day" (`steps_per_day`).
    pub pattern_window: usize,
    pub pattern_suffix_cap: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            model: ModelKind::Linear,
            input_len: 96,
            horizon: 12,
            hidden: 32,
            period: 12,
            train_stride: 4,
            eval_stride: 2,
            n_proposals: 5,
            max_rounds: 5,
            k: 10,
            prune_fraction: 0.10,
            mp_window: 24,
            pattern_window: 0,
            pattern_suffix_cap: 10_000,
            pretrain_epochs: 30,
            pretrain_lr: 1e-3,
            finetune_epochs: 10,
            finetune_lr: 1e-4,
            batch_size: 256,
            patience: 3,
            seed: 0,
        }
    }
}

impl RunSettings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = RunSettings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            s.set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", lineno + 1)))?;
        }
        s.validate()?;
        Ok(s)
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "model" => self.model = value.parse()?,
            "input_len" => self.input_len = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "period" => self.period = num(key, value)?,
            "train_stride" => self.train_stride = num(key, value)?,
            "eval_stride" => self.eval_stride = num(key, value)?,
            "n_proposals" => self.n_proposals = num(key, value)?,
            "max_rounds" => self.max_rounds = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "prune_fraction" => self.prune_fraction = num(key, value)?,
            "mp_window" => self.mp_window = num(key, value)?,
            "pattern_window" => self.pattern_window = num(key, value)?,
            "pattern_suffix_cap" => self.pattern_suffix_cap = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "pretrain_lr" => self.pretrain_lr = num(key, value)?,
            "finetune_epochs" => self.finetune_epochs = num(key, value)?,
            "finetune_lr" => self.finetune_lr = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.horizon == 0 {
            return Err(Error::config("input_len and horizon must be positive"));
        }
        if self.train_stride == 0 || self.eval_stride == 0 {
            return Err(Error::config("strides must be positive"));
        }
        if self.n_proposals == 0 || self.max_rounds == 0 {
            return Err(Error::config("n_proposals and max_rounds must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::config("prune_fraction must be in [0, 1)"));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            input_len: self.input_len,
            horizon: self.horizon,
            hidden: self.hidden,
            period: self.period,
            seed: self.seed,
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.pretrain_epochs,
            learning_rate: self.pretrain_lr,
            batch_size: self.batch_size,
            patience: self.patience,
            seed: self.seed,
            ..TrainConfig::pretrain()
        }
    }

    pub fn finetune_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.finetune_epochs,
            learning_rate: self.finetune_lr,
            batch_size: self.batch_size,
            patience: self.patience,
            seed,
            ..TrainConfig::fine_tune()
        }
    }
}
