//! Mini-batch training with exact manual backpropagation.
//!
//! Deterministic given the seed: fixed shuffle order, sequential batch
//! accumulation, no nondeterministic reductions.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::model::Model;
use crate::tsdata::{Scaler, TimeSeriesStore, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    /// Early-stop patience in epochs; applies only when validation windows
    /// are supplied.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Foundation pretraining defaults.
    pub fn pretrain() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::Mse,
            patience: 3,
            seed: 0,
        }
    }

    /// Per-proposal fine-tuning defaults.
    pub fn fine_tune() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            ..TrainConfig::pretrain()
        }
    }
}

/// Per-epoch losses and the early-stop outcome.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub stopped_early: bool,
    pub best_epoch: Option<usize>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Normalized series for every location referenced by a window set.
struct NormalizedCache {
    series: HashMap<u32, Vec<f64>>,
}

impl NormalizedCache {
    fn build(store: &TimeSeriesStore, scaler: &Scaler, windows: &[&WindowSet]) -> Result<Self> {
        let mut series = HashMap::new();
        for ws in windows {
            for w in &ws.entries {
                if !series.contains_key(&w.location_id) {
                    let row = store.row_index(w.location_id)?;
                    series.insert(w.location_id, scaler.normalize_series(store, row));
                }
            }
        }
        Ok(NormalizedCache { series })
    }

    fn window(&self, id: u32, start: usize, input_len: usize, horizon: usize) -> (&[f64], &[f64]) {
        let s = &self.series[&id];
        (
            &s[start..start + input_len],
            &s[start + input_len..start + input_len + horizon],
        )
    }
}

fn batch_loss_and_grad(
    model: &Model,
    cache: &NormalizedCache,
    windows: &WindowSet,
    batch: &[usize],
    loss: LossKind,
    grad: &mut [f64],
    hidden: &mut [f64],
    output: &mut [f64],
    grad_out: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let h = model.config.horizon;
    let denom = (batch.len() * h) as f64;
    let mut total = 0.0;
    for &idx in batch {
        let w = windows.entries[idx];
        let (input, target) = cache.window(w.location_id, w.start, windows.input_len, h);
        model.forward_training(input, hidden, output);
        for j in 0..h {
            let err = output[j] - target[j];
            match loss {
                LossKind::Mse => {
                    total += err * err;
                    grad_out[j] = 2.0 * err / denom;
                }
                LossKind::Mae => {
                    total += err.abs();
                    grad_out[j] = err.signum() / denom;
                }
            }
        }
        model.accumulate_grad(input, grad_out, hidden, grad);
    }
    total / denom
}

fn eval_loss(
    model: &Model,
    cache: &NormalizedCache,
    windows: &WindowSet,
    loss: LossKind,
    hidden: &mut [f64],
    output: &mut [f64],
) -> f64 {
    let h = model.config.horizon;
    let mut total = 0.0;
    for w in &windows.entries {
        let (input, target) = cache.window(w.location_id, w.start, windows.input_len, h);
        model.forward_training(input, hidden, output);
        for j in 0..h {
            let err = output[j] - target[j];
            total += match loss {
                LossKind::Mse => err * err,
                LossKind::Mae => err.abs(),
            };
        }
    }
    total / (windows.len() * h) as f64
}

/// Train `model` in place on normalized windows. With validation windows,
/// stops early after `patience` epochs without improvement and restores the
/// best parameters. Returns the loss history.
pub fn train(
    model: &mut Model,
    store: &TimeSeriesStore,
    scaler: &Scaler,
    windows: &WindowSet,
    val_windows: Option<&WindowSet>,
    tc: &TrainConfig,
) -> Result<TrainReport> {
    if windows.is_empty() {
        return Err(Error::Train("window set is empty".into()));
    }
    if windows.input_len != model.config.input_len || windows.horizon != model.config.horizon {
        return Err(Error::config(
            "window shape does not match model input_len/horizon",
        ));
    }
    if tc.batch_size == 0 || tc.learning_rate <= 0.0 {
        return Err(Error::config("batch_size and learning_rate must be positive"));
    }
    let mut sets = vec![windows];
    if let Some(v) = val_windows {
        sets.push(v);
    }
    let cache = NormalizedCache::build(store, scaler, &sets)?;

    let n_params = model.params.len();
    let mut grad = vec![0.0; n_params];
    let mut hidden = vec![0.0; model.config.hidden.max(1)];
    let mut output = vec![0.0; model.config.horizon];
    let mut grad_out = vec![0.0; model.config.horizon];
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut report = TrainReport::default();
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<Vec<f64>> = None;
    let mut bad_epochs = 0usize;

    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let loss = batch_loss_and_grad(
                model, &cache, windows, batch, tc.loss, &mut grad, &mut hidden, &mut output,
                &mut grad_out,
            );
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                    tc.learning_rate
                )));
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            match tc.optimizer {
                OptimizerKind::Sgd => {
                    for (p, &g) in model.params.iter_mut().zip(&grad) {
                        *p -= tc.learning_rate * g;
                    }
                }
                OptimizerKind::Adam => {
                    adam.t += 1;
                    let bc1 = 1.0 - ADAM_BETA1.powi(adam.t as i32);
                    let bc2 = 1.0 - ADAM_BETA2.powi(adam.t as i32);
                    for i in 0..n_params {
                        adam.m[i] = ADAM_BETA1 * adam.m[i] + (1.0 - ADAM_BETA1) * grad[i];
                        adam.v[i] = ADAM_BETA2 * adam.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                        let mhat = adam.m[i] / bc1;
                        let vhat = adam.v[i] / bc2;
                        model.params[i] -= tc.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        report.epoch_losses.push(epoch_loss / seen as f64);

        if let Some(val) = val_windows {
            if !val.is_empty() {
                let vl = eval_loss(model, &cache, val, tc.loss, &mut hidden, &mut output);
                report.val_losses.push(vl);
                if vl < best_val {
                    best_val = vl;
                    best_params = Some(model.params.clone());
                    report.best_epoch = Some(epoch);
                    bad_epochs = 0;
                } else {
                    bad_epochs += 1;
                    if bad_epochs >= tc.patience {
                        report.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    if let Some(best) = best_params {
        model.params = best;
    }
    Ok(report)
}

/// Clone the foundation model and continue training it on a sub-dataset.
/// The foundation itself is never modified.
pub fn fine_tune(
    foundation: &Model,
    store: &TimeSeriesStore,
    scaler: &Scaler,
    windows: &WindowSet,
    val_windows: Option<&WindowSet>,
    tc: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    if windows.is_empty() {
        return Err(Error::Train(
            "sub-dataset is empty after pruning; nothing to fine-tune on".into(),
        ));
    }
    let mut model = foundation.clone();
    if tc.epochs == 0 {
        return Ok((model, TrainReport::default()));
    }
    let report = train(&mut model, store, scaler, windows, val_windows, tc)?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::model::{init_model, ModelConfig, ModelKind};
    use crate::tsdata::{fit_scaler, make_windows, TimeSeriesStore};
    use rand::Rng;

    fn small_cfg(kind: ModelKind, seed: u64) -> ModelConfig {
        ModelConfig {
            kind,
            input_len: 12,
            horizon: 4,
            hidden: 8,
            period: 4,
            seed,
        }
    }

    fn toy_store(seed: u64) -> TimeSeriesStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..3u32)
            .map(|id| {
                let series = (0..200)
                    .map(|t| {
                        100.0
                            + 30.0 * (t as f64 * std::f64::consts::TAU / 24.0).sin()
                            + rng.gen_range(-5.0..5.0)
                    })
                    .collect();
                (id, series)
            })
            .collect();
        TimeSeriesStore::new(rows, 15, 24).unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        for kind in ModelKind::ALL {
            let store = toy_store(1);
            let scaler = fit_scaler(&store, &(0..150)).unwrap();
            let ws = make_windows(&store, &(0..150), &[0, 1, 2], 12, 4, 1).unwrap();
            let tc = TrainConfig {
                epochs: 3,
                batch_size: 32,
                ..TrainConfig::pretrain()
            };
            let mut a = init_model(&small_cfg(kind, 9)).unwrap();
            let mut b = init_model(&small_cfg(kind, 9)).unwrap();
            train(&mut a, &store, &scaler, &ws, None, &tc).unwrap();
            train(&mut b, &store, &scaler, &ws, None, &tc).unwrap();
            assert_eq!(a.params, b.params, "{kind}");
        }
    }

    #[test]
    fn linear_recovers_affine_data() {
        // targets generated by a known affine map of the inputs
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let series: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // build a store whose horizon values are an affine function of the
        // input window: y_t = 0.5 x_{t-1} - 0.25 x_{t-4} + 0.1
        let mut values = series.clone();
        for t in 8..n {
            values[t] = 0.5 * values[t - 1] - 0.25 * values[t - 4] + 0.1
                + 0.0 * series[t]; // fully realizable, no noise
        }
        let store = TimeSeriesStore::new(vec![(0, values)], 15, 24).unwrap();
        let scaler = fit_scaler(&store, &(0..n)).unwrap();
        let ws = make_windows(&store, &(0..n), &[0], 8, 1, 1).unwrap();
        let cfg = ModelConfig {
            kind: ModelKind::Linear,
            input_len: 8,
            horizon: 1,
            hidden: 0,
            period: 1,
            seed: 0,
        };
        let mut model = init_model(&cfg).unwrap();
        let tc = TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 0.01,
            ..TrainConfig::pretrain()
        };
        let report = train(&mut model, &store, &scaler, &ws, None, &tc).unwrap();
        let final_loss = *report.epoch_losses.last().unwrap();
        assert!(final_loss < 1e-4, "final train MSE {final_loss}");
        assert!(final_loss <= report.epoch_losses[0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // central differences, step 1e-5, ten random draws per model kind
        let store = toy_store(5);
        let scaler = fit_scaler(&store, &(0..150)).unwrap();
        for kind in ModelKind::ALL {
            for draw in 0..10 {
                let cfg = small_cfg(kind, 100 + draw);
                let model = init_model(&cfg).unwrap();
                let ws = make_windows(&store, &(0..60), &[draw as u32 % 3], 12, 4, 7).unwrap();
                let max_rel = max_grad_error(&model, &store, &scaler, &ws, LossKind::Mse);
                assert!(max_rel < 1e-4, "{kind} draw {draw}: max rel err {max_rel}");
            }
        }
    }

    /// Analytic-vs-numeric gradient discrepancy for a whole batch.
    pub(crate) fn max_grad_error(
        model: &Model,
        store: &TimeSeriesStore,
        scaler: &Scaler,
        ws: &WindowSet,
        loss: LossKind,
    ) -> f64 {
        let cache = NormalizedCache::build(store, scaler, &[ws]).unwrap();
        let batch: Vec<usize> = (0..ws.len()).collect();
        let mut grad = vec![0.0; model.params.len()];
        let mut hidden = vec![0.0; model.config.hidden.max(1)];
        let mut output = vec![0.0; model.config.horizon];
        let mut grad_out = vec![0.0; model.config.horizon];
        batch_loss_and_grad(
            model, &cache, ws, &batch, loss, &mut grad, &mut hidden, &mut output, &mut grad_out,
        );
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let mut perturbed = model.clone();
        for i in 0..model.params.len() {
            let orig = model.params[i];
            perturbed.params[i] = orig + h;
            let up = eval_loss(&perturbed, &cache, ws, loss, &mut hidden, &mut output);
            perturbed.params[i] = orig - h;
            let down = eval_loss(&perturbed, &cache, ws, loss, &mut hidden, &mut output);
            perturbed.params[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        max_rel
    }

    #[test]
    fn fine_tune_zero_epochs_is_identity_and_foundation_untouched() {
        let store = toy_store(7);
        let scaler = fit_scaler(&store, &(0..150)).unwrap();
        let ws = make_windows(&store, &(0..150), &[0, 1], 12, 4, 2).unwrap();
        let foundation = init_model(&small_cfg(ModelKind::Linear, 11)).unwrap();
        let before = foundation.params.clone();

        let tc = TrainConfig {
            epochs: 0,
            ..TrainConfig::fine_tune()
        };
        let (clone, _) = fine_tune(&foundation, &store, &scaler, &ws, None, &tc).unwrap();
        assert_eq!(clone.params, foundation.params);

        let tc = TrainConfig {
            epochs: 2,
            ..TrainConfig::fine_tune()
        };
        let (a, _) = fine_tune(&foundation, &store, &scaler, &ws, None, &tc).unwrap();
        let (b, _) = fine_tune(&foundation, &store, &scaler, &ws, None, &tc).unwrap();
        assert_eq!(foundation.params, before);
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, foundation.params);
    }

    #[test]
    fn empty_window_set_is_an_error() {
        let store = toy_store(1);
        let scaler = fit_scaler(&store, &(0..150)).unwrap();
        let empty = make_windows(&store, &(0..10), &[0], 12, 4, 1).unwrap();
        let mut model = init_model(&small_cfg(ModelKind::Linear, 0)).unwrap();
        assert!(train(&mut model, &store, &scaler, &empty, None, &TrainConfig::pretrain()).is_err());
        assert!(
            fine_tune(&model, &store, &scaler, &empty, None, &TrainConfig::fine_tune()).is_err()
        );
    }

    #[test]
    fn early_stopping_restores_best_params() {
        let store = toy_store(2);
        let scaler = fit_scaler(&store, &(0..120)).unwrap();
        let train_ws = make_windows(&store, &(0..120), &[0, 1, 2], 12, 4, 1).unwrap();
        let val_ws = make_windows(&store, &(120..170), &[0], 12, 4, 1).unwrap();
        let mut model = init_model(&small_cfg(ModelKind::Mlp, 3)).unwrap();
        let tc = TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 0.02,
            patience: 2,
            ..TrainConfig::pretrain()
        };
        let report = train(&mut model, &store, &scaler, &train_ws, Some(&val_ws), &tc).unwrap();
        if report.stopped_early {
            assert!(report.val_losses.len() < 40);
        }
        let best = report.best_epoch.unwrap();
        let best_loss = report.val_losses[best];
        assert!(report.val_losses.iter().all(|&v| v >= best_loss));
    }
}
