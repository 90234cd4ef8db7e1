//! Forecast evaluation on the original (denormalized) scale.

use crate::error::Result;
use crate::forecast::model::Model;
use crate::tsdata::{Scaler, TimeSeriesStore, WindowSet};

/// Ground-truth values with absolute value at or below this threshold are
/// excluded from MAPE to avoid division blow-ups near zero.
pub const MAPE_MIN_ABS: f64 = 1.0;

/// Aggregate error metrics over a set of evaluation windows.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error, already scaled to percent.
    pub mape_percent: f64,
    pub per_step: Vec<StepMetrics>,
    pub n_windows: usize,
    /// Points dropped from MAPE because |y| <= `MAPE_MIN_ABS`.
    pub mape_excluded: usize,
}

/// Errors restricted to one forecast step ahead.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Default, Clone, Copy)]
struct Accum {
    abs: f64,
    sq: f64,
    n: usize,
}

impl Accum {
    fn push(&mut self, err: f64) {
        self.abs += err.abs();
        self.sq += err * err;
        self.n += 1;
    }
}

/// Compute forecast errors against denormalized predictions: inputs are
/// normalized with the location's train-range statistics, outputs mapped
/// back through the same scaler before comparing to the raw targets.
pub fn evaluate(
    model: &Model,
    store: &TimeSeriesStore,
    scaler: &Scaler,
    windows: &WindowSet,
) -> Result<EvalMetrics> {
    let h = model.config.horizon;
    let mut overall = Accum::default();
    let mut steps = vec![Accum::default(); h];
    let mut mape_sum = 0.0;
    let mut mape_n = 0usize;
    let mut mape_excluded = 0usize;

    let mut input = vec![0.0; windows.input_len];
    let mut pred = vec![0.0; h];
    for w in &windows.entries {
        let row = store.row_index(w.location_id)?;
        let series = store.row(row);
        let (mean, std) = (scaler.mean(row), scaler.std(row));
        for (i, &v) in series[w.start..w.start + windows.input_len].iter().enumerate() {
            input[i] = (v - mean) / std;
        }
        model.forward(&input, &mut pred);
        let target = &series[w.start + windows.input_len..w.start + windows.input_len + h];
        for j in 0..h {
            let yhat = pred[j] * std + mean;
            let y = target[j];
            let err = yhat - y;
            overall.push(err);
            steps[j].push(err);
            if y.abs() > MAPE_MIN_ABS {
                mape_sum += (err / y).abs();
                mape_n += 1;
            } else {
                mape_excluded += 1;
            }
        }
    }

    let finish = |a: &Accum| -> (f64, f64) {
        if a.n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (a.abs / a.n as f64, (a.sq / a.n as f64).sqrt())
        }
    };
    let (mae, rmse) = finish(&overall);
    Ok(EvalMetrics {
        mae,
        rmse,
        mape_percent: if mape_n == 0 {
            f64::NAN
        } else {
            100.0 * mape_sum / mape_n as f64
        },
        per_step: steps
            .iter()
            .enumerate()
            .map(|(step, a)| {
                let (mae, rmse) = finish(a);
                StepMetrics { step, mae, rmse }
            })
            .collect(),
        n_windows: windows.len(),
        mape_excluded,
    })
}
