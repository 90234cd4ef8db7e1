//! Time series dataset: load, split, window, normalize, synthesize.
//!
//! The store is an immutable locations-by-steps matrix of traffic volumes.
//! Everything in this module is a pure function of its inputs, so a loaded
//! store can be shared freely across workers.

mod io;
mod synthetic;

pub use io::{load_store, read_binary, write_binary, write_csv};
pub use synthetic::{generate_synthetic, load_cluster_labels, SyntheticDataset, SyntheticSpec};

use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Immutable matrix of univariate series, one row per location.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesStore {
    values: Vec<f64>, // row-major, n_locations x n_steps
    location_ids: Vec<u32>,
    n_steps: usize,
    index: HashMap<u32, usize>,
    pub interval_minutes: u32,
    pub steps_per_day: usize,
}

impl TimeSeriesStore {
    /// Build a store from per-location rows. Rows must be equal-length,
    /// NaN-free, with unique ids; row order is preserved.
    pub fn new(
        rows: Vec<(u32, Vec<f64>)>,
        interval_minutes: u32,
        steps_per_day: usize,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::data("dataset has no series"));
        }
        let n_steps = rows[0].1.len();
        if n_steps == 0 {
            return Err(Error::data("dataset has zero time steps"));
        }
        let mut values = Vec::with_capacity(rows.len() * n_steps);
        let mut location_ids = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        for (row_no, (id, series)) in rows.into_iter().enumerate() {
            if series.len() != n_steps {
                return Err(Error::data(format!(
                    "ragged row {row_no} (location_id {id}): expected {n_steps} steps, got {}",
                    series.len()
                )));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "row {row_no} (location_id {id}) contains non-finite values after imputation"
                )));
            }
            if index.insert(id, row_no).is_some() {
                return Err(Error::data(format!(
                    "duplicate location_id {id} at row {row_no}"
                )));
            }
            location_ids.push(id);
            values.extend_from_slice(&series);
        }
        Ok(TimeSeriesStore {
            values,
            location_ids,
            n_steps,
            index,
            interval_minutes,
            steps_per_day,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.location_ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn location_ids(&self) -> &[u32] {
        &self.location_ids
    }

    pub fn contains(&self, id: u32) -> bool {
        self.index.contains_key(&id)
    }

    pub fn row_index(&self, id: u32) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownLocation(id))
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_steps..(row + 1) * self.n_steps]
    }

    /// The full series for a location id.
    pub fn series(&self, id: u32) -> Result<&[f64]> {
        Ok(self.row(self.row_index(id)?))
    }

    /// Mutable access to a location's series, e.g. to inject anomalies in
    /// demos and tests. Values must stay finite.
    pub fn series_mut(&mut self, id: u32) -> Result<&mut [f64]> {
        let row = self.row_index(id)?;
        let n = self.n_steps;
        Ok(&mut self.values[row * n..(row + 1) * n])
    }

    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }
}

/// Fill NaN gaps by last observation carried forward; a leading gap takes the
/// first valid value. Fails only when the whole series is missing.
pub fn impute_locf(series: &mut [f64]) -> Result<()> {
    let first_valid = series
        .iter()
        .position(|v| v.is_finite())
        .ok_or_else(|| Error::data("series is entirely missing"))?;
    let fill = series[first_valid];
    for v in series[..first_valid].iter_mut() {
        *v = fill;
    }
    let mut last = fill;
    for v in series[first_valid..].iter_mut() {
        if v.is_finite() {
            last = *v;
        } else {
            *v = last;
        }
    }
    Ok(())
}

/// Contiguous train < val < test index ranges covering `[0, n_steps)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitView {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitView {
    /// Check that every segment can hold at least one forecasting window.
    pub fn check_window_fit(&self, input_len: usize, horizon: usize) -> Result<()> {
        let need = input_len + horizon;
        for (name, range) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if range.len() < need {
                return Err(Error::config(format!(
                    "{name} segment has {} steps, too short for input_len {input_len} + horizon {horizon}",
                    range.len()
                )));
            }
        }
        Ok(())
    }
}

/// Segment lengths for an `a:b:c` split of `n` steps. Train and val are
/// floored; the remainder goes to test.
pub fn split_lengths(n: usize, ratio: (u32, u32, u32)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratio;
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::config("split ratio parts must be positive"));
    }
    let total = (a + b + c) as usize;
    let train = n * a as usize / total;
    let val = n * b as usize / total;
    let test = n - train - val;
    Ok((train, val, test))
}

/// Partition the store's time axis by the given ratio.
pub fn split(store: &TimeSeriesStore, ratio: (u32, u32, u32)) -> Result<SplitView> {
    let (train, val, test) = split_lengths(store.n_steps(), ratio)?;
    let _ = test;
    Ok(SplitView {
        train: 0..train,
        val: train..train + val,
        test: train + val..store.n_steps(),
    })
}

/// One training/evaluation window: `input_len` history steps followed by
/// `horizon` target steps, all inside a single split range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub location_id: u32,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    pub entries: Vec<Window>,
    pub input_len: usize,
    pub horizon: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Enumerate windows of `input_len + horizon` steps at the given stride for
/// each listed location. An empty set is valid.
pub fn make_windows(
    store: &TimeSeriesStore,
    range: &Range<usize>,
    location_ids: &[u32],
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowSet> {
    if input_len == 0 || horizon == 0 || stride == 0 {
        return Err(Error::config(
            "input_len, horizon and stride must all be at least 1",
        ));
    }
    if range.end > store.n_steps() {
        return Err(Error::config("window range exceeds store length"));
    }
    let total = input_len + horizon;
    let mut entries = Vec::new();
    for &id in location_ids {
        store.row_index(id)?;
        if range.len() >= total {
            let last = range.len() - total;
            let mut offset = 0;
            while offset <= last {
                entries.push(Window {
                    location_id: id,
                    start: range.start + offset,
                });
                offset += stride;
            }
        }
    }
    Ok(WindowSet {
        entries,
        input_len,
        horizon,
    })
}

/// Zero-variance guard for per-location z-scoring, in raw volume units.
pub const SCALER_EPSILON: f64 = 1e-8;

/// Per-location z-score parameters fit on the train range only.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    means: Vec<f64>, // aligned with store rows
    stds: Vec<f64>,
}

impl Scaler {
    /// Build a scaler from explicit per-row parameters.
    pub fn from_parts(means: Vec<f64>, stds: Vec<f64>) -> Self {
        Scaler { means, stds }
    }

    pub fn mean(&self, row: usize) -> f64 {
        self.means[row]
    }

    pub fn std(&self, row: usize) -> f64 {
        self.stds[row]
    }

    pub fn apply(&self, row: usize, x: f64) -> f64 {
        (x - self.means[row]) / self.stds[row]
    }

    pub fn invert(&self, row: usize, z: f64) -> f64 {
        z * self.stds[row] + self.means[row]
    }

    /// Normalize a full series for the given store row.
    pub fn normalize_series(&self, store: &TimeSeriesStore, row: usize) -> Vec<f64> {
        store.row(row).iter().map(|&x| self.apply(row, x)).collect()
    }
}

/// Fit per-location mean/std on the train range.
pub fn fit_scaler(store: &TimeSeriesStore, train_range: &Range<usize>) -> Result<Scaler> {
    if train_range.is_empty() || train_range.end > store.n_steps() {
        return Err(Error::config("scaler train range is empty or out of bounds"));
    }
    let n = train_range.len() as f64;
    let mut means = Vec::with_capacity(store.n_locations());
    let mut stds = Vec::with_capacity(store.n_locations());
    for row in 0..store.n_locations() {
        let slice = &store.row(row)[train_range.clone()];
        let mean = slice.iter().sum::<f64>() / n;
        let var = slice.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt().max(SCALER_EPSILON));
    }
    Ok(Scaler { means, stds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store3x8() -> TimeSeriesStore {
        let rows = (0..3u32)
            .map(|i| (100 + i, (0..8).map(|t| (i as f64) * 10.0 + t as f64).collect()))
            .collect();
        TimeSeriesStore::new(rows, 15, 4).unwrap()
    }

    #[test]
    fn store_shape_echo() {
        let s = store3x8();
        assert_eq!(s.n_locations(), 3);
        assert_eq!(s.n_steps(), 8);
        assert_eq!(s.series(101).unwrap()[0], 10.0);
    }

    #[test]
    fn store_rejects_ragged_and_duplicate_rows() {
        let err = TimeSeriesStore::new(vec![(1, vec![1.0, 2.0]), (2, vec![1.0])], 15, 96)
            .unwrap_err()
            .to_string();
        assert!(err.contains("ragged row 1"), "{err}");
        let err = TimeSeriesStore::new(vec![(1, vec![1.0]), (1, vec![2.0])], 15, 96)
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate location_id 1"), "{err}");
    }

    #[test]
    fn locf_imputation() {
        let mut s = vec![f64::NAN, f64::NAN, 3.0, f64::NAN, 5.0];
        impute_locf(&mut s).unwrap();
        assert_eq!(s, vec![3.0, 3.0, 3.0, 3.0, 5.0]);
        let mut all_missing = vec![f64::NAN; 3];
        assert!(impute_locf(&mut all_missing).is_err());
    }

    #[test]
    fn split_paper_arithmetic() {
        assert_eq!(split_lengths(35040, (6, 2, 2)).unwrap(), (21024, 7008, 7008));
        assert_eq!(split_lengths(10, (6, 2, 2)).unwrap(), (6, 2, 2));
        // Remainder goes to test.
        assert_eq!(split_lengths(11, (6, 2, 2)).unwrap(), (6, 2, 3));
    }

    #[test]
    fn split_partitions_exactly() {
        let s = store3x8();
        let view = split(&s, (6, 2, 2)).unwrap();
        assert_eq!(view.train, 0..4);
        assert_eq!(view.val, 4..5);
        assert_eq!(view.test, 5..8);
        assert_eq!(view.train.len() + view.val.len() + view.test.len(), 8);
    }

    #[test]
    fn window_counts() {
        let rows = vec![(1u32, vec![0.0; 30])];
        let s = TimeSeriesStore::new(rows, 15, 4).unwrap();
        // range_len=10, L_in=4, H=2, stride=1 -> 5 windows
        let ws = make_windows(&s, &(0..10), &[1], 4, 2, 1).unwrap();
        assert_eq!(ws.len(), 5);
        // degenerate: range too short
        let ws = make_windows(&s, &(0..5), &[1], 4, 2, 1).unwrap();
        assert!(ws.is_empty());
        // stride formula: floor((len - L - H)/stride) + 1
        let ws = make_windows(&s, &(0..30), &[1], 4, 2, 3).unwrap();
        assert_eq!(ws.len(), (30 - 4 - 2) / 3 + 1);
    }

    #[test]
    fn window_count_largest_scale() {
        // 21024 - 96 - 12 + 1 = 20917 windows per location.
        let n = 21024 - 96 - 12 + 1;
        assert_eq!(n, 20917);
    }

    #[test]
    fn windows_stay_inside_range() {
        let rows = vec![(1u32, vec![0.0; 100]), (2u32, vec![0.0; 100])];
        let s = TimeSeriesStore::new(rows, 15, 4).unwrap();
        for (range, l, h, stride) in [(3..57, 7, 3, 2), (10..99, 12, 5, 7), (0..100, 1, 1, 1)] {
            let ws = make_windows(&s, &range, &[1, 2], l, h, stride).unwrap();
            for w in &ws.entries {
                assert!(w.start >= range.start);
                assert!(w.start + l + h <= range.end);
            }
        }
    }

    #[test]
    fn scaler_hand_case_and_constant_guard() {
        let s = TimeSeriesStore::new(vec![(1, vec![1.0, 3.0]), (2, vec![5.0, 5.0])], 15, 2).unwrap();
        let scaler = fit_scaler(&s, &(0..2)).unwrap();
        assert_eq!(scaler.apply(0, 1.0), -1.0);
        assert_eq!(scaler.apply(0, 3.0), 1.0);
        // constant series maps to zero under the epsilon guard
        assert_eq!(scaler.apply(1, 5.0), 0.0);
    }

    #[test]
    fn scaler_round_trip() {
        let s = TimeSeriesStore::new(vec![(1, vec![4.0, 9.5, -3.0, 2.25])], 15, 2).unwrap();
        let scaler = fit_scaler(&s, &(0..4)).unwrap();
        for &x in s.row(0) {
            let back = scaler.invert(0, scaler.apply(0, x));
            assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}
