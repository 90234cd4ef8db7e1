//! Discord-based anomaly scoring and pruning of training data.
//!
//! The matrix profile gives, for each length-`m` subsequence, the
//! z-normalized Euclidean distance to its nearest neighbor outside a
//! trivial-match exclusion zone. Day windows are scored by the largest
//! profile value of subsequences starting inside them, and the top fraction
//! of days per location is dropped from training before fine-tuning.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::neighbors::CONST_WINDOW_STD;
use crate::tsdata::{TimeSeriesStore, WindowSet};

/// Self-join matrix profile. Entries with no valid comparison (a constant
/// window with no constant partner outside the exclusion zone, or a
/// non-constant window with only constant partners) are `NaN` and are
/// skipped by day scoring.
#[derive(Debug, Clone)]
pub struct MatrixProfile {
    pub distances: Vec<f64>,
    pub window: usize,
    /// Trivial-match half-width: pairs with |i - j| <= exclusion are skipped.
    pub exclusion: usize,
}

/// Compute the matrix profile of `x` with subsequence length `m` and the
/// standard m/2 exclusion zone.
pub fn matrix_profile(x: &[f64], m: usize) -> Result<MatrixProfile> {
    if m < 3 {
        return Err(Error::config("matrix profile window m must be at least 3"));
    }
    if x.len() < 2 * m {
        return Err(Error::config(format!(
            "series length {} is shorter than 2m = {}",
            x.len(),
            2 * m
        )));
    }
    let n = x.len() - m + 1;
    let mf = m as f64;
    let exclusion = m / 2;

    let mut means = Vec::with_capacity(n);
    let mut stds = Vec::with_capacity(n);
    for i in 0..n {
        let w = &x[i..i + m];
        let mean = w.iter().sum::<f64>() / mf;
        let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / mf;
        means.push(mean);
        stds.push(var.sqrt());
    }
    let constant: Vec<bool> = stds.iter().map(|&s| s <= CONST_WINDOW_STD).collect();

    let mut best = vec![f64::INFINITY; n];
    // diagonal walk over pairs (i, i+k), k beyond the exclusion zone
    for k in (exclusion + 1)..n {
        let mut dot: f64 = x[..m].iter().zip(&x[k..k + m]).map(|(&a, &b)| a * b).sum();
        let mut i = 0usize;
        loop {
            let j = i + k;
            match (constant[i], constant[j]) {
                (true, true) => {
                    // flat-vs-flat pairs match exactly by convention
                    best[i] = best[i].min(0.0);
                    best[j] = best[j].min(0.0);
                }
                (false, false) => {
                    let r = ((dot - mf * means[i] * means[j]) / (mf * stds[i] * stds[j]))
                        .clamp(-1.0, 1.0);
                    let d = (2.0 * mf * (1.0 - r)).max(0.0).sqrt();
                    if d < best[i] {
                        best[i] = d;
                    }
                    if d < best[j] {
                        best[j] = d;
                    }
                }
                _ => {}
            }
            if j + 1 >= n {
                break;
            }
            dot += x[i + m] * x[j + m] - x[i] * x[j];
            i += 1;
        }
    }
    let distances = best
        .into_iter()
        .map(|d| if d.is_finite() { d } else { f64::NAN })
        .collect();
    Ok(MatrixProfile {
        distances,
        window: m,
        exclusion,
    })
}

/// Per-day discord scores for a set of locations over the train range.
/// Day `d` covers steps `[d*steps_per_day, (d+1)*steps_per_day)` relative to
/// the range start (the last day may be shorter) and is scored by the max
/// profile value over subsequences starting inside it.
pub fn discord_scores(
    store: &TimeSeriesStore,
    location_ids: &[u32],
    train_range: &Range<usize>,
    m: usize,
) -> Result<BTreeMap<u32, Vec<f64>>> {
    let spd = store.steps_per_day;
    let len = train_range.len();
    let n_days = len.div_ceil(spd);
    let mut out = BTreeMap::new();
    for &id in location_ids {
        let row = store.row_index(id)?;
        let slice = &store.row(row)[train_range.clone()];
        let profile = matrix_profile(slice, m)?;
        let mut scores = vec![0.0f64; n_days];
        for (start, &d) in profile.distances.iter().enumerate() {
            if d.is_nan() {
                continue;
            }
            let day = start / spd;
            if d > scores[day] {
                scores[day] = d;
            }
        }
        out.insert(id, scores);
    }
    Ok(out)
}

/// Number of days to exclude for a fraction: `ceil(fraction * n_days)`, with
/// a small guard so exact ratios like 0.10 * 100 do not round up to 11.
pub fn excluded_day_count(n_days: usize, fraction: f64) -> usize {
    ((fraction * n_days as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Indices of the days excluded at the given fraction, ranked by score
/// descending with ties broken by earlier day.
pub fn excluded_days(scores: &[f64], fraction: f64) -> BTreeSet<usize> {
    let k = excluded_day_count(scores.len(), fraction);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().take(k).collect()
}

/// Drop training windows whose input span overlaps an excluded day of their
/// location. Windows outside the train range (validation/test) are never
/// touched.
pub fn prune_anomalous(
    windows: &WindowSet,
    scores: &BTreeMap<u32, Vec<f64>>,
    train_range: &Range<usize>,
    steps_per_day: usize,
    fraction: f64,
) -> Result<WindowSet> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!(
            "prune fraction {fraction} must be in [0, 1)"
        )));
    }
    let excluded: BTreeMap<u32, BTreeSet<usize>> = scores
        .iter()
        .map(|(&id, s)| (id, excluded_days(s, fraction)))
        .collect();
    let total = windows.input_len + windows.horizon;
    let entries = windows
        .entries
        .iter()
        .filter(|w| {
            let in_train = w.start >= train_range.start && w.start + total <= train_range.end;
            if !in_train {
                return true;
            }
            let Some(days) = excluded.get(&w.location_id) else {
                return true;
            };
            let first = (w.start - train_range.start) / steps_per_day;
            let last = (w.start + windows.input_len - 1 - train_range.start) / steps_per_day;
            !(first..=last).any(|d| days.contains(&d))
        })
        .copied()
        .collect();
    Ok(WindowSet {
        entries,
        input_len: windows.input_len,
        horizon: windows.horizon,
    })
}

/// Diagnostic CSV: `location_id,day_index,score,pruned`.
pub fn write_scores_csv(
    scores: &BTreeMap<u32, Vec<f64>>,
    fraction: f64,
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "location_id,day_index,score,pruned")?;
    for (&id, day_scores) in scores {
        let excluded = excluded_days(day_scores, fraction);
        for (day, &score) in day_scores.iter().enumerate() {
            writeln!(w, "{id},{day},{score},{}", excluded.contains(&day))?;
        }
    }
    Ok(())
}
