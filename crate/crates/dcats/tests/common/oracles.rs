//! Brute-force reference implementations, written independently of the
//! library's algorithms: quadratic scans and direct formulas only.

/// Matches the library's constant-window threshold.
pub const CONST_STD: f64 = 1e-9;

fn window_mean_std(w: &[f64]) -> (f64, f64) {
    let m = w.len() as f64;
    let mean = w.iter().sum::<f64>() / m;
    let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
    (mean, var.sqrt())
}

/// O(n^2 m) self-join matrix profile: for each subsequence, the minimum
/// z-normalized Euclidean distance to any other subsequence outside the
/// m/2 exclusion zone. Flat-vs-flat pairs are distance 0; flat-vs-moving
/// pairs are skipped; entries with no valid pair are NaN.
pub fn naive_matrix_profile(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len() - m + 1;
    let exclusion = m / 2;
    let stats: Vec<(f64, f64)> = (0..n).map(|i| window_mean_std(&x[i..i + m])).collect();
    let mut out = vec![f64::NAN; n];
    for i in 0..n {
        let mut best = f64::INFINITY;
        let (mi, si) = stats[i];
        let flat_i = si <= CONST_STD;
        for j in 0..n {
            let diff = i.abs_diff(j);
            if diff <= exclusion {
                continue;
            }
            let (mj, sj) = stats[j];
            let flat_j = sj <= CONST_STD;
            let d = match (flat_i, flat_j) {
                (true, true) => 0.0,
                (false, false) => {
                    // direct z-normalization, no distance identity involved
                    let a = &x[i..i + m];
                    let b = &x[j..j + m];
                    a.iter()
                        .zip(b)
                        .map(|(&p, &q)| {
                            let za = (p - mi) / si;
                            let zb = (q - mj) / sj;
                            (za - zb) * (za - zb)
                        })
                        .sum::<f64>()
                        .sqrt()
                }
                _ => continue,
            };
            if d < best {
                best = d;
            }
        }
        if best.is_finite() {
            out[i] = best;
        }
    }
    out
}

/// O(nx * ny * m) max-pair Pearson correlation between all length-`m`
/// window pairs, skipping constant windows, clamped to [-1, 1].
pub fn naive_pattern_similarity(x: &[f64], y: &[f64], m: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..=(x.len() - m) {
        let a = &x[i..i + m];
        let (ma, sa) = window_mean_std(a);
        if sa <= CONST_STD {
            continue;
        }
        for j in 0..=(y.len() - m) {
            let b = &y[j..j + m];
            let (mb, sb) = window_mean_std(b);
            if sb <= CONST_STD {
                continue;
            }
            let cov =
                a.iter().zip(b).map(|(&p, &q)| (p - ma) * (q - mb)).sum::<f64>() / m as f64;
            let r = cov / (sa * sb);
            if r > best {
                best = r;
            }
        }
    }
    best.clamp(-1.0, 1.0)
}

/// Plain-loop MAE / RMSE / MAPE-percent over prediction-target pairs, with
/// truth values at or below `mape_min_abs` excluded from MAPE.
pub fn naive_metrics(pairs: &[(f64, f64)], mape_min_abs: f64) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|&(p, y)| (p - y).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|&(p, y)| (p - y) * (p - y)).sum::<f64>() / n).sqrt();
    let mut mape_sum = 0.0;
    let mut mape_n = 0usize;
    for &(p, y) in pairs {
        if y.abs() > mape_min_abs {
            mape_sum += ((p - y) / y).abs();
            mape_n += 1;
        }
    }
    let mape = if mape_n == 0 {
        f64::NAN
    } else {
        100.0 * mape_sum / mape_n as f64
    };
    (mae, rmse, mape)
}
