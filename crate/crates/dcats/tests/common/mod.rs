pub mod oracles;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Standard normal draw (Box-Muller) for test data generation.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A noisy daily-periodic test series.
pub fn periodic_series(n: usize, period: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|t| {
            100.0
                + 30.0 * (t as f64 * std::f64::consts::TAU / period).sin()
                + noise * normal(rng)
        })
        .collect()
}
