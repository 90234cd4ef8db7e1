//! Score days by matrix-profile discords and prune the most anomalous ones
//! from a training window set.
//!
//! Run with: `cargo run --example discord_pruning`

use dcats::anomaly::{discord_scores, excluded_days, prune_anomalous};
use dcats::tsdata::{generate_synthetic, make_windows, split, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let mut data = generate_synthetic(&SyntheticSpec {
        n_clusters: 1,
        series_per_cluster: 2,
        n_steps: 2400,
        noise_sigma: 15.0,
        seed: 3,
    })?;

    // corrupt one day of location 0 so it becomes the clear discord
    {
        let spd = data.store.steps_per_day;
        let series = data.store.series_mut(0)?;
        for v in &mut series[5 * spd..6 * spd] {
            *v += 300.0;
        }
    }

    let sv = split(&data.store, (6, 2, 2))?;
    let ids = data.store.location_ids().to_vec();
    let scores = discord_scores(&data.store, &ids, &sv.train, 24)?;

    let s0 = &scores[&0];
    println!("per-day discord scores for location 0 (corrupted day 5):");
    for (day, score) in s0.iter().enumerate() {
        println!("  day {day:>2}: {score:.3}");
    }
    let dropped = excluded_days(s0, 0.10);
    println!("days excluded at fraction 0.10: {dropped:?}");

    let windows = make_windows(&data.store, &sv.train, &ids, 96, 12, 4)?;
    let pruned = prune_anomalous(&windows, &scores, &sv.train, data.store.steps_per_day, 0.10)?;
    println!(
        "training windows: {} before pruning, {} after",
        windows.len(),
        pruned.len()
    );
    Ok(())
}
