//! Generate a clustered synthetic dataset and inspect its shape.
//!
//! Run with: `cargo run --example synthetic_data`

use dcats::tsdata::{generate_synthetic, split, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let spec = SyntheticSpec {
        n_clusters: 3,
        series_per_cluster: 5,
        n_steps: 2400,
        noise_sigma: 25.0,
        seed: 42,
    };
    let data = generate_synthetic(&spec)?;

    println!(
        "{} locations x {} steps ({} min interval, {} steps/day)",
        data.store.n_locations(),
        data.store.n_steps(),
        data.store.interval_minutes,
        data.store.steps_per_day
    );

    let sv = split(&data.store, (6, 2, 2))?;
    println!(
        "6:2:2 split -> train {} / val {} / test {} steps",
        sv.train.len(),
        sv.val.len(),
        sv.test.len()
    );

    for (&id, &cluster) in data.labels.iter().take(6) {
        let meta = data.metadata.get(id)?;
        let head: Vec<String> = data.store.series(id)?[..4]
            .iter()
            .map(|v| format!("{v:.1}"))
            .collect();
        println!(
            "location {id}: cluster {cluster}, {} ({} County), first steps [{}]",
            meta.city,
            meta.county,
            head.join(", ")
        );
    }

    let dir = std::env::temp_dir().join("dcats-example-synthetic");
    data.write_all(&dir)?;
    println!("wrote data.csv / data.bin / meta.csv / graph.csv / clusters.csv to {}", dir.display());
    Ok(())
}
