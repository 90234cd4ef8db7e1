//! Build the three ranked neighbor lists (road network, pattern
//! similarity, geodetic distance) for one target location.
//!
//! Run with: `cargo run --example neighbor_sets`

use dcats::neighbors::{build_neighbor_sets, NeighborConfig};
use dcats::tsdata::{generate_synthetic, split, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 3,
        series_per_cluster: 6,
        n_steps: 2400,
        noise_sigma: 20.0,
        seed: 7,
    })?;
    let sv = split(&data.store, (6, 2, 2))?;

    let target = 0;
    let sets = build_neighbor_sets(
        &data.store,
        &data.metadata,
        &data.graph,
        target,
        &sv.train,
        &NeighborConfig::default(),
    )?;

    println!("neighbors of location {target} (its cluster: {})\n", data.labels[&target]);
    for (label, list, unit) in [
        ("road network distance", &sets.road, "km"),
        ("pattern similarity", &sets.pattern, ""),
        ("geodetic distance", &sets.geodetic, "km"),
    ] {
        println!("by {label}:");
        for (rank, e) in list.iter().enumerate() {
            println!(
                "  {}. location {:>2}  {:.4}{unit}  (cluster {})",
                rank + 1,
                e.location_id,
                e.value,
                data.labels[&e.location_id]
            );
        }
        println!();
    }
    Ok(())
}
