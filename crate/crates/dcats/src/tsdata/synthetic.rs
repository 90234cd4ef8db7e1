//! Desk-scale synthetic dataset with cluster ground truth.
//!
//! Each cluster shares a daily-periodic base pattern; series within a cluster
//! differ by level, amplitude, a small phase jitter, and noise. Metadata
//! places cluster-mates geodetically near each other and a road graph chains
//! them, so all three neighbor criteria agree with the cluster structure.
//!
//! Crucially, the noise is a moving-average process echoing each
//! innovation at a cluster-specific lag at least as long as the forecast
//! horizon. A single shared linear predictor can advance any mixture of
//! daily harmonics, so pattern differences alone would not make
//! cluster-mate data more valuable; differing noise dynamics do, because
//! one set of weights cannot exploit three different echo lags at once,
//! while a cluster-specialized model recovers its echo across the whole
//! horizon.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::metadata::{write_metadata, LocationMeta, MetadataDB};
use crate::neighbors::{geodetic_distance_km, RoadGraph};
use crate::tsdata::{write_binary, write_csv, TimeSeriesStore};

const STEPS_PER_DAY: usize = 96;
const INTERVAL_MINUTES: u32 = 15;

/// Echo lags (in steps) of the cluster noise processes, cycled per cluster.
/// All are at least one default horizon (12 steps) and at most one default
/// input window (96 steps), so the echo is both observable and valuable.
const CLUSTER_MA_LAG: &[usize] = &[12, 18, 24, 15, 21, 27];

/// Echo strength shared by all clusters.
const MA_ALPHA: f64 = 0.9;

const CITIES: &[(&str, &str)] = &[
    ("Campbell", "Santa Clara"),
    ("Burlingame", "San Mateo"),
    ("Diamond Bar", "Los Angeles"),
    ("San Jose", "Santa Clara"),
    ("Pasadena", "Los Angeles"),
    ("Davis", "Yolo"),
    ("Fresno", "Fresno"),
    ("Redding", "Shasta"),
];

/// Generation parameters; output is a pure function of this struct.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub series_per_cluster: usize,
    pub n_steps: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_clusters: 3,
            series_per_cluster: 20,
            n_steps: 4800,
            noise_sigma: 25.0,
            seed: 0,
        }
    }
}

/// Everything the generator produces, including the cluster ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub store: TimeSeriesStore,
    pub metadata: MetadataDB,
    pub graph: RoadGraph,
    pub labels: BTreeMap<u32, usize>,
}

impl SyntheticDataset {
    /// Write `data.csv`, `data.bin`, `meta.csv`, `graph.csv`, `clusters.csv`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        use std::io::Write;
        std::fs::create_dir_all(dir)?;
        write_csv(&self.store, &dir.join("data.csv"))?;
        write_binary(&self.store, &dir.join("data.bin"))?;
        write_metadata(&self.metadata, &dir.join("meta.csv"))?;
        self.graph.write_csv(&dir.join("graph.csv"))?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("clusters.csv"))?);
        writeln!(w, "location_id,cluster")?;
        for (&id, &c) in &self.labels {
            writeln!(w, "{id},{c}")?;
        }
        Ok(())
    }
}

/// Load a `clusters.csv` ground-truth file.
pub fn load_cluster_labels(path: &Path) -> Result<BTreeMap<u32, usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| crate::error::Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut labels = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let id: u32 = record[0].trim().parse().map_err(|_| {
            crate::error::Error::data(format!("invalid location_id `{}` in cluster file", &record[0]))
        })?;
        let c: usize = record[1].trim().parse().map_err(|_| {
            crate::error::Error::data(format!("invalid cluster `{}` in cluster file", &record[1]))
        })?;
        labels.insert(id, c);
    }
    Ok(labels)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; consumes two uniforms per draw.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Daily base pattern of a cluster: a random 4-harmonic mix scaled to unit
/// RMS over the day.
fn cluster_pattern(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let harmonics: Vec<(f64, f64, f64)> = (1..=4)
        .map(|k| {
            (
                k as f64,
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    // sampled at quarter-step resolution so per-series phase jitter can be
    // fractional while generation stays table-driven and cheap
    let res = STEPS_PER_DAY * 4;
    let mut pattern: Vec<f64> = (0..res)
        .map(|i| {
            let t = i as f64 / 4.0;
            harmonics
                .iter()
                .map(|&(k, a, phi)| a * (std::f64::consts::TAU * k * t / STEPS_PER_DAY as f64 + phi).sin())
                .sum()
        })
        .collect();
    let rms = (pattern.iter().map(|v| v * v).sum::<f64>() / res as f64).sqrt();
    for v in &mut pattern {
        *v /= rms;
    }
    pattern
}

/// Generate a dataset from the spec. Same spec, same output, byte for byte.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let mut metas = Vec::new();
    let mut labels = BTreeMap::new();
    let mut graph = RoadGraph::new();

    for c in 0..spec.n_clusters {
        let pattern = cluster_pattern(&mut rng);
        let res = pattern.len();
        let (city, county) = CITIES[c % CITIES.len()];
        let freeway = format!("SR{}-N", 10 + 3 * c);
        let center_lat = 33.8 + 1.3 * c as f64;
        let center_lon = -121.5 + 0.9 * c as f64;
        let mut prev_id: Option<u32> = None;
        let mut prev_coord = (0.0, 0.0);

        for s in 0..spec.series_per_cluster {
            let id = (c * spec.series_per_cluster + s) as u32;
            let base = rng.gen_range(250.0..400.0);
            let amp = rng.gen_range(80.0..140.0);
            // quarter-step units, so up to +/- 2 whole steps
            let jitter = rng.gen_range(-8i64..=8);
            let lag = CLUSTER_MA_LAG[c % CLUSTER_MA_LAG.len()];
            // innovation std scaled so the stationary noise std equals
            // noise_sigma in every cluster
            let innov = spec.noise_sigma / (1.0 + MA_ALPHA * MA_ALPHA).sqrt();
            let mut recent = std::collections::VecDeque::from(vec![0.0f64; lag]);
            let series: Vec<f64> = (0..spec.n_steps)
                .map(|t| {
                    let idx = ((t * 4) as i64 + jitter).rem_euclid(res as i64) as usize;
                    let e = innov * normal(&mut rng);
                    let echoed = recent.pop_front().expect("lag buffer is non-empty");
                    recent.push_back(e);
                    let v = base + amp * pattern[idx] + e + MA_ALPHA * echoed;
                    v.max(0.0)
                })
                .collect();
            let volume: f64 = series.iter().sum();
            rows.push((id, series));
            labels.insert(id, c);

            let lat = center_lat + rng.gen_range(-0.05..0.05);
            let lon = center_lon + rng.gen_range(-0.05..0.05);
            metas.push(LocationMeta {
                location_id: id,
                latitude: lat,
                longitude: lon,
                city: city.to_string(),
                county: county.to_string(),
                population: Some(rng.gen_range(20_000..1_000_000)),
                freeway: freeway.clone(),
                lanes: Some(rng.gen_range(2..=5)),
                historical_total_volume: Some(volume.round() as u64),
            });
            if let Some(prev) = prev_id {
                let d = geodetic_distance_km(prev_coord, (lat, lon)).max(1e-3);
                graph.add_edge(prev, id, d)?;
            }
            prev_id = Some(id);
            prev_coord = (lat, lon);
        }
    }

    let store = TimeSeriesStore::new(rows, INTERVAL_MINUTES, STEPS_PER_DAY)?;
    let metadata = MetadataDB::new(metas)?;
    Ok(SyntheticDataset {
        store,
        metadata,
        graph,
        labels,
    })
}
