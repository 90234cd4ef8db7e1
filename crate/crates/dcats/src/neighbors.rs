//! The three neighbor sets that ground the agent's retrieval: road-network
//! distance, temporal pattern similarity, and geodetic distance.
//!
//! Pattern similarity is the max over all window pairs of the Pearson
//! correlation between length-`m` subsequences of the two series. It is
//! evaluated with a diagonal sliding-dot-product join (the z-normalized
//! distance identity r = 1 - d^2/(2m) makes this the same quantity a
//! MASS/STOMP join computes), which is O(n^2) instead of O(n^2 m).

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metadata::MetadataDB;
use crate::tsdata::TimeSeriesStore;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Windows with standard deviation at or below this are treated as constant:
/// Pearson is undefined for them and flat windows carry no pattern.
pub const CONST_WINDOW_STD: f64 = 1e-9;

/// Great-circle (haversine) distance in km between two (lat, lon) points in
/// degrees.
pub fn geodetic_distance_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Weighted undirected road network over location ids.
#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    adj: BTreeMap<u32, Vec<(u32, f64)>>,
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: u32, b: u32, length_km: f64) -> Result<()> {
        if a == b {
            return Err(Error::data(format!("self-loop on location_id {a}")));
        }
        if !(length_km > 0.0) {
            return Err(Error::data(format!(
                "edge {a}-{b} has non-positive length {length_km}"
            )));
        }
        self.adj.entry(a).or_default().push((b, length_km));
        self.adj.entry(b).or_default().push((a, length_km));
        Ok(())
    }

    pub fn contains(&self, id: u32) -> bool {
        self.adj.contains_key(&id)
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.values().map(Vec::len).sum::<usize>() / 2
    }

    /// Load from CSV `from_id,to_id,length_km`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
        let mut graph = RoadGraph::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 3 {
                return Err(Error::data(format!("graph row {row_no}: expected 3 fields")));
            }
            let parse = |idx: usize| -> Result<f64> {
                record[idx]
                    .trim()
                    .parse()
                    .map_err(|_| Error::data(format!("graph row {row_no}: invalid field `{}`", &record[idx])))
            };
            graph.add_edge(parse(0)? as u32, parse(1)? as u32, parse(2)?)?;
        }
        Ok(graph)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "from_id,to_id,length_km")?;
        for (&a, edges) in &self.adj {
            for &(b, len) in edges {
                if a < b {
                    writeln!(w, "{a},{b},{len}")?;
                }
            }
        }
        Ok(())
    }

    /// Shortest-path distances from `source` to every reachable node.
    pub fn shortest_paths(&self, source: u32) -> Result<BTreeMap<u32, f64>> {
        if !self.contains(source) {
            return Err(Error::UnknownLocation(source));
        }
        #[derive(PartialEq)]
        struct State {
            dist: f64,
            node: u32,
        }
        impl Eq for State {}
        impl Ord for State {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                // min-heap on distance, tie by id for determinism
                other
                    .dist
                    .total_cmp(&self.dist)
                    .then(other.node.cmp(&self.node))
            }
        }
        impl PartialOrd for State {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist: BTreeMap<u32, f64> = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(source, 0.0);
        heap.push(State { dist: 0.0, node: source });
        while let Some(State { dist: d, node }) = heap.pop() {
            if d > dist[&node] {
                continue;
            }
            for &(next, w) in &self.adj[&node] {
                let nd = d + w;
                if dist.get(&next).map_or(true, |&cur| nd < cur) {
                    dist.insert(next, nd);
                    heap.push(State { dist: nd, node: next });
                }
            }
        }
        Ok(dist)
    }
}

/// Shortest weighted path length between two nodes; `None` when unreachable.
pub fn road_distance(graph: &RoadGraph, a: u32, b: u32) -> Result<Option<f64>> {
    if !graph.contains(b) {
        return Err(Error::UnknownLocation(b));
    }
    if a == b {
        graph.shortest_paths(a)?; // still validates membership of a
        return Ok(Some(0.0));
    }
    Ok(graph.shortest_paths(a)?.get(&b).copied())
}

/// Mean and standard deviation of every length-`m` window, computed directly
/// per window.
fn window_stats(x: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() - m + 1;
    let mut means = Vec::with_capacity(n);
    let mut stds = Vec::with_capacity(n);
    for i in 0..n {
        let w = &x[i..i + m];
        let mean = w.iter().sum::<f64>() / m as f64;
        let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

/// Max over all window pairs of the Pearson correlation between length-`m`
/// subsequences of `x` and `y`. Constant windows are excluded; if either
/// series has only constant windows the similarity is undefined.
pub fn pattern_similarity(x: &[f64], y: &[f64], m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::config("pattern window m must be at least 3"));
    }
    if x.len() < m || y.len() < m {
        return Err(Error::config(format!(
            "series shorter than pattern window m={m}"
        )));
    }
    let (mx, sx) = window_stats(x, m);
    let (my, sy) = window_stats(y, m);
    if sx.iter().all(|&s| s <= CONST_WINDOW_STD) || sy.iter().all(|&s| s <= CONST_WINDOW_STD) {
        return Err(Error::data(
            "pattern similarity undefined: all windows are constant",
        ));
    }
    let nx = mx.len();
    let ny = my.len();
    let mf = m as f64;
    let mut best = f64::NEG_INFINITY;

    let mut walk = |i0: usize, j0: usize| {
        let mut dot: f64 = x[i0..i0 + m]
            .iter()
            .zip(&y[j0..j0 + m])
            .map(|(&a, &b)| a * b)
            .sum();
        let (mut i, mut j) = (i0, j0);
        loop {
            if sx[i] > CONST_WINDOW_STD && sy[j] > CONST_WINDOW_STD {
                // grouping the mean/std products keeps the expression
                // commutative in (x, y), so the result is bitwise symmetric
                let r = (dot - mf * (mx[i] * my[j])) / (mf * (sx[i] * sy[j]));
                if r > best {
                    best = r;
                }
            }
            if i + 1 >= nx || j + 1 >= ny {
                break;
            }
            dot += x[i + m] * y[j + m] - x[i] * y[j];
            i += 1;
            j += 1;
        }
    };

    for j0 in 0..ny {
        walk(0, j0);
    }
    for i0 in 1..nx {
        walk(i0, 0);
    }
    Ok(best.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NeighborKind {
    Road,
    Pattern,
    Geodetic,
}

impl NeighborKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NeighborKind::Road => "road",
            NeighborKind::Pattern => "pattern",
            NeighborKind::Geodetic => "geodetic",
        }
    }
}

/// One ranked neighbor: a similarity in [-1, 1] for pattern entries, a
/// distance in km otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborEntry {
    pub location_id: u32,
    pub kind: NeighborKind,
    pub value: f64,
}

/// The three ranked neighbor lists for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSets {
    pub target: u32,
    pub road: Vec<NeighborEntry>,
    pub pattern: Vec<NeighborEntry>,
    pub geodetic: Vec<NeighborEntry>,
}

impl NeighborSets {
    /// Union of all ids presented to the agent.
    pub fn all_ids(&self) -> BTreeSet<u32> {
        self.road
            .iter()
            .chain(&self.pattern)
            .chain(&self.geodetic)
            .map(|e| e.location_id)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.road.is_empty() && self.pattern.is_empty() && self.geodetic.is_empty()
    }

    /// Diagnostic CSV: `target_id,kind,rank,neighbor_id,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "target_id,kind,rank,neighbor_id,value")?;
        for list in [&self.road, &self.pattern, &self.geodetic] {
            for (rank, e) in list.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    self.target,
                    e.kind.as_str(),
                    rank + 1,
                    e.location_id,
                    e.value
                )?;
            }
        }
        Ok(())
    }
}

/// Knobs for neighbor-set construction.
#[derive(Debug, Clone)]
pub struct NeighborConfig {
    /// Max entries per list.
    pub k: usize,
    /// Pattern window; defaults to one day (`steps_per_day`) when `None`.
    pub pattern_window: Option<usize>,
    /// Pattern joins use at most this many trailing train steps.
    pub pattern_suffix_cap: usize,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            k: 10,
            pattern_window: None,
            pattern_suffix_cap: 10_000,
        }
    }
}

/// Build the three ranked neighbor lists for `target`. Pattern similarity is
/// computed over the train range only; the road list omits unreachable nodes.
/// Ties break by ascending location id throughout.
pub fn build_neighbor_sets(
    store: &TimeSeriesStore,
    db: &MetadataDB,
    graph: &RoadGraph,
    target: u32,
    train_range: &Range<usize>,
    cfg: &NeighborConfig,
) -> Result<NeighborSets> {
    let target_row = store.row_index(target)?;
    let target_meta = db.get(target)?;
    let m = cfg.pattern_window.unwrap_or(store.steps_per_day);

    let suffix = |row: usize| -> &[f64] {
        let slice = &store.row(row)[train_range.clone()];
        let cap = cfg.pattern_suffix_cap.max(m);
        if slice.len() > cap {
            &slice[slice.len() - cap..]
        } else {
            slice
        }
    };
    let target_series = suffix(target_row);

    let road_dists = if graph.contains(target) {
        graph.shortest_paths(target)?
    } else {
        BTreeMap::new()
    };

    let mut road = Vec::new();
    let mut pattern = Vec::new();
    let mut geodetic = Vec::new();
    for &id in store.location_ids() {
        if id == target {
            continue;
        }
        let meta = db.get(id)?;
        geodetic.push(NeighborEntry {
            location_id: id,
            kind: NeighborKind::Geodetic,
            value: geodetic_distance_km(
                (target_meta.latitude, target_meta.longitude),
                (meta.latitude, meta.longitude),
            ),
        });
        if let Some(&d) = road_dists.get(&id) {
            road.push(NeighborEntry {
                location_id: id,
                kind: NeighborKind::Road,
                value: d,
            });
        }
        let row = store.row_index(id)?;
        if let Ok(sim) = pattern_similarity(target_series, suffix(row), m) {
            pattern.push(NeighborEntry {
                location_id: id,
                kind: NeighborKind::Pattern,
                value: sim,
            });
        }
    }

    let ascending = |a: &NeighborEntry, b: &NeighborEntry| {
        a.value
            .total_cmp(&b.value)
            .then(a.location_id.cmp(&b.location_id))
    };
    road.sort_by(ascending);
    geodetic.sort_by(ascending);
    pattern.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(a.location_id.cmp(&b.location_id))
    });
    road.truncate(cfg.k);
    geodetic.truncate(cfg.k);
    pattern.truncate(cfg.k);

    Ok(NeighborSets {
        target,
        road,
        pattern,
        geodetic,
    })
}

/// Build a road graph from metadata alone: sensors sharing a freeway are
/// chained by nearest-coordinate order, edge weight = geodetic distance.
pub fn build_freeway_graph(db: &MetadataDB) -> Result<RoadGraph> {
    let mut groups: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for meta in db.iter() {
        groups.entry(meta.freeway.as_str()).or_default().push(meta.location_id);
    }
    let mut graph = RoadGraph::new();
    for (_freeway, ids) in groups {
        if ids.len() < 2 {
            continue;
        }
        let coord = |id: u32| {
            let m = db.get(id).expect("grouped id present");
            (m.latitude, m.longitude)
        };
        // start from the lexicographically smallest coordinate
        let mut remaining: Vec<u32> = ids;
        remaining.sort_by(|&a, &b| {
            let (alat, alon) = coord(a);
            let (blat, blon) = coord(b);
            alat.total_cmp(&blat).then(alon.total_cmp(&blon)).then(a.cmp(&b))
        });
        let mut current = remaining.remove(0);
        while !remaining.is_empty() {
            let (idx, _) = remaining
                .iter()
                .enumerate()
                .map(|(i, &id)| (i, geodetic_distance_km(coord(current), coord(id))))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(remaining[a.0].cmp(&remaining[b.0])))
                .unwrap();
            let next = remaining.remove(idx);
            let d = geodetic_distance_km(coord(current), coord(next)).max(1e-3);
            graph.add_edge(current, next, d)?;
            current = next;
        }
    }
    Ok(graph)
}
