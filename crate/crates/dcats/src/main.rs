//! Thin file-based CLI over the library. See `README.md` for a tour; the
//! `examples/` directory shows the same capabilities as library calls.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcats::agent::{
    AgentBackend, HttpTransport, LlmBackend, RetryConfig, ScriptedBackend, ScriptedStrategy,
};
use dcats::metadata::load_metadata;
use dcats::neighbors::RoadGraph;
use dcats::orchestrator::{emit_report, Pipeline, RunSettings};
use dcats::templates::TemplateSet;
use dcats::tsdata::{
    generate_synthetic, load_cluster_labels, load_store, write_binary, SyntheticSpec,
};
use dcats::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dcats",
    about = "Agent-selected auxiliary time series for forecast fine-tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clustered synthetic benchmark dataset.
    Synth {
        /// Output directory for data.csv, data.bin, meta.csv, graph.csv,
        /// clusters.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        clusters: usize,
        #[arg(long, default_value_t = 20)]
        per_cluster: usize,
        #[arg(long, default_value_t = 4800)]
        steps: usize,
        #[arg(long, default_value_t = 25.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a CSV dataset, impute missing values, and write the fast
    /// binary form.
    Prepare {
        /// Input series CSV (`location_id,v_0,v_1,...`).
        #[arg(long)]
        data: PathBuf,
        /// Output binary path (conventionally `data.bin`).
        #[arg(long)]
        out: PathBuf,
        /// Optional metadata CSV to validate against the series.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Print and save the three ranked neighbor lists for a target.
    Neighbors {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[arg(long)]
        target: u32,
        /// Optional CSV output (`target_id,kind,rank,neighbor_id,value`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the shared foundation model and save a checkpoint.
    Pretrain {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the agent loop for one or more targets and write traces,
    /// transcripts, and reports into the work directory.
    Run {
        #[command(flatten)]
        dataset: DatasetArgs,
        /// Comma-separated target location ids (default: every location).
        #[arg(long)]
        targets: Option<String>,
        /// oracle | greedy | random | repeat | llm
        #[arg(long, default_value = "greedy")]
        backend: String,
        /// Cluster labels CSV, required by the oracle backend.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Master seed (overrides the config file).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for all run artifacts.
        #[arg(long)]
        workdir: PathBuf,
        /// Chat endpoint URL for the llm backend.
        #[arg(long)]
        url: Option<String>,
        /// Model name passed to the llm endpoint.
        #[arg(long = "llm-model")]
        llm_model: Option<String>,
    },
    /// Rebuild report files from the traces of a previous run.
    Report {
        /// Work directory of a previous `run`.
        #[arg(long)]
        workdir: PathBuf,
    },
}

/// Dataset paths plus the optional settings file shared by subcommands.
#[derive(Args)]
struct DatasetArgs {
    /// Series file (.csv or .bin).
    #[arg(long)]
    data: PathBuf,
    /// Metadata CSV.
    #[arg(long)]
    meta: PathBuf,
    /// Road graph CSV (`from_id,to_id,length_km`); omit to derive a
    /// freeway-chained graph from the metadata.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
}

impl DatasetArgs {
    fn pipeline(&self, seed_override: Option<u64>) -> Result<Pipeline> {
        let store = load_store(&self.data)?;
        let db = load_metadata(&self.meta)?;
        let graph = match &self.graph {
            Some(path) => RoadGraph::load_csv(path)?,
            None => dcats::neighbors::build_freeway_graph(&db)?,
        };
        let mut settings = match &self.config {
            Some(path) => RunSettings::from_file(path)?,
            None => RunSettings::default(),
        };
        if let Some(seed) = seed_override {
            settings.seed = seed;
        }
        let templates = match &self.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        Pipeline::new(store, db, graph, settings, templates)
    }
}

fn parse_targets(spec: Option<&str>, all: &[u32]) -> Result<Vec<u32>> {
    match spec {
        None => Ok(all.to_vec()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::config(format!("invalid target id `{t}`")))
            })
            .collect(),
    }
}

fn make_backend(
    name: &str,
    seed: u64,
    labels: Option<&Path>,
    url: Option<&str>,
    llm_model: Option<&str>,
) -> Result<Box<dyn AgentBackend>> {
    let strategy = match name {
        "oracle" => {
            let path = labels.ok_or_else(|| {
                Error::config("the oracle backend needs --labels <clusters.csv>")
            })?;
            ScriptedStrategy::Oracle(load_cluster_labels(path)?)
        }
        "greedy" => ScriptedStrategy::GreedyPattern,
        "random" => ScriptedStrategy::Random { size: 5 },
        "repeat" => ScriptedStrategy::Repeat,
        "llm" => {
            let url = url.ok_or_else(|| Error::config("the llm backend needs --url"))?;
            let model = llm_model.unwrap_or("gpt-4o-mini");
            let transport = HttpTransport::new(url, model)?;
            return Ok(Box::new(LlmBackend::new(transport, RetryConfig::default())));
        }
        other => {
            return Err(Error::config(format!(
                "unknown backend `{other}` (expected oracle|greedy|random|repeat|llm)"
            )))
        }
    };
    Ok(Box::new(ScriptedBackend::new(strategy, seed)))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            clusters,
            per_cluster,
            steps,
            noise,
            seed,
        } => {
            let spec = SyntheticSpec {
                n_clusters: clusters,
                series_per_cluster: per_cluster,
                n_steps: steps,
                noise_sigma: noise,
                seed,
            };
            let dataset = generate_synthetic(&spec)?;
            dataset.write_all(&out)?;
            println!(
                "wrote {} locations x {} steps to {}",
                dataset.store.n_locations(),
                dataset.store.n_steps(),
                out.display()
            );
        }
        Command::Prepare { data, out, meta } => {
            let store = load_store(&data)?;
            if let Some(meta) = meta {
                let db = load_metadata(&meta)?;
                db.check_coverage(&store)?;
            }
            write_binary(&store, &out)?;
            println!(
                "validated {} locations x {} steps; wrote {}",
                store.n_locations(),
                store.n_steps(),
                out.display()
            );
        }
        Command::Neighbors {
            dataset,
            target,
            out,
        } => {
            let mut pipeline = dataset.pipeline(None)?;
            let sets = pipeline.neighbor_sets(target)?;
            for (label, list) in [
                ("road", &sets.road),
                ("pattern", &sets.pattern),
                ("geodetic", &sets.geodetic),
            ] {
                println!("{label}:");
                for (i, e) in list.iter().enumerate() {
                    println!("  {}. location_id={} value={:.4}", i + 1, e.location_id, e.value);
                }
            }
            if let Some(path) = out {
                sets.write_csv(&path)?;
            }
        }
        Command::Pretrain { dataset, out } => {
            let mut pipeline = dataset.pipeline(None)?;
            let model = pipeline.foundation(Some(&out))?;
            println!(
                "foundation ({}) saved to {}",
                model.config.kind,
                out.display()
            );
        }
        Command::Run {
            dataset,
            targets,
            backend,
            labels,
            seed,
            workdir,
            url,
            llm_model,
        } => {
            let mut pipeline = dataset.pipeline(seed)?;
            let targets = parse_targets(targets.as_deref(), pipeline.store.location_ids())?;
            std::fs::create_dir_all(&workdir)?;
            let foundation_cache = workdir.join("foundation.ckpt");
            let mut results = Vec::new();
            for target in targets {
                let mut agent = make_backend(
                    &backend,
                    pipeline.settings.seed,
                    labels.as_deref(),
                    url.as_deref(),
                    llm_model.as_deref(),
                )?;
                let result = pipeline.run_query(
                    agent.as_mut(),
                    target,
                    Some(&workdir),
                    Some(&foundation_cache),
                )?;
                let baselines = pipeline.baselines_for(target, Some(&foundation_cache))?;
                let trace = serde_json::json!({
                    "target": target,
                    "baselines": baselines,
                });
                let mut text = serde_json::to_string_pretty(&trace)?;
                text.push('\n');
                std::fs::write(workdir.join(format!("baseline_{target}.json")), text)?;
                println!(
                    "target {target}: best val MAE {:.4} after {} rounds (baseline {:.4})",
                    result.best.val_mae, result.rounds_run, baselines.all_data_val.mae
                );
                results.push((result, baselines));
            }
            emit_report(&results, &workdir)?;
            println!("report written to {}", workdir.join("report.txt").display());
        }
        Command::Report { workdir } => {
            let results = load_run_artifacts(&workdir)?;
            if results.is_empty() {
                return Err(Error::data(format!(
                    "no trace/baseline pairs found in {}",
                    workdir.display()
                )));
            }
            emit_report(&results, &workdir)?;
            println!("report rebuilt from {} traces", results.len());
        }
    }
    Ok(())
}

/// Pair up `trace_<id>.json` and `baseline_<id>.json` files from a run.
fn load_run_artifacts(
    workdir: &Path,
) -> Result<Vec<(dcats::orchestrator::QueryResult, dcats::orchestrator::BaselineMetrics)>> {
    #[derive(serde::Deserialize)]
    struct BaselineFile {
        baselines: dcats::orchestrator::BaselineMetrics,
    }
    let mut traces = BTreeMap::new();
    for entry in std::fs::read_dir(workdir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name
            .strip_prefix("trace_")
            .and_then(|r| r.strip_suffix(".json"))
        {
            if let Ok(id) = id.parse::<u32>() {
                traces.insert(id, path);
            }
        }
    }
    let mut out = Vec::new();
    for (id, trace_path) in traces {
        let baseline_path = workdir.join(format!("baseline_{id}.json"));
        if !baseline_path.exists() {
            continue;
        }
        let result = dcats::orchestrator::read_trace(&trace_path)?;
        let text = std::fs::read_to_string(&baseline_path)?;
        let baseline: BaselineFile = serde_json::from_str(&text)?;
        out.push((result, baseline.baselines));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
