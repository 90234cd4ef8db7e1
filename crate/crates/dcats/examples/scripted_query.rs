//! Run the full agent loop offline with scripted backends and compare
//! against the fine-tuned-on-everything baseline.
//!
//! Run with: `cargo run --example scripted_query`

use dcats::agent::{ScriptedBackend, ScriptedStrategy};
use dcats::orchestrator::{Pipeline, RunSettings};
use dcats::templates::TemplateSet;
use dcats::tsdata::{generate_synthetic, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 3,
        series_per_cluster: 8,
        n_steps: 2400,
        noise_sigma: 25.0,
        seed: 1,
    })?;
    let labels = data.labels.clone();
    let mut settings = RunSettings::default();
    settings.set("finetune_lr", "0.001")?;
    settings.seed = 7;
    let mut pipeline = Pipeline::new(
        data.store,
        data.metadata,
        data.graph,
        settings,
        TemplateSet::builtin(),
    )?;

    let target = 0;
    let base = pipeline.baselines_for(target, None)?;
    println!(
        "baselines for location {target}: foundation val MAE {:.4}, all-data fine-tune {:.4}\n",
        base.foundation_val.mae, base.all_data_val.mae
    );

    for strategy in [
        ScriptedStrategy::Oracle(labels.clone()),
        ScriptedStrategy::GreedyPattern,
        ScriptedStrategy::Random { size: 5 },
    ] {
        let mut backend = ScriptedBackend::new(strategy, 7);
        let result = pipeline.run_query(&mut backend, target, None, None)?;
        let impr = (base.all_data_val.mae - result.best.val_mae) / base.all_data_val.mae * 100.0;
        println!(
            "{:<8} best val MAE {:.4} ({impr:+.2}% vs baseline) after {} rounds, \
             {} proposals; picked {:?}",
            result.backend,
            result.best.val_mae,
            result.rounds_run,
            result.records.len(),
            result.best.proposal.neighbors,
        );
        println!("         explanation: {}", result.best.proposal.explanation);
        println!(
            "         test MAE {:.4} (baseline {:.4})\n",
            result.test.as_ref().map(|m| m.mae).unwrap_or(f64::NAN),
            base.all_data_test.mae
        );
    }
    Ok(())
}
