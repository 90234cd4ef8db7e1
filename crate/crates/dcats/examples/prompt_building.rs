//! Assemble the initial and refinement prompts for a target location and
//! print them, then parse a response in the proposal format.
//!
//! Run with: `cargo run --example prompt_building`

use dcats::agent::{
    build_initial_prompt, build_refinement_prompt, parse_proposals, ExperimentRecord, Proposal,
};
use dcats::orchestrator::{Pipeline, RunSettings};
use dcats::templates::TemplateSet;
use dcats::tsdata::{generate_synthetic, SyntheticSpec};

fn main() -> dcats::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: 2,
        series_per_cluster: 4,
        n_steps: 1200,
        noise_sigma: 20.0,
        seed: 2,
    })?;
    let mut pipeline = Pipeline::new(
        data.store,
        data.metadata,
        data.graph,
        RunSettings::default(),
        TemplateSet::builtin(),
    )?;

    let ctx = pipeline.prompt_context(0)?;
    let templates = TemplateSet::builtin();

    println!("================ initial prompt ================\n");
    println!("{}\n", build_initial_prompt(&ctx, &templates)?);

    let history = vec![ExperimentRecord {
        round: 1,
        proposal_index: 1,
        proposal: Proposal {
            neighbors: vec![1, 2],
            explanation: "Both share the target's daily profile.".into(),
        },
        val_mae: 21.4321,
        val_rmse: 27.9,
        wall_secs: 0.0,
    }];
    println!("=============== refinement prompt ==============\n");
    println!("{}\n", build_refinement_prompt(&ctx, &history, 21.4321, &templates)?);

    let response = "Proposal 1\nExplanation: keep the two profile matches and add a road neighbor\nNeighbors: [1, 2, 3]";
    let parsed = parse_proposals(response, &ctx.pool(), ctx.n_proposals);
    println!("parsed {} proposal(s): {:?}", parsed.proposals.len(), parsed.proposals[0].neighbors);
    Ok(())
}
