//! Prompt assembly and proposal-format rendering/parsing.
//!
//! Rendering is canonical: `render_proposals` followed by `parse_proposals`
//! followed by `render_proposals` reproduces the exact same bytes, which is
//! what lets scripted backends and the orchestrator share one text protocol.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::agent::{ExperimentRecord, Proposal, PromptContext};
use crate::error::Result;
use crate::templates::TemplateSet;

/// Top-level section markers of the initial prompt, in order.
pub const SECTION_MARKERS_INITIAL: [&str; 5] = [
    "# Background",
    "# Task",
    "## Guidelines:",
    "# Neighbor Sets",
    "# Output Format",
];

/// Top-level section markers of the refinement prompt, in order.
pub const SECTION_MARKERS_REFINEMENT: [&str; 6] = [
    "# Objective",
    "# Background",
    "# Previous Experiment Results (Ranked from Best to Worst)",
    "# Task",
    "# Additional Considerations",
    "# Output Format",
];

/// First-round prompt: background, task, guidelines, the three neighbor
/// sets with per-location details, and the output format.
pub fn build_initial_prompt(ctx: &PromptContext, templates: &TemplateSet) -> Result<String> {
    let n_proposals = ctx.n_proposals.to_string();
    let target_id = ctx.target.to_string();
    let task = templates.render(
        "initial_task",
        &[
            ("target_id", &target_id),
            ("target_details", &ctx.target_details),
            ("n_proposals", &n_proposals),
        ],
    )?;
    let guidelines = templates.get("initial_guidelines")?;
    let output_format = templates.get("output_format")?;

    let sections = [
        format!("# Background\n{}", ctx.background),
        task,
        guidelines.to_string(),
        format!("# Neighbor Sets\n{}", ctx.neighbor_sections.join("\n\n")),
        output_format.to_string(),
    ];
    Ok(sections.join("\n\n"))
}

/// Refinement prompt: objective, best-so-far background, the experiment
/// history ranked best (lowest MAE) to worst and renumbered from 1, the
/// task, candidate reminders, and the output format.
pub fn build_refinement_prompt(
    ctx: &PromptContext,
    history: &[ExperimentRecord],
    best_mae: f64,
    templates: &TemplateSet,
) -> Result<String> {
    let target_id = ctx.target.to_string();
    let objective = templates.render("refine_objective", &[("target_id", &target_id)])?;
    let background = templates.render(
        "refine_background",
        &[
            ("target_id", &target_id),
            ("target_details", &ctx.target_details),
            ("best_mae", &format!("{best_mae:.4}")),
        ],
    )?;
    let task = templates.render("refine_task", &[("target_id", &target_id)])?;
    let considerations = templates.render(
        "refine_considerations",
        &[("neighbor_candidates", &ctx.candidate_summary)],
    )?;
    let output_format = templates.get("output_format")?;

    let mut ranked: Vec<&ExperimentRecord> = history.iter().collect();
    ranked.sort_by(|a, b| {
        a.val_mae
            .total_cmp(&b.val_mae)
            .then(a.round.cmp(&b.round))
            .then(a.proposal_index.cmp(&b.proposal_index))
    });
    let mut results = String::from("# Previous Experiment Results (Ranked from Best to Worst)");
    for (i, rec) in ranked.iter().enumerate() {
        results.push_str(&format!(
            "\n\n## Experiment {}\nNeighbors: [{}]\nExplanation: {}\nValidation MAE: {:.4}",
            i + 1,
            join_ids(&rec.proposal.neighbors),
            rec.proposal.explanation,
            rec.val_mae,
        ));
    }

    Ok([
        objective,
        background,
        results,
        task,
        considerations,
        output_format.to_string(),
    ]
    .join("\n\n"))
}

/// A proposal the parser understood but refused, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedProposal {
    pub raw_neighbors: Vec<u32>,
    pub reason: String,
}

/// Result of parsing one response.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub proposals: Vec<Proposal>,
    pub rejected: Vec<RejectedProposal>,
}

impl ParseOutcome {
    /// True when a corrective re-prompt is warranted: nothing usable came
    /// back at all.
    pub fn is_unusable(&self) -> bool {
        self.proposals.is_empty()
    }
}

fn proposal_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?m)^Proposal\s+(\d+)\s*\r?\nExplanation:\s*(.*?)\s*\r?\nNeighbors:\s*\[([^\]]*)\]",
        )
        .expect("static regex")
    })
}

/// Extract proposals from free-form response text. Never panics; malformed
/// blocks are skipped, and structurally valid proposals are rejected with a
/// reason when they duplicate ids, propose ids outside the candidate pool,
/// or are empty. At most `n_expected` proposals are accepted, in order.
pub fn parse_proposals(text: &str, pool: &BTreeSet<u32>, n_expected: usize) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for cap in proposal_regex().captures_iter(text) {
        if out.proposals.len() >= n_expected {
            break;
        }
        let explanation = cap[2].trim().to_string();
        let mut ids = Vec::new();
        let mut malformed = false;
        for tok in cap[3].split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            match tok.parse::<u32>() {
                Ok(id) => ids.push(id),
                Err(_) => {
                    malformed = true;
                    break;
                }
            }
        }
        if malformed {
            out.rejected.push(RejectedProposal {
                raw_neighbors: ids,
                reason: "neighbor list contains a non-integer token".into(),
            });
            continue;
        }
        if ids.is_empty() {
            out.rejected.push(RejectedProposal {
                raw_neighbors: ids,
                reason: "proposal lists no neighbors".into(),
            });
            continue;
        }
        let mut seen = BTreeSet::new();
        if let Some(&dup) = ids.iter().find(|id| !seen.insert(**id)) {
            out.rejected.push(RejectedProposal {
                raw_neighbors: ids,
                reason: format!("location_id {dup} appears more than once"),
            });
            continue;
        }
        if let Some(&bad) = ids.iter().find(|id| !pool.contains(id)) {
            out.rejected.push(RejectedProposal {
                raw_neighbors: ids,
                reason: format!("location_id {bad} is not among the provided neighbors"),
            });
            continue;
        }
        out.proposals.push(Proposal {
            neighbors: ids,
            explanation,
        });
    }
    out
}

/// Render proposals in the exact output format the prompt requests.
/// Canonical form: numbered from 1, ids joined by `", "`, blocks separated
/// by one blank line.
pub fn render_proposals(proposals: &[Proposal]) -> String {
    proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!(
                "Proposal {}\nExplanation: {}\nNeighbors: [{}]",
                i + 1,
                p.explanation,
                join_ids(&p.neighbors)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PromptContext {
        PromptContext {
            target: 1201,
            n_proposals: 5,
            background: "We have a spatio-temporal dataset.".into(),
            target_details: "location_id=1201, historical_total_volume=2229867.".into(),
            neighbor_sections: vec![
                "- Nearest Neighbors Selected Based on Road Network Distance.\n1. location_id=1202".into(),
                "- Nearest Neighbors Selected Based on Temporal Pattern Similarity.\n1. location_id=1205".into(),
                "- Nearest Neighbors Selected Based on Geodetic Distance.\n1. location_id=1203".into(),
            ],
            candidate_summary: "- road: [1202]\n- pattern: [1205]\n- geodetic: [1203]".into(),
            road_ranked: vec![1202],
            pattern_ranked: vec![1205],
            geodetic_ranked: vec![1203],
        }
    }

    fn record(round: usize, idx: usize, mae: f64, ids: &[u32]) -> ExperimentRecord {
        ExperimentRecord {
            round,
            proposal_index: idx,
            proposal: Proposal {
                neighbors: ids.to_vec(),
                explanation: format!("uses {ids:?}"),
            },
            val_mae: mae,
            val_rmse: mae * 1.3,
            wall_secs: 0.0,
        }
    }

    #[test]
    fn initial_prompt_has_all_sections_in_order() {
        let t = TemplateSet::builtin();
        let p = build_initial_prompt(&ctx(), &t).unwrap();
        let mut last = 0;
        for marker in SECTION_MARKERS_INITIAL {
            let pos = p.find(marker).unwrap_or_else(|| panic!("missing {marker}"));
            assert!(pos >= last, "{marker} out of order");
            last = pos;
        }
        assert!(p.contains("location_id=1201"));
        assert!(p.contains("5 proposals"));
        // literal braces of the format block survive rendering
        assert!(p.contains("Proposal {proposal_number}"));
    }

    #[test]
    fn refinement_prompt_ranks_best_to_worst_and_renumbers() {
        let t = TemplateSet::builtin();
        let history = vec![
            record(1, 1, 9.5, &[1202]),
            record(1, 2, 7.419, &[1205, 1203]),
            record(2, 1, 8.1, &[1203]),
        ];
        let p = build_refinement_prompt(&ctx(), &history, 7.419, &t).unwrap();
        let mut last = 0;
        for marker in SECTION_MARKERS_REFINEMENT {
            let pos = p.find(marker).unwrap_or_else(|| panic!("missing {marker}"));
            assert!(pos >= last, "{marker} out of order");
            last = pos;
        }
        assert!(p.contains("Best performance achieved (Mean Absolute Error): 7.4190"));
        let e1 = p.find("## Experiment 1\nNeighbors: [1205, 1203]").unwrap();
        let e2 = p.find("## Experiment 2\nNeighbors: [1203]").unwrap();
        let e3 = p.find("## Experiment 3\nNeighbors: [1202]").unwrap();
        assert!(e1 < e2 && e2 < e3);
    }

    #[test]
    fn parse_accepts_well_formed_blocks() {
        let pool: BTreeSet<u32> = [1202, 1203, 1205].into();
        let text = "Some preamble.\n\nProposal 1\nExplanation: close on the road network\nNeighbors: [1202, 1203]\n\nProposal 2\nExplanation: similar pattern\nNeighbors: [1205]\n";
        let out = parse_proposals(text, &pool, 5);
        assert_eq!(out.proposals.len(), 2);
        assert_eq!(out.proposals[0].neighbors, vec![1202, 1203]);
        assert_eq!(out.proposals[1].explanation, "similar pattern");
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn parse_rejects_duplicates_out_of_pool_and_empty() {
        let pool: BTreeSet<u32> = [1202, 1203].into();
        let text = "Proposal 1\nExplanation: dup\nNeighbors: [1202, 1202]\n\nProposal 2\nExplanation: stranger\nNeighbors: [9999]\n\nProposal 3\nExplanation: empty\nNeighbors: []\n\nProposal 4\nExplanation: ok\nNeighbors: [1203]";
        let out = parse_proposals(text, &pool, 5);
        assert_eq!(out.proposals.len(), 1);
        assert_eq!(out.rejected.len(), 3);
        assert!(out.rejected[0].reason.contains("more than once"));
        assert!(out.rejected[1].reason.contains("9999"));
        assert!(out.rejected[2].reason.contains("no neighbors"));
    }

    #[test]
    fn parse_never_panics_on_garbage() {
        let pool: BTreeSet<u32> = [1].into();
        for text in [
            "",
            "Proposal",
            "Proposal 1\nNeighbors: [1]",
            "Proposal one\nExplanation: x\nNeighbors: [1]",
            "Proposal 1\nExplanation: x\nNeighbors: [1, 1e3]",
            "Neighbors: [1]\nExplanation: inverted\nProposal 1",
        ] {
            let out = parse_proposals(text, &pool, 3);
            assert!(out.proposals.len() <= 3, "{text:?}");
        }
    }

    #[test]
    fn render_parse_render_round_trips() {
        let pool: BTreeSet<u32> = (1..50).collect();
        let proposals = vec![
            Proposal {
                neighbors: vec![3, 1, 7],
                explanation: "mixes criteria".into(),
            },
            Proposal {
                neighbors: vec![42],
                explanation: "single strong pattern match".into(),
            },
        ];
        let rendered = render_proposals(&proposals);
        let parsed = parse_proposals(&rendered, &pool, 5);
        assert_eq!(parsed.proposals, proposals);
        assert_eq!(render_proposals(&parsed.proposals), rendered);
    }

    #[test]
    fn respects_expected_count() {
        let pool: BTreeSet<u32> = [1, 2, 3].into();
        let text = (1..=4)
            .map(|i| format!("Proposal {i}\nExplanation: e\nNeighbors: [{}]", i % 3 + 1))
            .collect::<Vec<_>>()
            .join("\n\n");
        let out = parse_proposals(&text, &pool, 2);
        assert_eq!(out.proposals.len(), 2);
    }
}
