//! The proposing agent: prompt construction, response parsing, and the
//! backends that produce responses (scripted stand-ins or an LLM endpoint).
//!
//! Every backend speaks plain text in the proposal format, so scripted and
//! LLM backends exercise the identical render/parse path.

mod llm;
mod prompt;
mod scripted;

pub use llm::{complete, ChatTransport, HttpTransport, LlmBackend, RetryConfig};
pub use prompt::{
    build_initial_prompt, build_refinement_prompt, parse_proposals, render_proposals,
    ParseOutcome, RejectedProposal, SECTION_MARKERS_INITIAL, SECTION_MARKERS_REFINEMENT,
};
pub use scripted::{ScriptedBackend, ScriptedStrategy};

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;

use crate::error::Result;

/// One candidate sub-dataset: the auxiliary locations to train with, plus
/// the agent's stated rationale.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Proposal {
    pub neighbors: Vec<u32>,
    pub explanation: String,
}

/// Everything prompt construction and scripted backends need to know about
/// one query, precomputed by the orchestrator.
#[derive(Debug, Clone)]
pub struct PromptContext {
    pub target: u32,
    pub n_proposals: usize,
    /// Shared dataset description (first prompt section).
    pub background: String,
    /// Rendered metadata sentence for the target location.
    pub target_details: String,
    /// Fully rendered neighbor-set sections, one per retrieval criterion.
    pub neighbor_sections: Vec<String>,
    /// Compact per-criterion candidate id lists for refinement prompts.
    pub candidate_summary: String,
    /// Ranked candidate ids per criterion (best first).
    pub road_ranked: Vec<u32>,
    pub pattern_ranked: Vec<u32>,
    pub geodetic_ranked: Vec<u32>,
}

impl PromptContext {
    /// Union of ids the agent is allowed to propose.
    pub fn pool(&self) -> BTreeSet<u32> {
        self.road_ranked
            .iter()
            .chain(&self.pattern_ranked)
            .chain(&self.geodetic_ranked)
            .copied()
            .collect()
    }
}

/// The measured outcome of fine-tuning on one proposal.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentRecord {
    /// 1-based agent round the proposal came from.
    pub round: usize,
    /// 1-based position within that round's response.
    pub proposal_index: usize,
    pub proposal: Proposal,
    pub val_mae: f64,
    pub val_rmse: f64,
    /// Wall-clock is environment noise, so it never enters serialized
    /// traces; byte-identical runs must produce byte-identical files.
    #[serde(skip)]
    pub wall_secs: f64,
}

/// What a backend sees when asked for one round of proposals.
#[derive(Debug)]
pub struct RoundInput<'a> {
    /// 1-based round number; round 1 uses the initial prompt.
    pub round: usize,
    pub prompt: &'a str,
    pub ctx: &'a PromptContext,
    /// All evaluated records so far, in evaluation order.
    pub history: &'a [ExperimentRecord],
}

/// A source of proposal-format responses.
pub trait AgentBackend {
    fn name(&self) -> &str;

    /// Produce the raw response text for one round.
    fn respond(&mut self, input: &RoundInput<'_>) -> Result<String>;
}

/// Append-only JSONL log of every completed agent call.
#[derive(Debug)]
pub struct Transcript {
    path: PathBuf,
}

#[derive(serde::Serialize)]
struct TranscriptEntry<'a> {
    timestamp: String,
    round: usize,
    prompt: &'a str,
    response: &'a str,
    attempt_count: usize,
}

impl Transcript {
    pub fn create(path: PathBuf) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::File::create(&path)?; // truncate any previous run
        Ok(Transcript { path })
    }

    pub fn path(&self) -> &std::path::Path {
        &self.path
    }

    /// Record one completed call (written only after the call succeeds).
    pub fn log(
        &mut self,
        round: usize,
        prompt: &str,
        response: &str,
        attempt_count: usize,
    ) -> Result<()> {
        let entry = TranscriptEntry {
            timestamp: unix_timestamp(),
            round,
            prompt,
            response,
            attempt_count,
        };
        let mut f = std::fs::OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", serde_json::to_string(&entry)?)?;
        Ok(())
    }
}

fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{secs}")
}

/// SplitMix64 finalizer; used to derive independent seeds from one master.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
