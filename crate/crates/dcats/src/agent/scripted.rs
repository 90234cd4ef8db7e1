//! Deterministic offline backends. Each is a pure function of the prompt
//! context, the evaluated history, the round number, and its seed, so runs
//! replay exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    render_proposals, splitmix64, AgentBackend, Proposal, RoundInput,
};
use crate::error::Result;

/// How the scripted backend picks neighbors.
#[derive(Debug, Clone)]
pub enum ScriptedStrategy {
    /// Knows the true cluster labels and proposes same-cluster candidates.
    Oracle(BTreeMap<u32, usize>),
    /// Trusts the pattern-similarity ranking; the first proposal is exactly
    /// the top-k pattern neighbors in ranked order.
    GreedyPattern,
    /// Uniform subsets of the candidate pool, of the given size.
    Random { size: usize },
    /// Returns the identical response every round; useful for exercising
    /// the loop's stopping rule.
    Repeat,
}

impl ScriptedStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            ScriptedStrategy::Oracle(_) => "oracle",
            ScriptedStrategy::GreedyPattern => "greedy",
            ScriptedStrategy::Random { .. } => "random",
            ScriptedStrategy::Repeat => "repeat",
        }
    }
}

/// An offline [`AgentBackend`] driven by a [`ScriptedStrategy`].
#[derive(Debug)]
pub struct ScriptedBackend {
    strategy: ScriptedStrategy,
    seed: u64,
}

impl ScriptedBackend {
    pub fn new(strategy: ScriptedStrategy, seed: u64) -> Self {
        ScriptedBackend { strategy, seed }
    }

    fn round_rng(&self, input: &RoundInput<'_>) -> ChaCha8Rng {
        let seed = self.seed
            ^ splitmix64(input.ctx.target as u64)
            ^ splitmix64(0x5eed_0000 + input.round as u64);
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn oracle_proposals(
        &self,
        labels: &BTreeMap<u32, usize>,
        input: &RoundInput<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Proposal> {
        let pool = input.ctx.pool();
        let target_cluster = labels.get(&input.ctx.target).copied();
        let mates: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|id| labels.get(id).copied() == target_cluster && target_cluster.is_some())
            .collect();
        let others: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|id| !mates.contains(id))
            .collect();
        let mut proposals = Vec::new();
        if !mates.is_empty() {
            proposals.push(Proposal {
                neighbors: mates.clone(),
                explanation: "All candidates whose series share the target's daily profile."
                    .into(),
            });
        }
        while proposals.len() < input.ctx.n_proposals {
            // same-cluster subsets of varying size, occasionally salted
            // with one outsider so the loop has contrast to learn from
            let mut ids: Vec<u32> = if mates.is_empty() {
                sample(&pool.iter().copied().collect::<Vec<_>>(), 3, rng)
            } else {
                let size = rng.gen_range(1..=mates.len());
                sample(&mates, size, rng)
            };
            if !others.is_empty() && rng.gen_bool(0.3) {
                let extra = others[rng.gen_range(0..others.len())];
                if !ids.contains(&extra) {
                    ids.push(extra);
                }
            }
            if ids.is_empty() {
                continue;
            }
            proposals.push(Proposal {
                neighbors: ids,
                explanation: "A subset of profile-matched candidates.".into(),
            });
        }
        proposals
    }

    fn greedy_proposals(&self, input: &RoundInput<'_>, rng: &mut ChaCha8Rng) -> Vec<Proposal> {
        let ranked = &input.ctx.pattern_ranked;
        let pool: Vec<u32> = input.ctx.pool().into_iter().collect();
        let mut proposals = Vec::new();
        if input.round == 1 && !ranked.is_empty() {
            proposals.push(Proposal {
                neighbors: ranked.clone(),
                explanation: "The full pattern-similarity ranking, best first.".into(),
            });
        }
        while proposals.len() < input.ctx.n_proposals {
            let base = if ranked.is_empty() { &pool } else { ranked };
            if base.is_empty() {
                break;
            }
            let size = rng.gen_range(1..=base.len().min(6));
            // bias toward the head of the ranking
            let cut = base.len().min(size + rng.gen_range(0..=2));
            let ids = sample(&base[..cut], size, rng);
            proposals.push(Proposal {
                neighbors: ids,
                explanation: "Top pattern matches with a little variety.".into(),
            });
        }
        proposals
    }

    fn random_proposals(
        &self,
        size: usize,
        input: &RoundInput<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Proposal> {
        let pool: Vec<u32> = input.ctx.pool().into_iter().collect();
        (0..input.ctx.n_proposals)
            .map(|_| Proposal {
                neighbors: sample(&pool, size.min(pool.len()).max(1), rng),
                explanation: "An arbitrary mix of candidates.".into(),
            })
            .collect()
    }

    /// Refinement rounds: keep the incumbent best proposal and mutate it by
    /// swapping one id, plus fresh strategy-specific proposals.
    fn refine(&self, input: &RoundInput<'_>, mut fresh: Vec<Proposal>) -> Vec<Proposal> {
        let best = input
            .history
            .iter()
            .min_by(|a, b| a.val_mae.total_cmp(&b.val_mae));
        let Some(best) = best else { return fresh };
        let mut rng = self.round_rng(input);
        let pool: Vec<u32> = input.ctx.pool().into_iter().collect();
        let mut mutated = best.proposal.neighbors.clone();
        let unused: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|id| !mutated.contains(id))
            .collect();
        if !mutated.is_empty() && !unused.is_empty() {
            let slot = rng.gen_range(0..mutated.len());
            mutated[slot] = unused[rng.gen_range(0..unused.len())];
        }
        let mut out = vec![
            best.proposal.clone(),
            Proposal {
                neighbors: mutated,
                explanation: "The best proposal so far with one id swapped.".into(),
            },
        ];
        fresh.truncate(input.ctx.n_proposals.saturating_sub(out.len()));
        out.append(&mut fresh);
        out
    }
}

fn sample(base: &[u32], size: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut ids: Vec<u32> = base.to_vec();
    ids.shuffle(rng);
    ids.truncate(size.max(1).min(ids.len()));
    // keep output sets canonical so identical selections compare equal
    ids.sort_unstable();
    ids
}

impl AgentBackend for ScriptedBackend {
    fn name(&self) -> &str {
        self.strategy.name()
    }

    fn respond(&mut self, input: &RoundInput<'_>) -> Result<String> {
        let mut rng = self.round_rng(input);
        let proposals = match &self.strategy {
            ScriptedStrategy::Repeat => {
                // same bytes every round regardless of history
                let mut fixed = self.round_rng(&RoundInput {
                    round: 1,
                    prompt: input.prompt,
                    ctx: input.ctx,
                    history: &[],
                });
                let pool: Vec<u32> = input.ctx.pool().into_iter().collect();
                (0..input.ctx.n_proposals)
                    .map(|_| Proposal {
                        neighbors: sample(&pool, 3, &mut fixed),
                        explanation: "The same fixed selection every round.".into(),
                    })
                    .collect()
            }
            ScriptedStrategy::Oracle(labels) => {
                let fresh = self.oracle_proposals(labels, input, &mut rng);
                if input.round > 1 {
                    self.refine(input, fresh)
                } else {
                    fresh
                }
            }
            ScriptedStrategy::GreedyPattern => {
                let fresh = self.greedy_proposals(input, &mut rng);
                if input.round > 1 {
                    self.refine(input, fresh)
                } else {
                    fresh
                }
            }
            ScriptedStrategy::Random { size } => {
                let fresh = self.random_proposals(*size, input, &mut rng);
                if input.round > 1 {
                    self.refine(input, fresh)
                } else {
                    fresh
                }
            }
        };
        // drop ids duplicated within a proposal defensively; the parser
        // would reject them and scripted runs must never need re-prompts
        let proposals: Vec<Proposal> = proposals
            .into_iter()
            .map(|mut p| {
                let mut seen = BTreeSet::new();
                p.neighbors.retain(|id| seen.insert(*id));
                p
            })
            .filter(|p| !p.neighbors.is_empty())
            .collect();
        Ok(render_proposals(&proposals))
    }
}
