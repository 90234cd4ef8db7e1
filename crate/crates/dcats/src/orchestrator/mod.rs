//! The experiment loop: foundation pretraining, proposal evaluation,
//! agent rounds with the strict-improvement stopping rule, baselines, and
//! run artifacts (traces, transcripts, reports).

mod config;
mod report;

pub use config::RunSettings;
pub use report::{emit_report, word_frequencies, ReportRow};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use crate::agent::{
    build_initial_prompt, build_refinement_prompt, parse_proposals, splitmix64, AgentBackend,
    ExperimentRecord, PromptContext, RoundInput, Transcript,
};
use crate::anomaly::{discord_scores, prune_anomalous};
use crate::error::{Error, Result};
use crate::forecast::{evaluate, fine_tune, init_model, train, EvalMetrics, Model};
use crate::metadata::{render_location, render_neighbor_entry, Annotation, MetadataDB};
use crate::neighbors::{
    build_neighbor_sets, NeighborConfig, NeighborKind, NeighborSets, RoadGraph,
};
use crate::templates::TemplateSet;
use crate::tsdata::{fit_scaler, make_windows, split, Scaler, SplitView, TimeSeriesStore, WindowSet};

/// Foundation-only and fine-tuned-on-everything reference scores for one
/// target location.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BaselineMetrics {
    pub foundation_val: EvalMetrics,
    pub foundation_test: EvalMetrics,
    pub all_data_val: EvalMetrics,
    pub all_data_test: EvalMetrics,
}

/// Outcome of one complete agent-driven query.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QueryResult {
    pub target: u32,
    pub backend: String,
    /// Agent rounds actually executed (1 initial + refinements).
    pub rounds_run: usize,
    /// Every evaluated proposal, in evaluation order.
    pub records: Vec<ExperimentRecord>,
    pub best: ExperimentRecord,
    /// Test metrics of the best proposal's model, measured exactly once;
    /// absent only in partial traces written after an agent failure.
    pub test: Option<EvalMetrics>,
    /// How many times the test split was touched during this query; the
    /// loop itself must never look at it, so this is always 1.
    pub test_evaluations: usize,
    /// The winning fine-tuned model; not serialized into traces.
    #[serde(skip)]
    pub best_model: Option<Model>,
}

/// Shared state for one dataset: caches are keyed so repeated queries and
/// strategies reuse the expensive artifacts.
pub struct Pipeline {
    pub store: TimeSeriesStore,
    pub db: MetadataDB,
    pub graph: RoadGraph,
    pub settings: RunSettings,
    pub split: SplitView,
    pub scaler: Scaler,
    pub templates: TemplateSet,
    foundation: Option<Model>,
    all_data_model: Option<Model>,
    neighbor_cache: BTreeMap<u32, NeighborSets>,
    discord_cache: BTreeMap<u32, Vec<f64>>,
    /// (target, sorted neighbor ids) -> (val MAE, val RMSE).
    memo: HashMap<(u32, Vec<u32>), (f64, f64)>,
}

impl Pipeline {
    pub fn new(
        store: TimeSeriesStore,
        mut db: MetadataDB,
        graph: RoadGraph,
        settings: RunSettings,
        templates: TemplateSet,
    ) -> Result<Self> {
        settings.validate()?;
        db.check_coverage(&store)?;
        let split = split(&store, (6, 2, 2))?;
        split.check_window_fit(settings.input_len, settings.horizon)?;
        db.fill_missing_volumes(&store, &split.train)?;
        let scaler = fit_scaler(&store, &split.train)?;
        Ok(Pipeline {
            store,
            db,
            graph,
            settings,
            split,
            scaler,
            templates,
            foundation: None,
            all_data_model: None,
            neighbor_cache: BTreeMap::new(),
            discord_cache: BTreeMap::new(),
            memo: HashMap::new(),
        })
    }

    fn all_location_ids(&self) -> Vec<u32> {
        self.store.location_ids().to_vec()
    }

    fn train_windows(&self, ids: &[u32]) -> Result<WindowSet> {
        make_windows(
            &self.store,
            &self.split.train,
            ids,
            self.settings.input_len,
            self.settings.horizon,
            self.settings.train_stride,
        )
    }

    fn eval_windows(&self, ids: &[u32], range: &std::ops::Range<usize>) -> Result<WindowSet> {
        make_windows(
            &self.store,
            range,
            ids,
            self.settings.input_len,
            self.settings.horizon,
            self.settings.eval_stride,
        )
    }

    /// Pretrain (or load from `cache_path`) the shared foundation model.
    pub fn foundation(&mut self, cache_path: Option<&Path>) -> Result<&Model> {
        if self.foundation.is_none() {
            let cfg = self.settings.model_config();
            if let Some(path) = cache_path {
                if path.exists() {
                    let model = Model::load(path)?;
                    if model.config == cfg {
                        eprintln!("reusing cached foundation model at {}", path.display());
                        self.foundation = Some(model);
                        return Ok(self.foundation.as_ref().unwrap());
                    }
                    eprintln!(
                        "cached foundation at {} has a different configuration; retraining",
                        path.display()
                    );
                }
            }
            let ids = self.all_location_ids();
            let train_ws = self.train_windows(&ids)?;
            let val_ws = self.eval_windows(&ids, &self.split.val.clone())?;
            let mut model = init_model(&cfg)?;
            train(
                &mut model,
                &self.store,
                &self.scaler,
                &train_ws,
                Some(&val_ws),
                &self.settings.pretrain_config(),
            )?;
            if let Some(path) = cache_path {
                model.save(path)?;
            }
            self.foundation = Some(model);
        }
        Ok(self.foundation.as_ref().unwrap())
    }

    /// Ranked neighbor lists for a target, computed once.
    pub fn neighbor_sets(&mut self, target: u32) -> Result<&NeighborSets> {
        if !self.neighbor_cache.contains_key(&target) {
            let cfg = NeighborConfig {
                k: self.settings.k,
                pattern_window: match self.settings.pattern_window {
                    0 => None,
                    w => Some(w),
                },
                pattern_suffix_cap: self.settings.pattern_suffix_cap,
            };
            let sets = build_neighbor_sets(
                &self.store,
                &self.db,
                &self.graph,
                target,
                &self.split.train,
                &cfg,
            )?;
            self.neighbor_cache.insert(target, sets);
        }
        Ok(&self.neighbor_cache[&target])
    }

    fn ensure_discord_scores(&mut self, ids: &[u32]) -> Result<()> {
        let missing: Vec<u32> = ids
            .iter()
            .copied()
            .filter(|id| !self.discord_cache.contains_key(id))
            .collect();
        if !missing.is_empty() {
            let scores = discord_scores(
                &self.store,
                &missing,
                &self.split.train,
                self.settings.mp_window,
            )?;
            self.discord_cache.extend(scores);
        }
        Ok(())
    }

    /// Pruned training windows for a sub-dataset.
    fn pruned_train_windows(&mut self, ids: &[u32]) -> Result<WindowSet> {
        self.ensure_discord_scores(ids)?;
        let windows = self.train_windows(ids)?;
        let scores: BTreeMap<u32, Vec<f64>> = ids
            .iter()
            .map(|id| (*id, self.discord_cache[id].clone()))
            .collect();
        prune_anomalous(
            &windows,
            &scores,
            &self.split.train,
            self.store.steps_per_day,
            self.settings.prune_fraction,
        )
    }

    /// Build everything the prompts and scripted backends need for a target.
    pub fn prompt_context(&mut self, target: u32) -> Result<PromptContext> {
        let background = self.db.background(&self.store, &self.templates)?;
        let target_details = render_location(&self.db, target, &self.templates)?;
        let sets = self.neighbor_sets(target)?.clone();

        let mut neighbor_sections = Vec::new();
        let mut summary_lines = Vec::new();
        for (kind, list) in [
            (NeighborKind::Road, &sets.road),
            (NeighborKind::Pattern, &sets.pattern),
            (NeighborKind::Geodetic, &sets.geodetic),
        ] {
            let template_key = match kind {
                NeighborKind::Road => "neighbor_set_road",
                NeighborKind::Pattern => "neighbor_set_pattern",
                NeighborKind::Geodetic => "neighbor_set_geodetic",
            };
            let mut section = self.templates.get(template_key)?.trim_end().to_string();
            for (i, entry) in list.iter().enumerate() {
                let annotation = match kind {
                    NeighborKind::Pattern => Annotation::Similarity(entry.value),
                    _ => Annotation::DistanceKm(entry.value),
                };
                let details =
                    render_neighbor_entry(&self.db, entry.location_id, annotation, &self.templates)?;
                section.push_str(&format!("\n{}. {details}", i + 1));
            }
            neighbor_sections.push(section);
            let ids: Vec<String> = list.iter().map(|e| e.location_id.to_string()).collect();
            summary_lines.push(format!("- {}: [{}]", kind.as_str(), ids.join(", ")));
        }

        Ok(PromptContext {
            target,
            n_proposals: self.settings.n_proposals,
            background,
            target_details,
            neighbor_sections,
            candidate_summary: summary_lines.join("\n"),
            road_ranked: sets.road.iter().map(|e| e.location_id).collect(),
            pattern_ranked: sets.pattern.iter().map(|e| e.location_id).collect(),
            geodetic_ranked: sets.geodetic.iter().map(|e| e.location_id).collect(),
        })
    }

    fn query_seed(&self, target: u32) -> u64 {
        self.settings.seed ^ splitmix64(0x7a67_0000 ^ target as u64)
    }

    /// Fine-tune seed derived from the proposal's content, not the round it
    /// appeared in: identical proposals always train identically.
    fn content_seed(&self, target: u32, sorted_ids: &[u32]) -> u64 {
        let mut h = self.query_seed(target);
        for &id in sorted_ids {
            h = splitmix64(h ^ id as u64);
        }
        h
    }

    /// Fine-tune the foundation on `target` plus the proposed neighbors and
    /// score it on the target's validation windows. A training failure
    /// scores as infinite error instead of aborting the query.
    /// Returns (val MAE, val RMSE, model if one was trained).
    fn evaluate_proposal(
        &mut self,
        target: u32,
        neighbor_ids: &[u32],
        foundation_cache: Option<&Path>,
    ) -> Result<(f64, f64, Option<Model>)> {
        let mut ids: Vec<u32> = neighbor_ids.to_vec();
        ids.push(target);
        ids.sort_unstable();
        ids.dedup();
        let key = (target, ids.clone());
        if let Some(&(mae, rmse)) = self.memo.get(&key) {
            return Ok((mae, rmse, None));
        }
        self.foundation(foundation_cache)?;
        let pruned = self.pruned_train_windows(&ids)?;
        let val_ws = self.eval_windows(&[target], &self.split.val.clone())?;
        let tc = self.settings.finetune_config(self.content_seed(target, &ids));
        let foundation = self.foundation.as_ref().unwrap();
        let outcome = fine_tune(foundation, &self.store, &self.scaler, &pruned, Some(&val_ws), &tc);
        let (mae, rmse, model) = match outcome {
            Ok((model, _)) => {
                let m = evaluate(&model, &self.store, &self.scaler, &val_ws)?;
                (m.mae, m.rmse, Some(model))
            }
            Err(Error::Train(msg)) => {
                // f64::MAX rather than infinity so traces stay valid JSON
                eprintln!("proposal {ids:?} failed to train ({msg}); scoring as worst possible");
                (f64::MAX, f64::MAX, None)
            }
            Err(e) => return Err(e),
        };
        self.memo.insert(key, (mae, rmse));
        Ok((mae, rmse, model))
    }

    /// Reference models and scores for a target. The all-data model is
    /// fine-tuned once and shared across targets.
    pub fn baselines_for(
        &mut self,
        target: u32,
        foundation_cache: Option<&Path>,
    ) -> Result<BaselineMetrics> {
        self.foundation(foundation_cache)?;
        if self.all_data_model.is_none() {
            let ids = self.all_location_ids();
            let pruned = self.pruned_train_windows(&ids)?;
            let val_ws = self.eval_windows(&ids, &self.split.val.clone())?;
            let tc = self.settings.finetune_config(self.settings.seed);
            let foundation = self.foundation.as_ref().unwrap();
            let (model, _) =
                fine_tune(foundation, &self.store, &self.scaler, &pruned, Some(&val_ws), &tc)?;
            self.all_data_model = Some(model);
        }
        let val_ws = self.eval_windows(&[target], &self.split.val.clone())?;
        let test_ws = self.eval_windows(&[target], &self.split.test.clone())?;
        let foundation = self.foundation.as_ref().unwrap();
        let all_data = self.all_data_model.as_ref().unwrap();
        Ok(BaselineMetrics {
            foundation_val: evaluate(foundation, &self.store, &self.scaler, &val_ws)?,
            foundation_test: evaluate(foundation, &self.store, &self.scaler, &test_ws)?,
            all_data_val: evaluate(all_data, &self.store, &self.scaler, &val_ws)?,
            all_data_test: evaluate(all_data, &self.store, &self.scaler, &test_ws)?,
        })
    }

    /// Run the full agent loop for one target: initial round, refinement
    /// rounds while the best validation MAE strictly improves, up to
    /// `max_rounds`. The test split is evaluated exactly once, at the end.
    ///
    /// With `workdir` set, writes `transcript_<target>.jsonl` as calls
    /// complete and `trace_<target>.json` at the end (also on agent
    /// failure, preserving whatever was evaluated).
    pub fn run_query(
        &mut self,
        backend: &mut dyn AgentBackend,
        target: u32,
        workdir: Option<&Path>,
        foundation_cache: Option<&Path>,
    ) -> Result<QueryResult> {
        let ctx = self.prompt_context(target)?;
        let pool = ctx.pool();
        if pool.is_empty() {
            return Err(Error::data(format!(
                "location {target} has no neighbor candidates"
            )));
        }
        let mut transcript = match workdir {
            Some(dir) => Some(Transcript::create(dir.join(format!(
                "transcript_{target}.jsonl"
            )))?),
            None => None,
        };

        let mut records: Vec<ExperimentRecord> = Vec::new();
        let mut best_mae = f64::INFINITY;
        let mut best_model: Option<Model> = None;
        let mut rounds_run = 0;

        for round in 1..=self.settings.max_rounds {
            rounds_run = round;
            let prompt = if round == 1 {
                build_initial_prompt(&ctx, &self.templates)?
            } else {
                build_refinement_prompt(&ctx, &records, best_mae, &self.templates)?
            };

            let outcome = {
                let input = RoundInput {
                    round,
                    prompt: &prompt,
                    ctx: &ctx,
                    history: &records,
                };
                let response = backend.respond(&input)?;
                if let Some(t) = transcript.as_mut() {
                    t.log(round, &prompt, &response, 1)?;
                }
                let parsed = parse_proposals(&response, &pool, ctx.n_proposals);
                if parsed.is_unusable() {
                    // one corrective re-prompt, then give up on the query
                    let reasons: Vec<String> =
                        parsed.rejected.iter().map(|r| r.reason.clone()).collect();
                    let correction = format!(
                        "{prompt}\n\n# Correction\nYour previous response could not be used ({}). \
                         Reply again using exactly the requested output format.",
                        if reasons.is_empty() {
                            "no proposals were found".to_string()
                        } else {
                            reasons.join("; ")
                        }
                    );
                    let input = RoundInput {
                        round,
                        prompt: &correction,
                        ctx: &ctx,
                        history: &records,
                    };
                    let response = backend.respond(&input)?;
                    if let Some(t) = transcript.as_mut() {
                        t.log(round, &correction, &response, 1)?;
                    }
                    let retried = parse_proposals(&response, &pool, ctx.n_proposals);
                    if retried.is_unusable() {
                        if let (Some(dir), Some(best)) = (workdir, select_best(&records)) {
                            // preserve what was evaluated before failing
                            let partial = QueryResult {
                                target,
                                backend: backend.name().to_string(),
                                rounds_run,
                                best: best.clone(),
                                records: records.clone(),
                                test: None,
                                test_evaluations: 0,
                                best_model: None,
                            };
                            write_trace(&partial, &dir.join(format!("trace_{target}.json")))?;
                        }
                        return Err(Error::agent(format!(
                            "backend `{}` produced no usable proposals for location {target} \
                             after a corrective re-prompt",
                            backend.name()
                        )));
                    }
                    retried
                } else {
                    parsed
                }
            };

            let mut round_improved = false;
            for (i, proposal) in outcome.proposals.iter().enumerate() {
                let t0 = Instant::now();
                let (mae, rmse, model) =
                    self.evaluate_proposal(target, &proposal.neighbors, foundation_cache)?;
                records.push(ExperimentRecord {
                    round,
                    proposal_index: i + 1,
                    proposal: proposal.clone(),
                    val_mae: mae,
                    val_rmse: rmse,
                    wall_secs: t0.elapsed().as_secs_f64(),
                });
                if mae < best_mae {
                    best_mae = mae;
                    if let Some(m) = model {
                        best_model = Some(m);
                    }
                    round_improved = true;
                }
            }
            if !round_improved {
                break;
            }
        }

        let best = select_best(&records)
            .ok_or_else(|| Error::agent("no proposals were evaluated"))?
            .clone();
        let best_model = best_model
            .ok_or_else(|| Error::Train("every proposal failed to train".into()))?;
        let test_ws = self.eval_windows(&[target], &self.split.test.clone())?;
        let test = evaluate(&best_model, &self.store, &self.scaler, &test_ws)?;

        let result = QueryResult {
            target,
            backend: backend.name().to_string(),
            rounds_run,
            records,
            best,
            test: Some(test),
            test_evaluations: 1,
            best_model: Some(best_model),
        };
        if let Some(dir) = workdir {
            write_trace(&result, &dir.join(format!("trace_{target}.json")))?;
        }
        Ok(result)
    }
}

/// The winning record: lowest validation MAE, ties broken by earlier round
/// then earlier position within the round.
pub fn select_best(records: &[ExperimentRecord]) -> Option<&ExperimentRecord> {
    records.iter().min_by(|a, b| {
        a.val_mae
            .total_cmp(&b.val_mae)
            .then(a.round.cmp(&b.round))
            .then(a.proposal_index.cmp(&b.proposal_index))
    })
}

/// Serialize a query result as pretty JSON. Wall-clock fields are skipped
/// by the record serializer, so identical runs write identical bytes.
pub fn write_trace(result: &QueryResult, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Load a previously written trace.
pub fn read_trace(path: &Path) -> Result<QueryResult> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
