//! Experiment orchestration: for every problem × run index, sample
//! candidates, run the enabled baselines and discriminative queries,
//! score every method, and append one record to the run store.
//!
//! Tasks fan out over a bounded worker pool but complete in task order,
//! so the records file is written deterministically and an interrupted
//! file is always a prefix of the uninterrupted one (which is what makes
//! resume produce identical final files).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use thiserror::Error;

use crate::aggregation::{
    hybrid_answer, self_consistency_vote, single_mode_answer, universal_self_consistency,
};
use crate::backend::{CompletionBackend, DecodeParams};
use crate::config::ExperimentConfig;
use crate::dataset::DatasetManifest;
use crate::discrimination::{run_discrimination, DiscriminationError};
use crate::generation::{generate_candidates, GenerationError};
use crate::metrics::score_chosen;
use crate::seeds::derive_seed;
use crate::store::{RunHeader, RunStore, StoreError};
use crate::types::{Method, MethodResult, Problem, RunRecord, VerdictMode};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Discrimination(#[from] DiscriminationError),
    #[error("candidate generation failed: {0}")]
    Generation(#[from] GenerationError),
}

/// Everything a run needs, already loaded and constructed.
pub struct ExperimentEnv {
    pub config: ExperimentConfig,
    pub problems: Vec<Problem>,
    pub manifest: DatasetManifest,
    pub generator: Arc<dyn CompletionBackend>,
    pub discriminator: Arc<dyn CompletionBackend>,
}

impl ExperimentEnv {
    /// Methods to score, in canonical order.
    pub fn enabled_methods(&self) -> Vec<Method> {
        Method::ALL
            .iter()
            .copied()
            .filter(|m| self.config.experiment.methods.contains(m))
            .collect()
    }

    fn generation_params(&self) -> DecodeParams {
        DecodeParams::new(
            &self.config.backend.model,
            self.config.experiment.gen_temperature,
            self.config.experiment.max_tokens,
        )
    }

    fn judge_params(&self) -> DecodeParams {
        let section = self.config.discriminator.as_ref().unwrap_or(&self.config.backend);
        DecodeParams::new(
            &section.model,
            self.config.experiment.judge_temperature,
            self.config.experiment.max_tokens,
        )
    }
}

/// Emitted after each record is persisted.
#[derive(Debug, Clone)]
pub struct ProgressEvent {
    pub run_index: u32,
    pub problem_id: String,
    pub completed: usize,
    pub total: usize,
    /// Running accuracy per enabled method over the records written so
    /// far in this invocation.
    pub running_accuracy: Vec<(Method, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records_path: PathBuf,
    pub written: usize,
    pub skipped: usize,
}

/// Runs the experiment, appending one record per (problem, run) to
/// `records_path`. With `resume`, records already present are skipped and
/// the header must match. Partial progress is always persisted.
pub async fn run_experiment(
    env: &ExperimentEnv,
    records_path: &Path,
    resume: bool,
    mut on_progress: impl FnMut(ProgressEvent),
) -> Result<RunOutcome, PipelineError> {
    let header = RunHeader::new(env.config.clone(), env.manifest.clone());
    let (mut store, done) = if resume {
        RunStore::open_resume(records_path, &header)?
    } else {
        (RunStore::create(records_path, &header)?, BTreeSet::new())
    };

    let tasks: Vec<(u32, &Problem)> = (0..env.config.experiment.runs)
        .flat_map(|run| env.problems.iter().map(move |p| (run, p)))
        .filter(|(run, p)| !done.contains(&(p.id.clone(), *run)))
        .collect();
    let total = tasks.len();
    let skipped = done.len();

    let mut tallies: BTreeMap<Method, (u32, u32)> = BTreeMap::new();
    let mut completed = 0usize;
    let mut records = stream::iter(
        tasks
            .into_iter()
            .map(|(run, problem)| process_problem(env, problem, run)),
    )
    .buffered(env.config.experiment.workers.max(1));

    while let Some(record) = records.next().await {
        let record = record?;
        store.append(&record)?;
        completed += 1;
        for result in &record.results {
            let entry = tallies.entry(result.method).or_insert((0, 0));
            entry.1 += 1;
            entry.0 += u32::from(result.correct);
        }
        on_progress(ProgressEvent {
            run_index: record.run_index,
            problem_id: record.problem_id.clone(),
            completed,
            total,
            running_accuracy: tallies
                .iter()
                .map(|(m, (c, t))| (*m, *c as f64 / *t as f64 * 100.0))
                .collect(),
        });
    }

    Ok(RunOutcome {
        records_path: records_path.to_path_buf(),
        written: completed,
        skipped,
    })
}

async fn process_problem(
    env: &ExperimentEnv,
    problem: &Problem,
    run_index: u32,
) -> Result<RunRecord, PipelineError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let exp = &env.config.experiment;
    let run_tag = run_index.to_string();
    let enabled = env.enabled_methods();
    let needs = |m: Method| enabled.contains(&m);
    let need_direct = needs(Method::Direct) || needs(Method::Hybrid);
    let need_inverse = needs(Method::Inverse) || needs(Method::Hybrid);
    let parallelism = env.config.backend.parallelism;

    let gen_params = env
        .generation_params()
        .with_seed(derive_seed(exp.seed, &[&problem.id, &run_tag, "generate"]) as i64);
    // Partial per-candidate failures become answerless slots inside
    // generate_candidates; a fully failed generation means the backend is
    // down (or rejecting credentials) and aborts the run. Everything
    // appended so far stays on disk.
    let candidates = generate_candidates(
        problem,
        exp.k,
        env.generator.as_ref(),
        &gen_params,
        parallelism,
    )
    .await?;

    let judge_params = env.judge_params();
    let direct_pairs = if need_direct {
        run_discrimination(
            problem,
            &candidates,
            VerdictMode::Direct,
            exp.n_queries,
            env.discriminator.as_ref(),
            &judge_params,
            derive_seed(exp.seed, &[&problem.id, &run_tag, "direct"]),
            parallelism,
        )
        .await?
    } else {
        Vec::new()
    };
    let inverse_pairs = if need_inverse {
        run_discrimination(
            problem,
            &candidates,
            VerdictMode::Inverse,
            exp.n_queries,
            env.discriminator.as_ref(),
            &judge_params,
            derive_seed(exp.seed, &[&problem.id, &run_tag, "inverse"]),
            parallelism,
        )
        .await?
    } else {
        Vec::new()
    };

    let mut results = Vec::with_capacity(enabled.len());
    for method in &enabled {
        let (chosen, agreement, conflict) = match method {
            Method::Cot => (candidates[0].answer.clone(), None, None),
            Method::SelfConsistency => (self_consistency_vote(&candidates), None, None),
            Method::UniversalSc => (
                universal_self_consistency(
                    problem,
                    &candidates,
                    env.discriminator.as_ref(),
                    &judge_params,
                )
                .await,
                None,
                None,
            ),
            Method::Direct => (single_mode_answer(&direct_pairs, &candidates), None, None),
            Method::Inverse => (single_mode_answer(&inverse_pairs, &candidates), None, None),
            Method::Hybrid => {
                let (answer, agreement, conflict) =
                    hybrid_answer(&direct_pairs, &inverse_pairs, &candidates);
                (answer, Some(agreement), Some(conflict))
            }
        };
        let correct = score_chosen(chosen.as_deref(), problem);
        results.push(MethodResult {
            method: *method,
            chosen,
            correct,
            agreement,
            conflict,
        });
    }

    let mut slates = Vec::with_capacity(direct_pairs.len() + inverse_pairs.len());
    let mut verdicts = Vec::with_capacity(slates.capacity());
    for (slate, verdict) in direct_pairs.into_iter().chain(inverse_pairs) {
        slates.push(slate);
        verdicts.push(verdict);
    }

    Ok(RunRecord {
        problem_id: problem.id.clone(),
        run_index,
        candidates,
        slates,
        verdicts,
        results,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    })
}
