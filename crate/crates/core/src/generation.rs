//! Candidate sampling: renders the step-by-step prompt for a problem,
//! samples k reasoning paths, and extracts each path's final answer.

use futures::stream::{self, StreamExt};
use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, DecodeParams};
use crate::dataset::last_boxed_content;
use crate::normalize::normalize_answer;
use crate::types::{CandidateMeta, CandidatePath, Dataset, Problem};

/// Prompt template for open-ended problems; the model must return its
/// answer in the dataset's own `\boxed{...}` format.
pub const COT_MATH_TEMPLATE: &str = "Solve the following math problem. Reason step by step, \
and end your response with the final answer in the format \\boxed{answer}.\n\nProblem: ";

/// Prompt template for multiple-choice problems; the model must end with
/// `Answer: <letter>`.
pub const COT_MATHQA_TEMPLATE: &str = "Solve the following multiple-choice math problem. \
Reason step by step, and end your response with \"Answer: <letter>\" where <letter> is \
the letter of the correct option.\n\nProblem: ";

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("all {k} candidate completions failed; first error: {first}")]
    AllCallsFailed { k: usize, first: BackendError },
}

/// Renders the chain-of-thought prompt for one problem. Deterministic:
/// the same problem always yields the same text.
pub fn render_cot_prompt(problem: &Problem) -> String {
    match problem.dataset {
        Dataset::Math => format!("{COT_MATH_TEMPLATE}{}", problem.statement),
        Dataset::MathQa => {
            let mut prompt = format!("{COT_MATHQA_TEMPLATE}{}\nOptions:\n", problem.statement);
            if let Some(options) = &problem.options {
                for (letter, text) in options {
                    prompt.push_str(&format!("({letter}) {text}\n"));
                }
            }
            prompt
        }
    }
}

static MATHQA_ANSWER: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\banswer\b\s*(?:is|:|=|-)?\s*\**\(?\s*([a-eA-E])\)?\b").unwrap()
});
static TRAILING_LETTER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\b([a-e])\W*$").unwrap());

/// Extracts and normalizes the final answer from a reasoning path.
/// MATH: content of the last balanced `\boxed{...}`. MathQA: the letter
/// after the last "answer" marker, or a standalone trailing letter.
/// Absence is a value, not an error.
pub fn extract_answer(text: &str, dataset: Dataset) -> Option<String> {
    match dataset {
        Dataset::Math => {
            last_boxed_content(text).and_then(|content| normalize_answer(&content, dataset))
        }
        Dataset::MathQa => {
            if let Some(caps) = MATHQA_ANSWER.captures_iter(text).last() {
                return normalize_answer(&caps[1], dataset);
            }
            TRAILING_LETTER
                .captures(text.trim_end())
                .and_then(|caps| normalize_answer(&caps[1], dataset))
        }
    }
}

/// Samples `k` reasoning paths for one problem, at most `parallelism` in
/// flight. Every slot is filled: a failed call yields a candidate with
/// empty reasoning and no answer. Candidate `i` gets seed
/// `params.seed.unwrap_or(0) + i` so repeated samples of one prompt stay
/// distinguishable on seed-honoring backends, and uses `i` as its cache
/// attempt index.
pub async fn generate_candidates<B: CompletionBackend + ?Sized>(
    problem: &Problem,
    k: usize,
    backend: &B,
    params: &DecodeParams,
    parallelism: usize,
) -> Result<Vec<CandidatePath>, GenerationError> {
    debug_assert!(k >= 2, "need at least two candidates");
    let prompt = render_cot_prompt(problem);
    let base_seed = params.seed.unwrap_or(0);
    let completions: Vec<(i64, Result<String, BackendError>)> =
        stream::iter((0..k).map(|i| {
            let prompt = &prompt;
            let seed = base_seed.wrapping_add(i as i64);
            let call_params = params.clone().with_seed(seed);
            async move { (seed, backend.complete(prompt, &call_params, i as u32).await) }
        }))
        .buffered(parallelism.max(1))
        .collect()
        .await;

    let mut first_error = None;
    let mut failures = 0usize;
    let candidates: Vec<CandidatePath> = completions
        .into_iter()
        .enumerate()
        .map(|(index, (seed, outcome))| {
            let reasoning = match outcome {
                Ok(text) => text,
                Err(e) => {
                    failures += 1;
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                    String::new()
                }
            };
            let answer = if reasoning.is_empty() {
                None
            } else {
                extract_answer(&reasoning, problem.dataset)
            };
            CandidatePath {
                index,
                reasoning,
                answer,
                meta: CandidateMeta {
                    temperature: params.temperature,
                    seed,
                    backend_id: backend.id().to_string(),
                },
            }
        })
        .collect();

    if failures == k {
        return Err(GenerationError::AllCallsFailed {
            k,
            first: first_error.expect("k>0 failures imply an error"),
        });
    }
    Ok(candidates)
}
