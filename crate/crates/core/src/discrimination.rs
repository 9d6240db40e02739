//! Discriminative querying: shuffle candidates onto a labeled slate, ask
//! the model which labeled paths are correct (or incorrect), and parse
//! the replied labels into verdicts.
//!
//! Slates are reshuffled per query under fresh seeds so label-position
//! bias in the model cancels out across queries.

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::backend::{complete_batch, CompletionBackend, DecodeParams};
use crate::seeds::seeded_shuffle;
use crate::types::{
    CandidatePath, LabeledSlate, ParseStatus, Problem, Verdict, VerdictMode,
};

/// Closing sentence asking for the correct paths.
pub const DIRECT_CLOSING: &str = "Please output the correct ones.";
/// Closing sentence asking for the incorrect paths.
pub const INVERSE_CLOSING: &str = "Please output the incorrect ones.";
/// Fixed response-format instruction appended to both closings.
pub const ANSWER_FORMAT_SUFFIX: &str = "Respond with the letters only, comma-separated.";

#[derive(Debug, Error)]
pub enum DiscriminationError {
    #[error("cannot label {0} candidates: need between 2 and 26")]
    TooManyCandidates(usize),
}

/// Builds a slate for the candidates: labels are consecutive letters from
/// 'A' and the label→candidate permutation is a seeded Fisher–Yates
/// shuffle of the candidate indices. The same (candidates, seed) always
/// rebuilds the identical slate.
pub fn build_slate(
    candidates: &[CandidatePath],
    seed: u64,
) -> Result<LabeledSlate, DiscriminationError> {
    let k = candidates.len();
    if !(2..=26).contains(&k) {
        return Err(DiscriminationError::TooManyCandidates(k));
    }
    let labels: Vec<char> = (0..k).map(|i| (b'A' + i as u8) as char).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    seeded_shuffle(&mut perm, seed);
    Ok(LabeledSlate {
        labels,
        perm,
        seed: seed as i64,
    })
}

/// Renders the discriminative prompt: the problem, the labeled reasoning
/// paths in slate order, the mode's closing sentence, and the fixed
/// answer-format suffix.
pub fn render_discriminative_prompt(
    problem: &Problem,
    slate: &LabeledSlate,
    candidates: &[CandidatePath],
    mode: VerdictMode,
) -> String {
    let paths = slate
        .labels
        .iter()
        .zip(slate.perm.iter())
        .map(|(label, &idx)| format!("\"{label}: {}\"", candidates[idx].reasoning))
        .collect::<Vec<_>>()
        .join(", ");
    let closing = match mode {
        VerdictMode::Direct => DIRECT_CLOSING,
        VerdictMode::Inverse => INVERSE_CLOSING,
    };
    format!(
        "This problem \"{}\" has the following reasoning paths you generated: {paths}. \
{closing} {ANSWER_FORMAT_SUFFIX}",
        problem.statement
    )
}

static NONE_ASSERTION: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\bnone\b|\bno\s+correct\b|\bno\s+incorrect\b").unwrap());

fn label_token_regex(k: usize) -> Regex {
    let last = (b'A' + (k.max(1) - 1) as u8) as char;
    Regex::new(&format!(r"(?i)\b([A-{last}])\b")).expect("valid label class")
}

fn labels_on_line(line: &str, slate: &LabeledSlate, re: &Regex) -> std::collections::BTreeSet<char> {
    re.captures_iter(line)
        .map(|c| c[1].chars().next().unwrap().to_ascii_uppercase())
        .filter(|l| slate.labels.contains(l))
        .collect()
}

/// Parses a discriminative reply into a verdict.
///
/// Slate labels are matched as standalone word-bounded tokens,
/// case-insensitively; when several lines carry labels the final such
/// line wins (models often restate the paths before concluding). A reply
/// asserting that nothing qualifies ("none", "no correct", "no
/// incorrect") parses as `Empty`, which is vote-neutral rather than a
/// complement-everything assertion. Anything else without a label token
/// is `Unparseable`. Non-Ok verdicts infer no correct labels.
pub fn parse_verdict(raw: &str, slate: &LabeledSlate, mode: VerdictMode) -> Verdict {
    let re = label_token_regex(slate.labels.len());
    let selected = raw
        .lines()
        .rev()
        .map(|line| labels_on_line(line, slate, &re))
        .find(|labels| !labels.is_empty());
    if let Some(selected) = selected {
        return Verdict::from_selection(mode, raw, selected, &slate.labels, ParseStatus::Ok);
    }
    let answer_line = raw.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
    let status = if NONE_ASSERTION.is_match(answer_line) {
        ParseStatus::Empty
    } else {
        ParseStatus::Unparseable
    };
    Verdict::from_selection(mode, raw, Default::default(), &slate.labels, status)
}

/// Runs `n_queries` independent discriminative queries for one problem in
/// one mode. Query `i` shuffles its slate with seed `base_seed + i`. A
/// backend failure on a query becomes an `Unparseable` verdict rather
/// than aborting the rest.
pub async fn run_discrimination<B: CompletionBackend + ?Sized>(
    problem: &Problem,
    candidates: &[CandidatePath],
    mode: VerdictMode,
    n_queries: usize,
    backend: &B,
    params: &DecodeParams,
    base_seed: u64,
    parallelism: usize,
) -> Result<Vec<(LabeledSlate, Verdict)>, DiscriminationError> {
    let mut slates = Vec::with_capacity(n_queries);
    let mut prompts = Vec::with_capacity(n_queries);
    for query in 0..n_queries {
        let slate = build_slate(candidates, base_seed.wrapping_add(query as u64))?;
        prompts.push(render_discriminative_prompt(problem, &slate, candidates, mode));
        slates.push(slate);
    }
    let replies = complete_batch(backend, &prompts, params, parallelism).await;
    let pairs = slates
        .into_iter()
        .zip(replies)
        .map(|(slate, reply)| {
            let verdict = match reply {
                Ok(raw) => parse_verdict(&raw, &slate, mode),
                Err(e) => Verdict::from_selection(
                    mode,
                    format!("<backend error: {e}>"),
                    Default::default(),
                    &slate.labels,
                    ParseStatus::Unparseable,
                ),
            };
            (slate, verdict)
        })
        .collect();
    Ok(pairs)
}
