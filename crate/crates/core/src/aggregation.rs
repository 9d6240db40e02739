//! Turning candidates and verdicts into final answers.
//!
//! Self-consistency majority-votes the candidates' own answers. The
//! discriminative methods pool label votes from verdicts instead: every
//! label a verdict infers correct contributes one vote to the answer of
//! the candidate behind that label, and the answer with the most votes
//! wins. Ties break by self-consistency count, then lexicographically,
//! so selection is fully deterministic.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;

use crate::backend::{CompletionBackend, DecodeParams};
use crate::types::{CandidatePath, LabeledSlate, ParseStatus, Problem, Verdict};

/// Vote counts per normalized answer. Candidates without an answer never
/// appear as keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoteTally {
    votes: BTreeMap<String, u32>,
    total: u32,
}

impl VoteTally {
    pub fn add(&mut self, answer: &str) {
        *self.votes.entry(answer.to_string()).or_default() += 1;
        self.total += 1;
    }

    pub fn votes(&self) -> &BTreeMap<String, u32> {
        &self.votes
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// The winning answer: most votes, then the highest self-consistency
    /// count among the candidates, then the lexicographically smallest
    /// answer. `None` when no votes were cast.
    pub fn argmax(&self, candidates: &[CandidatePath]) -> Option<String> {
        let sc_count = |answer: &str| {
            candidates
                .iter()
                .filter(|c| c.answer.as_deref() == Some(answer))
                .count()
        };
        let mut best: Option<(&str, u32, usize)> = None;
        // Ascending key order makes the lexicographically smallest answer
        // win ties without an explicit comparison.
        for (answer, &votes) in &self.votes {
            let sc = sc_count(answer);
            let better = match best {
                None => true,
                Some((_, best_votes, best_sc)) => {
                    votes > best_votes || (votes == best_votes && sc > best_sc)
                }
            };
            if better {
                best = Some((answer, votes, sc));
            }
        }
        best.map(|(answer, _, _)| answer.to_string())
    }
}

/// Majority vote over the candidates' extracted answers. Ties go to the
/// answer whose earliest candidate index is smallest; `None` when no
/// candidate has an answer.
pub fn self_consistency_vote(candidates: &[CandidatePath]) -> Option<String> {
    let mut counts: BTreeMap<&str, (u32, usize)> = BTreeMap::new();
    for candidate in candidates {
        if let Some(answer) = &candidate.answer {
            let entry = counts.entry(answer).or_insert((0, candidate.index));
            entry.0 += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|(_, (votes_a, first_a)), (_, (votes_b, first_b))| {
            votes_a.cmp(votes_b).then(first_b.cmp(first_a))
        })
        .map(|(answer, _)| answer.to_string())
}

/// Preamble of the consistency-selection prompt.
pub const USC_PREAMBLE: &str = "I have generated the following responses to the problem: ";
/// Closing instruction of the consistency-selection prompt.
pub const USC_CLOSING: &str = "Evaluate these responses and select the most consistent \
response based on majority consensus. Respond with the letter of the selected response only.";

/// Renders the prompt asking the model to pick the most consistent
/// response. Responses are listed in candidate order, unshuffled.
pub fn render_usc_prompt(problem: &Problem, candidates: &[CandidatePath]) -> String {
    let mut prompt = format!("{USC_PREAMBLE}\"{}\"\n", problem.statement);
    for candidate in candidates {
        let label = (b'A' + candidate.index as u8) as char;
        prompt.push_str(&format!("\nResponse {label}: {}\n", candidate.reasoning));
    }
    prompt.push('\n');
    prompt.push_str(USC_CLOSING);
    prompt
}

static USC_LABEL: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)\b([A-Z])\b").unwrap());

/// Asks the model to select the most consistent response and returns the
/// selected candidate's answer. Falls back to the plain majority vote
/// when the reply does not parse to exactly one in-range label.
pub async fn universal_self_consistency<B: CompletionBackend + ?Sized>(
    problem: &Problem,
    candidates: &[CandidatePath],
    backend: &B,
    params: &DecodeParams,
) -> Option<String> {
    debug_assert!(candidates.len() >= 2);
    let prompt = render_usc_prompt(problem, candidates);
    let reply = match backend.complete(&prompt, params, 0).await {
        Ok(text) => text,
        Err(_) => return self_consistency_vote(candidates),
    };
    match parse_usc_selection(&reply, candidates.len()) {
        Some(index) => candidates[index].answer.clone(),
        None => self_consistency_vote(candidates),
    }
}

/// Parses the selection reply: the final label-bearing line must name
/// exactly one label within range.
fn parse_usc_selection(reply: &str, k: usize) -> Option<usize> {
    let in_range = |c: char| {
        let idx = (c.to_ascii_uppercase() as u8).wrapping_sub(b'A') as usize;
        (idx < k).then_some(idx)
    };
    let labels: Vec<usize> = reply
        .lines()
        .rev()
        .map(|line| {
            USC_LABEL
                .captures_iter(line)
                .filter_map(|c| in_range(c[1].chars().next().unwrap()))
                .collect::<Vec<_>>()
        })
        .find(|v| !v.is_empty())?;
    match labels.as_slice() {
        [only] => Some(*only),
        _ => None,
    }
}

/// Pools label votes from (slate, verdict) pairs: each inferred-correct
/// label votes for the answer of the candidate it maps to; labels over
/// answerless candidates contribute nothing.
pub fn tally_votes(pairs: &[(LabeledSlate, Verdict)], candidates: &[CandidatePath]) -> VoteTally {
    let mut tally = VoteTally::default();
    for (slate, verdict) in pairs {
        for &label in &verdict.inferred_correct {
            let Some(index) = slate.candidate_for(label) else {
                continue;
            };
            if let Some(answer) = candidates.get(index).and_then(|c| c.answer.as_deref()) {
                tally.add(answer);
            }
        }
    }
    tally
}

/// Final answer for one discriminative mode: argmax over the pooled vote
/// tally of that mode's verdicts. All verdicts must share one mode.
pub fn single_mode_answer(
    pairs: &[(LabeledSlate, Verdict)],
    candidates: &[CandidatePath],
) -> Option<String> {
    debug_assert!(
        pairs.windows(2).all(|w| w[0].1.mode == w[1].1.mode),
        "mixed modes in single_mode_answer"
    );
    tally_votes(pairs, candidates).argmax(candidates)
}

/// Combined answer from both modes: pools every verdict of both lists
/// into one tally and applies the same argmax. Also reports whether the
/// first Direct and first Inverse verdicts agree; `conflict` is computed
/// on that first pair only, mirroring one conflict observation per
/// problem.
pub fn hybrid_answer(
    direct_pairs: &[(LabeledSlate, Verdict)],
    inverse_pairs: &[(LabeledSlate, Verdict)],
    candidates: &[CandidatePath],
) -> (Option<String>, bool, bool) {
    debug_assert!(!direct_pairs.is_empty() && !inverse_pairs.is_empty());
    let mut pooled: Vec<(LabeledSlate, Verdict)> = Vec::new();
    pooled.extend_from_slice(direct_pairs);
    pooled.extend_from_slice(inverse_pairs);
    let answer = tally_votes(&pooled, candidates).argmax(candidates);
    let conflict = detect_conflict(&direct_pairs[0], &inverse_pairs[0]);
    (answer, !conflict, conflict)
}

/// True when the two verdicts reach different conclusions: their
/// inferred-correct label sets map to different candidate sets through
/// their slates, or either verdict failed to parse (an unparseable
/// judgment cannot agree with anything).
pub fn detect_conflict(
    direct: &(LabeledSlate, Verdict),
    inverse: &(LabeledSlate, Verdict),
) -> bool {
    let (direct_slate, direct_verdict) = direct;
    let (inverse_slate, inverse_verdict) = inverse;
    if direct_verdict.parse_status != ParseStatus::Ok
        || inverse_verdict.parse_status != ParseStatus::Ok
    {
        return true;
    }
    direct_slate.candidates_for(&direct_verdict.inferred_correct)
        != inverse_slate.candidates_for(&inverse_verdict.inferred_correct)
}
