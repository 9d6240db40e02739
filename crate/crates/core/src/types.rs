//! Shared domain vocabulary: problems, candidates, slates, verdicts, and
//! per-method results. Pure value types, no I/O.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which benchmark a problem comes from. The two differ in answer
/// convention: MATH answers are free-form strings, MathQA answers are
/// option letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Math,
    #[serde(rename = "mathqa")]
    MathQa,
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dataset::Math => write!(f, "math"),
            Dataset::MathQa => write!(f, "mathqa"),
        }
    }
}

/// The reference answer for a problem, in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldAnswer {
    /// Normalized answer string (MATH).
    Value(String),
    /// Single lowercase option letter a-e (MathQA).
    Letter(char),
}

impl GoldAnswer {
    /// The gold answer as a normalized string, for comparison against a
    /// chosen answer.
    pub fn as_str(&self) -> String {
        match self {
            GoldAnswer::Value(v) => v.clone(),
            GoldAnswer::Letter(l) => l.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("mathqa problem {id} has no options")]
    NoOptions { id: String },
    #[error("mathqa problem {id}: gold letter '{letter}' not among option letters")]
    GoldNotInOptions { id: String, letter: char },
    #[error("math problem {id} has an empty gold answer")]
    EmptyGold { id: String },
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub dataset: Dataset,
    pub statement: String,
    pub gold: GoldAnswer,
    /// Ordered (letter, text) pairs; present iff dataset is MathQA.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<(char, String)>>,
}

impl Problem {
    pub fn new_math(
        id: impl Into<String>,
        statement: impl Into<String>,
        gold_value: impl Into<String>,
    ) -> Result<Self, ProblemError> {
        let id = id.into();
        let gold_value = gold_value.into();
        if gold_value.is_empty() {
            return Err(ProblemError::EmptyGold { id });
        }
        Ok(Problem {
            id,
            dataset: Dataset::Math,
            statement: statement.into(),
            gold: GoldAnswer::Value(gold_value),
            options: None,
        })
    }

    pub fn new_mathqa(
        id: impl Into<String>,
        statement: impl Into<String>,
        options: Vec<(char, String)>,
        gold_letter: char,
    ) -> Result<Self, ProblemError> {
        let id = id.into();
        if options.is_empty() {
            return Err(ProblemError::NoOptions { id });
        }
        let letter = gold_letter.to_ascii_lowercase();
        if !options.iter().any(|(l, _)| *l == letter) {
            return Err(ProblemError::GoldNotInOptions { id, letter });
        }
        Ok(Problem {
            id,
            dataset: Dataset::MathQa,
            statement: statement.into(),
            gold: GoldAnswer::Letter(letter),
            options: Some(options),
        })
    }

    /// Re-checks the dataset/gold/options invariants. Used after
    /// deserializing records from external files.
    pub fn validate(&self) -> Result<(), ProblemError> {
        match (self.dataset, &self.gold) {
            (Dataset::Math, GoldAnswer::Value(v)) if !v.is_empty() => Ok(()),
            (Dataset::Math, _) => Err(ProblemError::EmptyGold {
                id: self.id.clone(),
            }),
            (Dataset::MathQa, GoldAnswer::Letter(l)) => {
                let opts = self.options.as_deref().unwrap_or(&[]);
                if opts.is_empty() {
                    Err(ProblemError::NoOptions {
                        id: self.id.clone(),
                    })
                } else if !opts.iter().any(|(letter, _)| letter == l) {
                    Err(ProblemError::GoldNotInOptions {
                        id: self.id.clone(),
                        letter: *l,
                    })
                } else {
                    Ok(())
                }
            }
            (Dataset::MathQa, GoldAnswer::Value(_)) => Err(ProblemError::NoOptions {
                id: self.id.clone(),
            }),
        }
    }
}

/// Provenance of one sampled reasoning path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub temperature: f64,
    pub seed: i64,
    pub backend_id: String,
}

/// One generated reasoning path plus its extracted, normalized final
/// answer. `answer` is absent when extraction failed; the candidate still
/// occupies a slate slot so a discriminator can mark it incorrect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub index: usize,
    pub reasoning: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub meta: CandidateMeta,
}

/// A seeded permutation assigning labels A.. to candidates for one
/// discriminative query. `perm[i]` is the candidate index shown under
/// `labels[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSlate {
    pub labels: Vec<char>,
    pub perm: Vec<usize>,
    pub seed: i64,
}

impl LabeledSlate {
    /// Candidate index shown under `label`, if the label is on this slate.
    pub fn candidate_for(&self, label: char) -> Option<usize> {
        let pos = self.labels.iter().position(|l| *l == label)?;
        self.perm.get(pos).copied()
    }

    /// Label under which candidate `index` is shown.
    pub fn label_for(&self, index: usize) -> Option<char> {
        let pos = self.perm.iter().position(|i| *i == index)?;
        self.labels.get(pos).copied()
    }

    /// Maps a set of labels to the candidate-index set they denote.
    pub fn candidates_for(&self, labels: &BTreeSet<char>) -> BTreeSet<usize> {
        labels
            .iter()
            .filter_map(|l| self.candidate_for(*l))
            .collect()
    }

    /// True iff `perm` is a bijection over 0..k-1 and labels are distinct.
    pub fn is_bijective(&self) -> bool {
        let k = self.labels.len();
        if self.perm.len() != k {
            return false;
        }
        let mut seen = vec![false; k];
        for &idx in &self.perm {
            if idx >= k || seen[idx] {
                return false;
            }
            seen[idx] = true;
        }
        let distinct: BTreeSet<_> = self.labels.iter().collect();
        distinct.len() == k
    }
}

/// Whether a discriminative query asked for the correct or the incorrect
/// paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictMode {
    Direct,
    Inverse,
}

impl VerdictMode {
    pub fn tag(&self) -> &'static str {
        match self {
            VerdictMode::Direct => "direct",
            VerdictMode::Inverse => "inverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    /// Labels were extracted.
    Ok,
    /// The response asserted that no path qualifies; vote-neutral.
    Empty,
    /// No label token and no none-assertion found.
    Unparseable,
}

/// One parsed discriminative response.
///
/// `inferred_correct` is the label set the verdict implies is correct:
/// the selected labels themselves for Direct, their complement within the
/// slate for Inverse, and the empty set whenever parsing did not succeed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub mode: VerdictMode,
    pub raw: String,
    pub selected: BTreeSet<char>,
    pub inferred_correct: BTreeSet<char>,
    pub parse_status: ParseStatus,
}

impl Verdict {
    /// Builds a verdict from a selected label set, applying the
    /// complement algebra for the inferred-correct set.
    pub fn from_selection(
        mode: VerdictMode,
        raw: impl Into<String>,
        selected: BTreeSet<char>,
        slate_labels: &[char],
        parse_status: ParseStatus,
    ) -> Self {
        let inferred_correct = infer_correct(mode, &selected, slate_labels, parse_status);
        Verdict {
            mode,
            raw: raw.into(),
            selected,
            inferred_correct,
            parse_status,
        }
    }
}

/// The inferred-correct label set for a selection.
pub fn infer_correct(
    mode: VerdictMode,
    selected: &BTreeSet<char>,
    slate_labels: &[char],
    parse_status: ParseStatus,
) -> BTreeSet<char> {
    if parse_status != ParseStatus::Ok {
        return BTreeSet::new();
    }
    match mode {
        VerdictMode::Direct => selected.clone(),
        VerdictMode::Inverse => slate_labels
            .iter()
            .copied()
            .filter(|l| !selected.contains(l))
            .collect(),
    }
}

/// Answer-selection strategies the harness can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cot,
    SelfConsistency,
    UniversalSc,
    Direct,
    Inverse,
    Hybrid,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cot,
        Method::SelfConsistency,
        Method::UniversalSc,
        Method::Direct,
        Method::Inverse,
        Method::Hybrid,
    ];

    /// Stable identifier used in config files and JSON output.
    pub fn key(&self) -> &'static str {
        match self {
            Method::Cot => "cot",
            Method::SelfConsistency => "self-consistency",
            Method::UniversalSc => "universal-sc",
            Method::Direct => "direct",
            Method::Inverse => "inverse",
            Method::Hybrid => "hybrid",
        }
    }

    /// Human-readable name used in report tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::Cot => "Chain-of-Thought",
            Method::SelfConsistency => "Self-Consistency",
            Method::UniversalSc => "Universal Self-Consistency",
            Method::Direct => "Direct",
            Method::Inverse => "Inverse",
            Method::Hybrid => "Hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cot" | "chain-of-thought" => Some(Method::Cot),
            "sc" | "self-consistency" => Some(Method::SelfConsistency),
            "usc" | "universal-sc" => Some(Method::UniversalSc),
            "direct" => Some(Method::Direct),
            "inverse" => Some(Method::Inverse),
            "hybrid" => Some(Method::Hybrid),
            _ => None,
        }
    }
}

/// One method's final answer for one problem in one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen: Option<String>,
    pub correct: bool,
    /// Hybrid only: did the first Direct and Inverse verdicts agree?
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<bool>,
    /// Hybrid only: negation of `agreement`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflict: Option<bool>,
}

/// Full per-problem trace for one run, persisted as one JSONL line.
/// `slates[i]` is the slate the verdict `verdicts[i]` was parsed against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: String,
    pub run_index: u32,
    pub candidates: Vec<CandidatePath>,
    pub slates: Vec<LabeledSlate>,
    pub verdicts: Vec<Verdict>,
    pub results: Vec<MethodResult>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunRecord {
    /// The (slate, verdict) pairs for one mode, in query order.
    pub fn pairs_for(&self, mode: VerdictMode) -> Vec<(LabeledSlate, Verdict)> {
        self.slates
            .iter()
            .zip(self.verdicts.iter())
            .filter(|(_, v)| v.mode == mode)
            .map(|(s, v)| (s.clone(), v.clone()))
            .collect()
    }

    pub fn result_for(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(s: &str) -> BTreeSet<char> {
        s.chars().collect()
    }

    #[test]
    fn mathqa_gold_must_be_an_option() {
        let opts = vec![('a', "1".into()), ('b', "2".into())];
        assert!(Problem::new_mathqa("p", "q", opts.clone(), 'c').is_err());
        let p = Problem::new_mathqa("p", "q", opts, 'B').unwrap();
        assert_eq!(p.gold, GoldAnswer::Letter('b'));
    }

    #[test]
    fn math_gold_must_be_nonempty() {
        assert!(Problem::new_math("p", "q", "").is_err());
        assert!(Problem::new_math("p", "q", "402").is_ok());
    }

    #[test]
    fn slate_maps_labels_both_ways() {
        let slate = LabeledSlate {
            labels: vec!['A', 'B', 'C'],
            perm: vec![2, 0, 1],
            seed: 0,
        };
        assert!(slate.is_bijective());
        assert_eq!(slate.candidate_for('A'), Some(2));
        assert_eq!(slate.candidate_for('C'), Some(1));
        assert_eq!(slate.label_for(0), Some('B'));
        assert_eq!(slate.candidate_for('D'), None);
        assert_eq!(slate.label_for(7), None);
    }

    #[test]
    fn slate_bijection_check_rejects_duplicates() {
        let slate = LabeledSlate {
            labels: vec!['A', 'B'],
            perm: vec![0, 0],
            seed: 0,
        };
        assert!(!slate.is_bijective());
    }

    #[test]
    fn direct_ok_infers_selected() {
        let v = Verdict::from_selection(
            VerdictMode::Direct,
            "A, B",
            labels("AB"),
            &['A', 'B', 'C', 'D', 'E'],
            ParseStatus::Ok,
        );
        assert_eq!(v.inferred_correct, labels("AB"));
    }

    #[test]
    fn inverse_ok_infers_complement() {
        let v = Verdict::from_selection(
            VerdictMode::Inverse,
            "B, C",
            labels("BC"),
            &['A', 'B', 'C', 'D', 'E'],
            ParseStatus::Ok,
        );
        assert_eq!(v.inferred_correct, labels("ADE"));
    }

    #[test]
    fn non_ok_infers_nothing() {
        for status in [ParseStatus::Empty, ParseStatus::Unparseable] {
            for mode in [VerdictMode::Direct, VerdictMode::Inverse] {
                let v = Verdict::from_selection(mode, "", labels(""), &['A', 'B'], status);
                assert!(v.inferred_correct.is_empty());
            }
        }
    }

    #[test]
    fn complement_algebra_exhaustive_k_up_to_5() {
        // Direct(S) and Inverse(L \ S) must infer the same correct set,
        // for every subset S of every label universe up to k=5.
        for k in 1..=5usize {
            let universe: Vec<char> = (0..k).map(|i| (b'A' + i as u8) as char).collect();
            for mask in 0..(1u32 << k) {
                let s: BTreeSet<char> = universe
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, c)| *c)
                    .collect();
                let complement: BTreeSet<char> = universe
                    .iter()
                    .filter(|c| !s.contains(c))
                    .copied()
                    .collect();
                let direct = infer_correct(VerdictMode::Direct, &s, &universe, ParseStatus::Ok);
                let inverse =
                    infer_correct(VerdictMode::Inverse, &complement, &universe, ParseStatus::Ok);
                assert_eq!(direct, inverse, "k={k} mask={mask:b}");
            }
        }
    }

    #[test]
    fn method_parse_accepts_aliases() {
        assert_eq!(Method::parse("SC"), Some(Method::SelfConsistency));
        assert_eq!(Method::parse("usc"), Some(Method::UniversalSc));
        assert_eq!(Method::parse("Hybrid"), Some(Method::Hybrid));
        assert_eq!(Method::parse("nope"), None);
    }

    #[test]
    fn run_record_roundtrips_through_json() {
        let record = RunRecord {
            problem_id: "algebra/1".into(),
            run_index: 0,
            candidates: vec![CandidatePath {
                index: 0,
                reasoning: "r".into(),
                answer: Some("4".into()),
                meta: CandidateMeta {
                    temperature: 0.7,
                    seed: 3,
                    backend_id: "scripted".into(),
                },
            }],
            slates: vec![LabeledSlate {
                labels: vec!['A'],
                perm: vec![0],
                seed: 1,
            }],
            verdicts: vec![Verdict::from_selection(
                VerdictMode::Direct,
                "A",
                labels("A"),
                &['A'],
                ParseStatus::Ok,
            )],
            results: vec![MethodResult {
                method: Method::Direct,
                chosen: Some("4".into()),
                correct: true,
                agreement: None,
                conflict: None,
            }],
            started_at: "2025-01-01T00:00:00Z".into(),
            finished_at: "2025-01-01T00:00:01Z".into(),
        };
        let line = serde_json::to_string(&record).unwrap();
        let back: RunRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record);
    }
}
