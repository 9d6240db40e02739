//! Benchmark ingestion.
//!
//! MATH ships as a directory tree of one-object JSON files keyed
//! `"problem"`/`"solution"`, with the reference answer inside the last
//! `\boxed{...}` of the solution. MathQA ships as one JSON array with
//! `"Problem"`/`"Rationale"`/`"options"`/`"correct"` keys and lettered
//! options packed into a single string.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::normalize::normalize_answer;
use crate::seeds::seeded_shuffle;
use crate::types::{Dataset, Problem};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("format error at {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("option parse error in record {index}: {detail}")]
    OptionParse { index: usize, detail: String },
    #[error("dataset at {0} contains no problems")]
    Empty(PathBuf),
}

/// What a load produced: the kind, source, resulting problem count, any
/// subsetting applied, and how many records were skipped for having no
/// extractable gold answer.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub kind: Dataset,
    pub path: PathBuf,
    pub problem_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
    pub skipped: usize,
}

/// Loads a dataset and applies optional seeded shuffling and a sample
/// limit (shuffle first, then truncate, so a limited sample is a random
/// subset rather than a prefix).
pub fn load_dataset(
    kind: Dataset,
    path: &Path,
    limit: Option<usize>,
    shuffle_seed: Option<u64>,
) -> Result<(Vec<Problem>, DatasetManifest), DatasetError> {
    let (mut problems, skipped) = match kind {
        Dataset::Math => load_math(path)?,
        Dataset::MathQa => (load_mathqa(path)?, 0),
    };
    if problems.is_empty() {
        return Err(DatasetError::Empty(path.to_path_buf()));
    }
    if let Some(seed) = shuffle_seed {
        seeded_shuffle(&mut problems, seed);
    }
    if let Some(n) = limit {
        problems.truncate(n);
    }
    let manifest = DatasetManifest {
        kind,
        path: path.to_path_buf(),
        problem_count: problems.len(),
        limit,
        shuffle_seed,
        skipped,
    };
    Ok((problems, manifest))
}

#[derive(Debug, Deserialize)]
struct MathRecord {
    problem: String,
    solution: String,
}

/// Loads MATH problems from a directory tree (or a single record file).
/// Subject subdirectories are merged into one stream ordered by
/// (subdirectory, filename); the subject survives in the problem id.
/// Records whose solution has no boxed answer are skipped and counted.
pub fn load_math(path: &Path) -> Result<(Vec<Problem>, usize), DatasetError> {
    let mut files: Vec<PathBuf> = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        walkdir::WalkDir::new(path)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .map(|e| e.into_path())
            .collect()
    };
    files.sort();

    let mut problems = Vec::new();
    let mut skipped = 0usize;
    for file in files {
        let raw = std::fs::read_to_string(&file).map_err(|source| DatasetError::Io {
            path: file.clone(),
            source,
        })?;
        let record: MathRecord =
            serde_json::from_str(&raw).map_err(|e| DatasetError::Format {
                path: file.clone(),
                detail: e.to_string(),
            })?;
        let gold = last_boxed_content(&record.solution)
            .and_then(|content| normalize_answer(&content, Dataset::Math));
        match gold {
            Some(value) => {
                let id = math_problem_id(path, &file);
                let problem =
                    Problem::new_math(id, record.problem, value).map_err(|e| {
                        DatasetError::Format {
                            path: file.clone(),
                            detail: e.to_string(),
                        }
                    })?;
                problems.push(problem);
            }
            None => skipped += 1,
        }
    }
    Ok((problems, skipped))
}

fn math_problem_id(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    let no_ext = rel.with_extension("");
    no_ext.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/")
}

/// Content of the last `\boxed{...}` in `text`, found by a brace-balanced
/// scan. Nested braces are preserved; `\{`-style escaped braces do not
/// count toward the balance. Returns `None` when there is no boxed term
/// or its braces never close.
pub fn last_boxed_content(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let start = text.rfind(MARKER)? + MARKER.len();
    let mut depth = 1usize;
    let mut content = String::new();
    let mut chars = text[start..].chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                content.push(c);
                if let Some(escaped) = chars.next() {
                    content.push(escaped);
                }
            }
            '{' => {
                depth += 1;
                content.push(c);
            }
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(content);
                }
                content.push(c);
            }
            _ => content.push(c),
        }
    }
    None
}

#[derive(Debug, Deserialize)]
struct MathQaRecord {
    #[serde(rename = "Problem")]
    problem: String,
    #[serde(rename = "Rationale")]
    #[allow(dead_code)]
    rationale: String,
    options: String,
    correct: String,
}

/// Loads the MathQA test file (a JSON array).
pub fn load_mathqa(path: &Path) -> Result<Vec<Problem>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records: Vec<MathQaRecord> =
        serde_json::from_str(&raw).map_err(|e| DatasetError::Format {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    let mut problems = Vec::with_capacity(records.len());
    for (index, record) in records.into_iter().enumerate() {
        let options = split_options(&record.options);
        if options.len() < 2 {
            return Err(DatasetError::OptionParse {
                index,
                detail: format!(
                    "recovered {} options from {:?}",
                    options.len(),
                    record.options
                ),
            });
        }
        let gold = normalize_answer(&record.correct, Dataset::MathQa).ok_or_else(|| {
            DatasetError::OptionParse {
                index,
                detail: format!("unusable correct field {:?}", record.correct),
            }
        })?;
        let gold_letter = gold.chars().next().expect("normalized letter");
        let problem = Problem::new_mathqa(
            format!("mathqa/{index}"),
            record.problem,
            options,
            gold_letter,
        )
        .map_err(|e| DatasetError::OptionParse {
            index,
            detail: e.to_string(),
        })?;
        problems.push(problem);
    }
    Ok(problems)
}

/// Splits a MathQA options string like `"a ) 129 , b ) 130 , ..."` into
/// (letter, text) pairs. An option starts where a letter a-e sits at the
/// start of the string or after whitespace and is followed by `)`;
/// anything else (commas inside numbers included) stays inside the
/// option text.
pub fn split_options(s: &str) -> Vec<(char, String)> {
    let chars: Vec<char> = s.chars().collect();
    // (letter, index after ')', start index)
    let mut starts: Vec<(char, usize, usize)> = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        let lower = c.to_ascii_lowercase();
        if !('a'..='e').contains(&lower) {
            continue;
        }
        if i > 0 && !chars[i - 1].is_whitespace() {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && chars[j] == ' ' {
            j += 1;
        }
        if j < chars.len() && chars[j] == ')' {
            starts.push((lower, j + 1, i));
        }
    }
    let mut options = Vec::with_capacity(starts.len());
    for (k, &(letter, body_start, _)) in starts.iter().enumerate() {
        let body_end = starts.get(k + 1).map_or(chars.len(), |next| next.2);
        let text: String = chars[body_start..body_end].iter().collect();
        let text = text.trim().trim_end_matches(',').trim().to_string();
        options.push((letter, text));
    }
    options
}
