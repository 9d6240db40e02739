//! Durable, resumable persistence of run records.
//!
//! A records file is JSONL: line 1 is a header record carrying the
//! effective config, dataset manifest, and prompt-template hashes; every
//! following line is one complete run record. Lines are written and
//! flushed atomically in one `write` call, so a crash can tear at most
//! the final line, and resume truncates that torn tail before appending.
//!
//! Stable line schema (`kind` discriminates):
//!   {"kind":"header","schema_version":…,"config":…,"dataset":…,
//!    "template_hashes":…,"created_at":…}
//!   {"kind":"record","problem_id":…,"run_index":…,"candidates":…,
//!    "slates":…,"verdicts":…,"results":…,"started_at":…,"finished_at":…}

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::dataset::DatasetManifest;
use crate::types::RunRecord;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("records file {0} already exists; resume or choose a new path")]
    AlreadyExists(PathBuf),
    #[error("records file {0} has no header line")]
    MissingHeader(PathBuf),
    #[error("header mismatch: the file was produced by a different config; refusing to mix runs")]
    HeaderMismatch,
    #[error("corrupt records file at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
}

/// First line of every records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: DatasetManifest,
    pub template_hashes: BTreeMap<String, String>,
    pub created_at: String,
}

impl RunHeader {
    pub fn new(config: ExperimentConfig, dataset: DatasetManifest) -> Self {
        RunHeader {
            schema_version: SCHEMA_VERSION,
            config,
            dataset,
            template_hashes: template_hashes(),
            created_at: chrono::Utc::now().to_rfc3339(),
        }
    }

    /// Header equivalence for resume: everything but the creation time.
    pub fn matches(&self, other: &RunHeader) -> bool {
        self.schema_version == other.schema_version
            && self.config == other.config
            && self.dataset == other.dataset
            && self.template_hashes == other.template_hashes
    }
}

/// Hashes of every prompt template in use. A template edit changes the
/// hash and makes old records files non-resumable.
pub fn template_hashes() -> BTreeMap<String, String> {
    let entries: [(&str, &str); 6] = [
        ("cot_math", crate::generation::COT_MATH_TEMPLATE),
        ("cot_mathqa", crate::generation::COT_MATHQA_TEMPLATE),
        ("direct_closing", crate::discrimination::DIRECT_CLOSING),
        ("inverse_closing", crate::discrimination::INVERSE_CLOSING),
        ("answer_suffix", crate::discrimination::ANSWER_FORMAT_SUFFIX),
        (
            "usc",
            // Both halves of the consistency-selection template.
            &format!(
                "{}{}",
                crate::aggregation::USC_PREAMBLE,
                crate::aggregation::USC_CLOSING
            ),
        ),
    ];
    entries
        .iter()
        .map(|(name, text)| {
            let digest = Sha256::digest(text.as_bytes());
            (name.to_string(), hex::encode(digest))
        })
        .collect()
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineOut<'a> {
    Header(&'a RunHeader),
    Record(&'a RunRecord),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LineIn {
    Header(Box<RunHeader>),
    Record(Box<RunRecord>),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scan result for an existing records file.
struct Scan {
    header: RunHeader,
    records: Vec<RunRecord>,
    /// Byte length of the intact prefix; anything past it is a torn line.
    intact_len: u64,
    torn: bool,
}

fn scan_file(path: &Path) -> Result<Scan, StoreError> {
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut header: Option<RunHeader> = None;
    let mut records = Vec::new();
    let mut offset = 0u64;
    let mut intact_len = 0u64;
    let mut torn = false;

    let lines: Vec<&str> = raw.split('\n').collect();
    let last_index = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        let line_len = line.len() as u64 + u64::from(i < last_index);
        if line.trim().is_empty() {
            offset += line_len;
            continue;
        }
        match serde_json::from_str::<LineIn>(line) {
            Ok(LineIn::Header(h)) if i == 0 => header = Some(*h),
            Ok(LineIn::Header(_)) => {
                return Err(StoreError::Corrupt {
                    line: i + 1,
                    detail: "unexpected second header".into(),
                })
            }
            Ok(LineIn::Record(r)) if header.is_some() => records.push(*r),
            Ok(LineIn::Record(_)) => return Err(StoreError::MissingHeader(path.to_path_buf())),
            Err(e) => {
                // Only the final non-empty line may be torn; anything
                // earlier is corruption.
                let is_last_content = lines[i + 1..].iter().all(|l| l.trim().is_empty());
                if is_last_content && i > 0 {
                    tracing::warn!(line = i + 1, "ignoring torn trailing line: {e}");
                    torn = true;
                    break;
                }
                return Err(StoreError::Corrupt {
                    line: i + 1,
                    detail: e.to_string(),
                });
            }
        }
        offset += line_len;
        intact_len = offset;
    }
    let header = header.ok_or_else(|| StoreError::MissingHeader(path.to_path_buf()))?;
    Ok(Scan {
        header,
        records,
        intact_len,
        torn,
    })
}

/// Keys already persisted in a records file: the orchestrator skips
/// these on resume. A missing file is an empty set; a torn trailing
/// line is ignored with a warning.
pub fn resume_set(path: &Path) -> Result<BTreeSet<(String, u32)>, StoreError> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let scan = scan_file(path)?;
    Ok(scan
        .records
        .iter()
        .map(|r| (r.problem_id.clone(), r.run_index))
        .collect())
}

/// Loads the header and all records, for reporting. A torn trailing line
/// is ignored with a warning.
pub fn load_records(path: &Path) -> Result<(RunHeader, Vec<RunRecord>), StoreError> {
    let scan = scan_file(path)?;
    Ok((scan.header, scan.records))
}

/// Append-only single-writer handle on a records file.
pub struct RunStore {
    file: File,
    path: PathBuf,
}

impl RunStore {
    /// Creates a fresh records file with `header` as line 1. Fails if the
    /// path already exists.
    pub fn create(path: &Path, header: &RunHeader) -> Result<RunStore, StoreError> {
        if path.exists() {
            return Err(StoreError::AlreadyExists(path.to_path_buf()));
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err(path))?;
            }
        }
        let mut file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut line = serde_json::to_string(&LineOut::Header(header))?;
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io_err(path))?;
        file.flush().map_err(io_err(path))?;
        Ok(RunStore {
            file,
            path: path.to_path_buf(),
        })
    }

    /// Opens an existing records file for appending (or creates it).
    /// Refuses to continue when the stored header does not match
    /// `header`; truncates a torn trailing line; returns the keys of the
    /// records already present.
    pub fn open_resume(
        path: &Path,
        header: &RunHeader,
    ) -> Result<(RunStore, BTreeSet<(String, u32)>), StoreError> {
        if !path.exists() {
            return Ok((Self::create(path, header)?, BTreeSet::new()));
        }
        let scan = scan_file(path)?;
        if !scan.header.matches(header) {
            return Err(StoreError::HeaderMismatch);
        }
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        if scan.torn {
            file.set_len(scan.intact_len).map_err(io_err(path))?;
        }
        let mut store = RunStore {
            file,
            path: path.to_path_buf(),
        };
        store
            .file
            .seek_to_end()
            .map_err(io_err(&store.path.clone()))?;
        let done = scan
            .records
            .iter()
            .map(|r| (r.problem_id.clone(), r.run_index))
            .collect();
        Ok((store, done))
    }

    /// Serializes the record as exactly one JSON line and flushes it
    /// before returning.
    pub fn append(&mut self, record: &RunRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(&LineOut::Record(record))?;
        debug_assert!(!line.contains('\n'));
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

trait SeekToEnd {
    fn seek_to_end(&mut self) -> std::io::Result<u64>;
}

impl SeekToEnd for File {
    fn seek_to_end(&mut self) -> std::io::Result<u64> {
        use std::io::{Seek, SeekFrom};
        self.seek(SeekFrom::End(0))
    }
}
