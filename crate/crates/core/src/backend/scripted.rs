//! Deterministic backends for tests and offline runs.

use std::collections::VecDeque;
use std::future::Future;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, DecodeParams};

/// How a script entry decides whether it applies to a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMatcher {
    /// The prompt equals this string exactly.
    Exact(String),
    /// The prompt contains this substring.
    Contains(String),
}

impl PromptMatcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            PromptMatcher::Exact(s) => prompt == s,
            PromptMatcher::Contains(s) => prompt.contains(s),
        }
    }

    fn describe(&self) -> &str {
        match self {
            PromptMatcher::Exact(s) | PromptMatcher::Contains(s) => s,
        }
    }
}

/// One scripted table entry: a matcher and its canned responses, consumed
/// one per call. With `cycle` set the list rotates instead of running dry,
/// which keeps script files small for runs with many repeated calls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: PromptMatcher,
    pub responses: Vec<String>,
    #[serde(default)]
    pub cycle: bool,
}

struct EntryState {
    matcher: PromptMatcher,
    remaining: VecDeque<String>,
    cycle: bool,
}

/// Table-driven scripted backend. Each prompt must match exactly one
/// entry; zero matches is a [`BackendError::ScriptMiss`], several matches
/// or an exhausted response list is a scripting error.
pub struct ScriptedBackend {
    id: String,
    entries: Mutex<Vec<EntryState>>,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, entries: Vec<ScriptEntry>) -> Self {
        ScriptedBackend {
            id: id.into(),
            entries: Mutex::new(
                entries
                    .into_iter()
                    .map(|e| EntryState {
                        matcher: e.matcher,
                        remaining: e.responses.into(),
                        cycle: e.cycle,
                    })
                    .collect(),
            ),
        }
    }

    /// Convenience constructor: substring matchers with fixed responses.
    pub fn from_pairs(id: &str, pairs: &[(&str, &[&str])]) -> Self {
        let entries = pairs
            .iter()
            .map(|(pattern, responses)| ScriptEntry {
                matcher: PromptMatcher::Contains((*pattern).to_string()),
                responses: responses.iter().map(|r| (*r).to_string()).collect(),
                cycle: false,
            })
            .collect();
        Self::new(id, entries)
    }

    /// Loads a script table from its JSON file form.
    pub fn from_json(id: &str, json: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<ScriptEntry> = serde_json::from_str(json)?;
        Ok(Self::new(id, entries))
    }
}

fn preview(prompt: &str) -> String {
    let flat: String = prompt.chars().map(|c| if c == '\n' { ' ' } else { c }).collect();
    if flat.len() > 120 {
        format!("{}…", &flat[..120])
    } else {
        flat
    }
}

#[async_trait]
impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(
        &self,
        prompt: &str,
        _params: &DecodeParams,
        _attempt: u32,
    ) -> Result<String, BackendError> {
        let mut entries = self.entries.lock().expect("script table poisoned");
        let hits: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.matcher.matches(prompt))
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [] => Err(BackendError::ScriptMiss(preview(prompt))),
            [i] => {
                let entry = &mut entries[*i];
                match entry.remaining.pop_front() {
                    Some(response) => {
                        if entry.cycle {
                            entry.remaining.push_back(response.clone());
                        }
                        Ok(response)
                    }
                    None => Err(BackendError::Script(format!(
                        "responses exhausted for matcher {:?}",
                        entry.matcher.describe()
                    ))),
                }
            }
            many => Err(BackendError::Script(format!(
                "prompt matches {} entries: {}",
                many.len(),
                preview(prompt)
            ))),
        }
    }
}

/// Closure-backed backend for tests that need to compute responses from
/// the prompt (e.g. content-aware judging oracles).
pub struct FnBackend<F> {
    id: String,
    f: F,
}

impl<F, Fut> FnBackend<F>
where
    F: Fn(&str, &DecodeParams, u32) -> Fut + Send + Sync,
    Fut: Future<Output = Result<String, BackendError>> + Send,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        FnBackend { id: id.into(), f }
    }
}

#[async_trait]
impl<F, Fut> CompletionBackend for FnBackend<F>
where
    F: Fn(&str, &DecodeParams, u32) -> Fut + Send + Sync,
    Fut: Future<Output = Result<String, BackendError>> + Send,
{
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(
        &self,
        prompt: &str,
        params: &DecodeParams,
        attempt: u32,
    ) -> Result<String, BackendError> {
        (self.f)(prompt, params, attempt).await
    }
}
