//! Scripted chat backend: substring-matched canned responses.
//!
//! Rules are checked in file order and the first match wins. Each rule keeps
//! its own response cycle: consecutive matches step through `responses` and
//! wrap around. A rule whose `match` string is empty matches every prompt,
//! so a trailing empty-match rule is the idiomatic fallback; prompts that
//! match nothing get a built-in refusal string.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use crate::error::{CoreError, Result};
use crate::gateway::{ChatBackend, ChatRequest, ChatResponse};

/// Response returned when no rule matches and there is no catch-all.
pub const UNMATCHED_RESPONSE: &str = "I don't know.";

/// One substring-match rule.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    /// Substring looked for in the prompt; empty matches everything.
    #[serde(rename = "match")]
    pub matcher: String,
    /// Responses replayed in order, wrapping around.
    pub responses: Vec<String>,
}

/// Reads a rules file: one JSON object per line, `{"match": ..., "responses": [...]}`.
pub fn load_rules(path: &Path) -> Result<Vec<ScriptRule>> {
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut rules = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rule: ScriptRule = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if rule.responses.is_empty() {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: "rule has no responses".into(),
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Deterministic chat backend driven by [`ScriptRule`]s.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    cursors: Mutex<Vec<usize>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let cursors = Mutex::new(vec![0; rules.len()]);
        ScriptedBackend { rules, cursors }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(ScriptedBackend::new(load_rules(path)?))
    }

    /// Resets all response cycles to their first entry.
    pub fn rewind(&self) {
        for c in self.cursors.lock().expect("cursor lock").iter_mut() {
            *c = 0;
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let text = self
            .rules
            .iter()
            .position(|r| req.prompt.contains(&r.matcher))
            .map(|i| {
                let rule = &self.rules[i];
                let text = rule.responses[cursors[i] % rule.responses.len()].clone();
                cursors[i] += 1;
                text
            })
            .unwrap_or_else(|| UNMATCHED_RESPONSE.to_string());
        Ok(ChatResponse {
            raw: serde_json::json!({ "scripted": true, "text": text }),
            text,
            latency: Duration::ZERO,
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
