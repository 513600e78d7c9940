//! Pulling a scenario out of free-form model output.

use crate::model::Scenario;

use super::LlmError;

/// Contents of ``` fenced blocks, in order. The info string (e.g. `json`) is
/// dropped.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        let Some(close) = body.find("```") else { break };
        out.push(&body[..close]);
        rest = &body[close + 3..];
    }
    out
}

/// Top-level `{...}` spans with balanced braces, skipping braces inside JSON
/// strings.
fn brace_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let start = i;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = None;
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(j);
                        break;
                    }
                }
                _ => {}
            }
        }
        match end {
            Some(j) => {
                out.push(&text[start..=j]);
                i = j + 1;
            }
            None => i += 1,
        }
    }
    out
}

/// First candidate that parses and passes the scenario schema. Fenced blocks
/// are tried before bare brace spans.
pub fn extract_scenario_json(text: &str) -> Result<Scenario, LlmError> {
    let mut candidates: Vec<&str> = fenced_blocks(text);
    for span in brace_spans(text) {
        if !candidates.iter().any(|c| c.trim() == span.trim()) {
            candidates.push(span);
        }
    }
    let mut reasons = Vec::new();
    for (i, candidate) in candidates.iter().enumerate() {
        match serde_json::from_str::<serde_json::Value>(candidate.trim()) {
            Ok(value) => match Scenario::from_value(&value) {
                Ok(s) => return Ok(s),
                Err(issues) => reasons.push(format!("candidate {}: {}", i + 1, issues.join("; "))),
            },
            Err(e) => reasons.push(format!("candidate {}: invalid JSON: {e}", i + 1)),
        }
    }
    if candidates.is_empty() {
        reasons.push("no JSON object found in response".into());
    }
    Err(LlmError::NoValidScenario(reasons))
}
