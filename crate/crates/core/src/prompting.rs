//! Prompt construction from text templates, and corrective feedback.
//!
//! Templates are plain text files with `{{name}}` placeholders. The defaults
//! are compiled in; a directory given by `--templates` or `ATG_TEMPLATES` can
//! override any subset of them by file name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{BenchmarkParams, InteractionEvent, Mechanism, Scenario, SectorGraph};
use crate::rollout::Verification;

pub const TEMPLATES_ENV: &str = "ATG_TEMPLATES";

const EMBEDDED: &[(&str, &str)] = &[
    ("benchmark", include_str!("../templates/benchmark.txt")),
    ("controllability", include_str!("../templates/controllability.txt")),
    ("existing", include_str!("../templates/existing.txt")),
    ("feedback", include_str!("../templates/feedback.txt")),
    ("interaction_types", include_str!("../templates/interaction_types.txt")),
    ("level_rule_2d", include_str!("../templates/level_rule_2d.txt")),
    ("level_rule_3d", include_str!("../templates/level_rule_3d.txt")),
    ("rules", include_str!("../templates/rules.txt")),
    ("schema_2d", include_str!("../templates/schema_2d.txt")),
    ("schema_3d", include_str!("../templates/schema_3d.txt")),
    ("strategy", include_str!("../templates/strategy.txt")),
    ("task_non_interacting", include_str!("../templates/task_non_interacting.txt")),
    ("task_target_pairs", include_str!("../templates/task_target_pairs.txt")),
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template} references unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {0} is not defined")]
    MissingTemplate(String),
    #[error("cannot read template {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("nothing to report: the scenario meets its requirement")]
    EmptyReport,
    #[error("scenario specification is empty")]
    EmptySpec,
}

#[derive(Debug, Clone)]
pub struct Templates {
    texts: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::embedded()
    }
}

impl Templates {
    pub fn embedded() -> Self {
        Self { texts: EMBEDDED.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Embedded templates with every `<name>.txt` found in `dir` overriding
    /// the default of the same name.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::embedded();
        for name in EMBEDDED.iter().map(|(k, _)| *k) {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
                t.texts.insert(name.to_string(), text);
            }
        }
        Ok(t)
    }

    /// `dir` if given, else `$ATG_TEMPLATES`, else the embedded set.
    pub fn load(dir: Option<&Path>) -> Result<Self, PromptError> {
        match dir {
            Some(d) => Self::from_dir(d),
            None => match std::env::var_os(TEMPLATES_ENV) {
                Some(d) if !d.is_empty() => Self::from_dir(Path::new(&d)),
                _ => Ok(Self::embedded()),
            },
        }
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.texts.get(name).map(String::as_str).ok_or_else(|| PromptError::MissingTemplate(name.to_string()))
    }

    /// Single-pass `{{name}}` substitution; values are inserted verbatim.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let text = self.get(name)?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                out.push_str(&rest[start..]);
                rest = "";
                break;
            };
            let key = after[..end].trim();
            let value = vars.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| {
                PromptError::UnknownPlaceholder { template: name.to_string(), name: key.to_string() }
            })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }

    /// Every `json` fenced block in the templates, for schema round-trip checks.
    pub fn embedded_examples(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (name, text) in &self.texts {
            let mut rest = text.as_str();
            while let Some(start) = rest.find("```json\n") {
                let body = &rest[start + 8..];
                let Some(end) = body.find("```") else { break };
                if !body[..end].contains("{{") {
                    out.push((name.clone(), body[..end].to_string()));
                }
                rest = &body[end + 3..];
            }
        }
        out
    }
}

/// A rendered prompt with any advisory warnings about its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Node list with integer coordinates, routes in flying order, and the
/// intersection nodes with the routes meeting there.
pub fn render_sector_text(g: &SectorGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} nodes, {} routes, node spacing {} nmi.",
        g.nodes.len(),
        g.routes.len(),
        g.spacing_nmi.round() as i64
    );
    out.push_str("Nodes (id: x, y in nmi):\n");
    for (id, p) in &g.nodes {
        let _ = writeln!(out, "{id}: {}, {}", p.x.round() as i64, p.y.round() as i64);
    }
    out.push_str("Routes (flown from the first listed node to the last):\n");
    for (id, nodes) in &g.routes {
        let length: f64 = nodes
            .windows(2)
            .filter_map(|w| Some(crate::geometry::dist(g.position(&w[0])?, g.position(&w[1])?)))
            .sum();
        let seq: Vec<&str> = nodes.iter().map(|n| n.0.as_str()).collect();
        let _ = writeln!(out, "{id} ({} nodes, {} nmi): {}", nodes.len(), length.round() as i64, seq.join(" -> "));
    }
    let intersections = g.intersection_nodes();
    if intersections.is_empty() {
        out.push_str("Intersections: none\n");
    } else {
        out.push_str("Intersections (nodes on two or more routes):\n");
        for (node, routes) in intersections {
            let names: Vec<&str> = routes.iter().map(|r| r.0.as_str()).collect();
            let _ = writeln!(out, "intersection {node}: {}", names.join(", "));
        }
    }
    out.trim_end().to_string()
}

fn rules(t: &Templates, duration: u32, mode_3d: bool) -> Result<String, PromptError> {
    let level_rule = t.render(if mode_3d { "level_rule_3d" } else { "level_rule_2d" }, &[])?;
    let last = duration.saturating_sub(1).to_string();
    t.render("rules", &[("duration", &duration.to_string()), ("last_step", &last), ("level_rule", &level_rule)])
}

fn task_statement(t: &Templates, params: &BenchmarkParams) -> Result<String, PromptError> {
    let duration = params.duration.to_string();
    let n = params.n_aircraft.to_string();
    match params.target_pairs {
        Some(k) => t.render(
            "task_target_pairs",
            &[("duration", &duration), ("n_aircraft", &n), ("target_pairs", &k.to_string())],
        ),
        None => t.render("task_non_interacting", &[("duration", &duration), ("n_aircraft", &n)]),
    }
}

pub fn build_benchmark_prompt(t: &Templates, g: &SectorGraph, params: &BenchmarkParams) -> Result<String, PromptError> {
    let task = task_statement(t, params)?;
    let rules = rules(t, params.duration, false)?;
    let strategy = t.render("strategy", &[])?;
    let schema = t.render("schema_2d", &[])?;
    let sector = render_sector_text(g);
    t.render(
        "benchmark",
        &[("task", &task), ("rules", &rules), ("strategy", &strategy), ("sector", &sector), ("schema", &schema)],
    )
}

const LEVEL_WORDS: &[&str] = &["flight level", "altitude", "climb", "descen", "vertical", "exit level", "initial level"];

fn mentions_levels(spec: &str) -> bool {
    let lower = spec.to_lowercase();
    if LEVEL_WORDS.iter().any(|w| lower.contains(w)) {
        return true;
    }
    // "FL300", "fl 280"
    lower.match_indices("fl").any(|(i, _)| {
        let before_ok = i == 0 || !lower.as_bytes()[i - 1].is_ascii_alphabetic();
        let digits = lower[i + 2..].trim_start();
        before_ok && digits.starts_with(|c: char| c.is_ascii_digit())
    })
}

/// Free-text scenario request. `existing` is included for modification
/// requests. The scenario duration defaults to 12 in the rules section.
pub fn build_controllability_prompt(
    t: &Templates,
    g: &SectorGraph,
    spec: &str,
    mode_3d: bool,
    existing: Option<&Scenario>,
) -> Result<Prompt, PromptError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(PromptError::EmptySpec);
    }
    let mut warnings = Vec::new();
    if !mode_3d && mentions_levels(spec) {
        warnings.push("specification mentions flight levels but the prompt is in 2D mode; levels will be ignored".to_string());
    }
    let duration = existing.map(|s| s.duration).unwrap_or(12);
    let rules = rules(t, duration, mode_3d)?;
    let types = t.render("interaction_types", &[])?;
    let strategy = t.render("strategy", &[])?;
    let schema = t.render(if mode_3d { "schema_3d" } else { "schema_2d" }, &[])?;
    let sector = render_sector_text(g);
    let existing = match existing {
        Some(s) => format!("{}\n", t.render("existing", &[("scenario", &s.to_json())])?),
        None => String::new(),
    };
    let text = t.render(
        "controllability",
        &[
            ("spec", spec),
            ("rules", &rules),
            ("interaction_types", &types),
            ("strategy", &strategy),
            ("sector", &sector),
            ("existing", &existing),
            ("schema", &schema),
        ],
    )?;
    Ok(Prompt { text, warnings })
}

fn mechanism_label(m: Mechanism) -> &'static str {
    match m {
        Mechanism::SameNode => "same node",
        Mechanism::Swap => "swap",
    }
}

fn event_line(e: &InteractionEvent) -> String {
    let nodes: Vec<&str> = e.nodes.iter().map(|n| n.0.as_str()).collect();
    let at = if e.nodes.len() > 1 { "between nodes" } else { "at node" };
    format!(
        "{} and {} interact at t={} {at} {} ({}, {})",
        e.pair.0,
        e.pair.1,
        e.t,
        nodes.join(" and "),
        mechanism_label(e.mechanism),
        e.class.label()
    )
}

fn requirement_text(params: &BenchmarkParams) -> String {
    let base = format!("{} aircraft over duration {}", params.n_aircraft, params.duration);
    match params.target_pairs {
        Some(k) => format!("{base}, with exactly {k} unique interacting pairs and no others."),
        None => format!("{base}, with no interacting pairs."),
    }
}

fn pair_target_met(v: &Verification, params: &BenchmarkParams) -> bool {
    v.unique_pairs.len() == params.target_pairs.unwrap_or(0) as usize
}

/// Whether a verified scenario satisfies the task: the required number of
/// interacting pairs (none unless a target is set) and a clean validation.
pub fn requirement_met(v: &Verification, params: &BenchmarkParams) -> bool {
    pair_target_met(v, params) && v.validation.is_valid()
}

/// Feedback for a scenario that failed its requirement. Lists every
/// interacting pair with time, nodes, mechanism and class, plus validation
/// findings.
pub fn build_feedback(
    t: &Templates,
    verification: &Verification,
    params: &BenchmarkParams,
    attempt: u32,
) -> Result<String, PromptError> {
    let v = verification;
    let pair_count = v.unique_pairs.len();
    let pairs_wrong = !pair_target_met(v, params);
    if !pairs_wrong && v.validation.is_valid() {
        return Err(PromptError::EmptyReport);
    }
    let mut findings = Vec::new();
    for violation in &v.validation.violations {
        let who = violation.aircraft.as_deref().map(|a| format!("{a}: ")).unwrap_or_default();
        findings.push(format!("- {who}{} ({})", violation.detail, violation.rule));
    }
    for e in &v.validation.spawn_grace_violations {
        findings.push(format!(
            "- spawn grace rule broken: {}; no aircraft may interact on its spawn step or the step after",
            event_line(e)
        ));
    }
    if pairs_wrong {
        match params.target_pairs {
            Some(k) => findings.push(format!("- found {pair_count} unique interacting pairs, required {k}:")),
            None => findings.push(format!("- found {pair_count} interacting pairs, required none:")),
        }
        for e in &v.events {
            findings.push(format!("  - {}", event_line(e)));
        }
    }
    t.render(
        "feedback",
        &[
            ("attempt", &attempt.to_string()),
            ("requirement", &requirement_text(params)),
            ("findings", &findings.join("\n")),
        ],
    )
}
