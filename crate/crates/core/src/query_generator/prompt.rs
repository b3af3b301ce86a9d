//! Prompt assembly and SPARQL extraction from model output.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const PROMPT_RESOURCE: &str = include_str!("../../resources/generation_prompt_v1.txt");

pub const PROMPT_VERSION: &str = "generation_prompt_v1";

const ONTOLOGY_HEADING: &str = "### Ontology";
const TEMPLATES_HEADING: &str = "### Reference templates";
const QUESTION_HEADING: &str = "### Question";
const FORMAT_HEADING: &str = "### Output format";
/// Opens the repair section: `### Repair (attempt K of N)`.
pub const REPAIR_HEADING: &str = "### Repair (attempt ";

struct PromptText {
    role: String,
    output: String,
    repair: String,
}

fn prompt_text() -> &'static PromptText {
    static TEXT: OnceLock<PromptText> = OnceLock::new();
    TEXT.get_or_init(|| {
        let mut sections = std::collections::HashMap::new();
        let mut current: Option<&str> = None;
        for line in PROMPT_RESOURCE.lines() {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name);
                continue;
            }
            if let Some(name) = current {
                let entry: &mut String = sections.entry(name).or_default();
                if !entry.is_empty() {
                    entry.push('\n');
                }
                entry.push_str(line);
            }
        }
        let mut take = |name: &str| sections.remove(name).unwrap_or_else(|| panic!("prompt resource lacks [{name}]"));
        PromptText {
            role: take("role"),
            output: take("output"),
            repair: take("repair"),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub sparql_text: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorError {
    pub failed_query: String,
    pub error: String,
    /// Number of the attempt this prompt is for (2 or more).
    pub attempt: usize,
    pub max_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub question: String,
    /// Empty when generating without templates.
    pub templates: Vec<PromptTemplate>,
    pub ontology_text: String,
    pub prior_error: Option<PriorError>,
}

/// Role, ontology, templates, question, output format, then the repair
/// section when a prior attempt failed.
pub fn build_prompt(bundle: &PromptBundle) -> String {
    let text = prompt_text();
    let mut out = String::new();
    out.push_str(&text.role);
    out.push_str("\n\n");
    out.push_str(ONTOLOGY_HEADING);
    out.push('\n');
    out.push_str(bundle.ontology_text.trim_end());
    out.push_str("\n\n");
    if !bundle.templates.is_empty() {
        out.push_str(TEMPLATES_HEADING);
        out.push('\n');
        for (i, t) in bundle.templates.iter().enumerate() {
            out.push_str(&format!("Template {} (target {}):\n```sparql\n{}\n```\n", i + 1, t.target, t.sparql_text));
        }
        out.push('\n');
    }
    out.push_str(QUESTION_HEADING);
    out.push('\n');
    out.push_str(bundle.question.trim());
    out.push_str("\n\n");
    out.push_str(FORMAT_HEADING);
    out.push('\n');
    out.push_str(&text.output);
    out.push('\n');
    if let Some(prior) = &bundle.prior_error {
        out.push('\n');
        out.push_str(&format!("{REPAIR_HEADING}{} of {})\n", prior.attempt, prior.max_attempts));
        out.push_str(&format!("Failed query:\n```sparql\n{}\n```\n", prior.failed_query));
        out.push_str(&format!("Error: {}\n", prior.error));
        out.push_str(&text.repair);
        out.push('\n');
    }
    out
}

/// Question line of a prompt built by [`build_prompt`].
pub fn prompt_question(prompt: &str) -> Option<&str> {
    let start = prompt.find(&format!("{QUESTION_HEADING}\n"))? + QUESTION_HEADING.len() + 1;
    let rest = &prompt[start..];
    Some(rest.split("\n\n").next().unwrap_or(rest).trim())
}

/// Attempt number encoded in the repair section; 1 when there is none.
pub fn prompt_attempt(prompt: &str) -> usize {
    prompt
        .rfind(REPAIR_HEADING)
        .and_then(|i| {
            let rest = &prompt[i + REPAIR_HEADING.len()..];
            rest.split(|c: char| !c.is_ascii_digit()).next()?.parse().ok()
        })
        .unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no SPARQL query found in model output")]
pub struct ExtractionError;

/// Content of the first fenced block, else the text from the first
/// PREFIX/SELECT/ASK keyword to the end.
pub fn extract_sparql(output: &str) -> Result<String, ExtractionError> {
    if let Some(open) = output.find("```") {
        let after = &output[open + 3..];
        // skip the info string (e.g. "sparql")
        let body = after.split_once('\n').map_or("", |(_, b)| b);
        let content = body.find("```").map_or(body, |end| &body[..end]).trim();
        if !content.is_empty() {
            return Ok(content.to_string());
        }
    }
    let upper = output.to_ascii_uppercase();
    let at_boundary = |i: usize, len: usize| {
        let before = upper[..i].chars().next_back();
        let after = upper[i + len..].chars().next();
        !before.is_some_and(|c| c.is_alphanumeric() || c == '_') && !after.is_some_and(|c| c.is_alphanumeric() || c == '_')
    };
    ["PREFIX", "SELECT", "ASK"]
        .iter()
        .filter_map(|kw| {
            upper
                .match_indices(kw)
                .map(|(i, _)| i)
                .find(|&i| at_boundary(i, kw.len()))
        })
        .min()
        .map(|i| output[i..].trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or(ExtractionError)
}
