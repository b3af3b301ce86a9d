//! Question → SPARQL generation with retrieval, prompting and a bounded
//! error-feedback repair loop.

mod gateway;
mod prompt;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gateway::{HttpLlm, HttpLlmConfig, LlmError, LlmGateway, Replay, Script, ScriptedLlm, ScriptedResponse};
pub use prompt::{
    build_prompt, extract_sparql, prompt_attempt, prompt_question, ExtractionError, PriorError, PromptBundle,
    PromptTemplate, PROMPT_VERSION, REPAIR_HEADING,
};

use crate::embedding::Embedder;
use crate::sparql::{validate_sparql, QueryError, QueryErrorKind, SparqlExecutor, SparqlResultSet};
use crate::template_store::{RetrievedTemplate, TemplateError, TemplateIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_attempts: usize,
    pub n_templates: usize,
    /// False for the no-template ablation.
    pub use_templates: bool,
    /// Network retries per LLM call; they do not consume an attempt.
    pub transport_retries: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            n_templates: 2,
            use_templates: true,
            transport_retries: 2,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(1..=10).contains(&self.max_attempts) {
            return Err(GenerationError::Input(format!(
                "max_attempts must be in 1..=10, got {}",
                self.max_attempts
            )));
        }
        if !(1..=50).contains(&self.n_templates) {
            return Err(GenerationError::Input(format!(
                "n_templates must be in 1..=50, got {}",
                self.n_templates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ValidationStatus {
    Ok,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecutionStatus {
    Ok { rows: usize },
    Error { error: QueryError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    /// Extracted query, or the raw model output when extraction failed.
    pub query: String,
    pub validation: ValidationStatus,
    /// Absent when validation failed.
    pub execution: Option<ExecutionStatus>,
    pub duration_ms: u64,
}

impl Attempt {
    pub fn succeeded(&self) -> bool {
        self.validation == ValidationStatus::Ok && matches!(self.execution, Some(ExecutionStatus::Ok { .. }))
    }

    /// Error text fed back into the next prompt.
    pub fn error_text(&self) -> Option<String> {
        match (&self.validation, &self.execution) {
            (ValidationStatus::Error { message }, _) => Some(message.clone()),
            (_, Some(ExecutionStatus::Error { error })) => Some(error.to_string()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Success,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub attempts: Vec<Attempt>,
    /// `None` while the loop was interrupted before finishing.
    pub outcome: Option<Outcome>,
    pub final_query: Option<String>,
}

impl GenerationTrace {
    fn new() -> Self {
        Self {
            attempts: Vec::new(),
            outcome: None,
            final_query: None,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GenerationError {
    #[error("no executable query after {} attempts", .trace.attempts.len())]
    Exhausted { trace: GenerationTrace },
    #[error("{error}")]
    Gateway { error: LlmError, trace: GenerationTrace },
    /// SPARQL endpoint unreachable or too slow; not the model's fault, so
    /// the loop stops instead of asking for a repair.
    #[error("{error}")]
    Endpoint { error: QueryError, trace: GenerationTrace },
    #[error(transparent)]
    Retrieval(#[from] TemplateError),
    #[error("invalid input: {0}")]
    Input(String),
}

impl GenerationError {
    pub fn trace(&self) -> Option<&GenerationTrace> {
        match self {
            GenerationError::Exhausted { trace }
            | GenerationError::Gateway { trace, .. }
            | GenerationError::Endpoint { trace, .. } => Some(trace),
            GenerationError::Retrieval(_) | GenerationError::Input(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub results: SparqlResultSet,
    pub trace: GenerationTrace,
}

async fn complete_with_retries(llm: &dyn LlmGateway, prompt: &str, retries: u32) -> Result<String, LlmError> {
    let mut attempt = 0;
    loop {
        match llm.complete(prompt).await {
            Err(LlmError::Transport(message)) if attempt < retries => {
                attempt += 1;
                tracing::warn!(attempt, %message, "LLM transport failure, retrying");
            }
            other => return other,
        }
    }
}

/// Prompt → LLM → extract → validate → execute, at most `max_attempts`
/// times. Each failure is fed back into the next prompt.
pub async fn run_repair_loop(
    question: &str,
    templates: &[PromptTemplate],
    ontology_text: &str,
    llm: &dyn LlmGateway,
    executor: &dyn SparqlExecutor,
    config: &GenerationConfig,
) -> Result<Generated, GenerationError> {
    config.validate()?;
    if question.trim().is_empty() {
        return Err(GenerationError::Input("question is empty".into()));
    }
    if ontology_text.trim().is_empty() {
        return Err(GenerationError::Input("ontology text is empty".into()));
    }
    let mut trace = GenerationTrace::new();
    let mut bundle = PromptBundle {
        question: question.trim().to_string(),
        templates: templates.to_vec(),
        ontology_text: ontology_text.to_string(),
        prior_error: None,
    };
    for attempt_no in 1..=config.max_attempts {
        let started = Instant::now();
        let prompt = build_prompt(&bundle);
        let output = match complete_with_retries(llm, &prompt, config.transport_retries).await {
            Ok(o) => o,
            Err(error) => return Err(GenerationError::Gateway { error, trace }),
        };
        let (query, validation) = match extract_sparql(&output) {
            Ok(q) => {
                let v = match validate_sparql(&q) {
                    Ok(()) => ValidationStatus::Ok,
                    Err(issue) => ValidationStatus::Error {
                        message: format!("syntax error: {issue}"),
                    },
                };
                (q, v)
            }
            Err(e) => (
                output.trim().to_string(),
                ValidationStatus::Error { message: e.to_string() },
            ),
        };
        let mut results = None;
        let execution = if validation == ValidationStatus::Ok {
            match executor.execute(&query).await {
                Ok(rs) => {
                    let status = ExecutionStatus::Ok { rows: rs.len() };
                    results = Some(rs);
                    Some(status)
                }
                Err(error) if matches!(error.kind, QueryErrorKind::Timeout | QueryErrorKind::Transport) => {
                    trace.attempts.push(Attempt {
                        query,
                        validation,
                        execution: Some(ExecutionStatus::Error { error: error.clone() }),
                        duration_ms: started.elapsed().as_millis() as u64,
                    });
                    return Err(GenerationError::Endpoint { error, trace });
                }
                Err(error) => Some(ExecutionStatus::Error { error }),
            }
        } else {
            None
        };
        let attempt = Attempt {
            query,
            validation,
            execution,
            duration_ms: started.elapsed().as_millis() as u64,
        };
        tracing::debug!(attempt = attempt_no, ok = attempt.succeeded(), "generation attempt");
        if let Some(results) = results {
            trace.final_query = Some(attempt.query.clone());
            trace.attempts.push(attempt);
            trace.outcome = Some(Outcome::Success);
            return Ok(Generated { results, trace });
        }
        bundle.prior_error = Some(PriorError {
            failed_query: attempt.query.clone(),
            error: attempt.error_text().unwrap_or_default(),
            attempt: attempt_no + 1,
            max_attempts: config.max_attempts,
        });
        trace.attempts.push(attempt);
    }
    trace.outcome = Some(Outcome::Exhausted);
    Err(GenerationError::Exhausted { trace })
}

/// Everything a generation call needs besides the question.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub index: &'a TemplateIndex,
    pub embedder: &'a dyn Embedder,
    pub llm: &'a dyn LlmGateway,
    pub executor: &'a dyn SparqlExecutor,
    pub ontology_text: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub retrieved: Vec<RetrievedTemplate>,
    pub generated: Generated,
}

impl Pipeline<'_> {
    /// Retrieves templates once, then runs the repair loop with them.
    pub async fn generate_query(
        &self,
        question: &str,
        config: &GenerationConfig,
    ) -> Result<PipelineOutput, (Vec<RetrievedTemplate>, GenerationError)> {
        if let Err(e) = config.validate() {
            return Err((Vec::new(), e));
        }
        if question.trim().is_empty() {
            return Err((Vec::new(), GenerationError::Input("question is empty".into())));
        }
        let retrieved = if config.use_templates {
            match self.index.retrieve(question, config.n_templates, self.embedder).await {
                Ok(r) => r,
                Err(e) => return Err((Vec::new(), e.into())),
            }
        } else {
            Vec::new()
        };
        let templates: Vec<PromptTemplate> = retrieved
            .iter()
            .map(|r| PromptTemplate {
                sparql_text: r.template.sparql_text.clone(),
                target: r.template.target.clone(),
            })
            .collect();
        match run_repair_loop(question, &templates, self.ontology_text, self.llm, self.executor, config).await {
            Ok(generated) => Ok(PipelineOutput { retrieved, generated }),
            Err(e) => Err((retrieved, e)),
        }
    }
}
