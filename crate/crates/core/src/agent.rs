//! ReAct fact-finding loop for the opening fact.
//!
//! The model reframes the myth as a question, alternates Thought / Action /
//! Observation with a web-search tool and ends with a short `Final Answer`.
//! Generation stops at `Observation:` so every observation in the transcript
//! comes from the tool, never from the model.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatGateway, ChatRequest, GatewayError, SearchGateway, SearchResult};
use crate::prompt::{PromptError, TemplateId, TemplateSet};
use crate::sandwich::word_count;

pub const SEARCH_TOOL: &str = "web_search";
const SEARCH_TOOL_DESCRIPTION: &str =
    "web_search: Searches the web and returns the top five results. Input should be a search query.";
pub const NO_RESULTS_OBSERVATION: &str = "No results found.";
const INVALID_FORMAT_OBSERVATION: &str =
    "Invalid Format: reply with 'Action:' and 'Action Input:' lines, or with 'Final Answer:'.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub answer_word_budget: usize,
    pub answer_sentence_budget: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 6,
            answer_word_budget: 30,
            answer_sentence_budget: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Output that matched neither pattern and triggered a reprompt.
    Thought,
    Action,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStep {
    pub kind: StepKind,
    pub thought: String,
    pub action_name: Option<String>,
    pub action_input: Option<String>,
    pub observation: Option<String>,
    pub final_answer: Option<String>,
    /// Raw model output for this step, after stop-sequence truncation.
    pub log: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FinalAnswer,
    IterationCap,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub steps: Vec<AgentStep>,
    pub iterations_used: usize,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model output contains neither 'Final Answer:' nor an 'Action:'/'Action Input:' pair")]
pub struct StepParseFailure;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("unparseable agent output after one reprompt")]
    StepParseFailure { transcript: AgentTranscript },
    #[error("no final answer within {} iterations", .transcript.iterations_used)]
    IterationCapReached { transcript: AgentTranscript },
}

impl AgentError {
    pub fn transcript(&self) -> Option<&AgentTranscript> {
        match self {
            AgentError::StepParseFailure { transcript }
            | AgentError::IterationCapReached { transcript } => Some(transcript),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRun {
    pub final_answer: String,
    pub transcript: AgentTranscript,
    /// The answer exceeds the word or sentence budget.
    pub over_budget: bool,
}

fn final_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)Final Answer\s*:\s*(.*)").expect("static regex"))
}

fn action_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)Action\s*\d*\s*:[\s]*(.*?)[\s]*Action\s*\d*\s*Input\s*\d*\s*:[\s]*(.*)")
            .expect("static regex")
    })
}

fn clean_thought(text: &str) -> String {
    let t = text.trim();
    t.strip_prefix("Thought:").unwrap_or(t).trim().to_string()
}

/// Reads one model turn: a final answer (checked first) or a tool call.
pub fn parse_step(model_output: &str) -> Result<AgentStep, StepParseFailure> {
    let log = model_output.trim_end().to_string();
    if let Some(caps) = final_regex().captures(&log) {
        let start = caps.get(0).map_or(0, |m| m.start());
        let answer = caps[1].trim().to_string();
        if !answer.is_empty() {
            return Ok(AgentStep {
                kind: StepKind::Final,
                thought: clean_thought(&log[..start]),
                action_name: None,
                action_input: None,
                observation: None,
                final_answer: Some(answer),
                log,
            });
        }
    }
    if let Some(caps) = action_regex().captures(&log) {
        let start = caps.get(0).map_or(0, |m| m.start());
        let name = caps[1].trim().to_string();
        let input = caps[2].trim().trim_matches('"').trim().to_string();
        if !name.is_empty() && !input.is_empty() {
            return Ok(AgentStep {
                kind: StepKind::Action,
                thought: clean_thought(&log[..start]),
                action_name: Some(name),
                action_input: Some(input),
                observation: None,
                final_answer: None,
                log,
            });
        }
    }
    Err(StepParseFailure)
}

/// Observation text shown to the model for a set of search results.
pub fn format_observation(results: &[SearchResult]) -> String {
    if results.is_empty() {
        return NO_RESULTS_OBSERVATION.to_string();
    }
    results
        .iter()
        .map(|r| format!("{}: {}", r.title.trim(), r.snippet.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn sentence_count(text: &str) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[.!?]+(\s+|$)").expect("static regex"));
    re.split(text.trim())
        .filter(|s| !s.trim().is_empty())
        .count()
}

fn scratchpad(steps: &[AgentStep]) -> String {
    let mut pad = String::new();
    for step in steps {
        pad.push_str(&step.log);
        if let Some(obs) = &step.observation {
            pad.push_str("\nObservation: ");
            pad.push_str(obs);
            pad.push_str("\nThought: ");
        }
    }
    pad
}

/// Everything the loop needs besides the myth.
pub struct AgentContext<'a> {
    pub chat: &'a ChatGateway,
    pub search: &'a SearchGateway,
    pub templates: &'a TemplateSet,
    pub seed: u64,
}

/// Runs the loop until a final answer or the iteration cap.
pub fn run_agent(
    myth: &str,
    cfg: &AgentConfig,
    ctx: &AgentContext<'_>,
) -> Result<AgentRun, AgentError> {
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut last_failed = false;
    let transcript = |steps: &[AgentStep], by: Termination| AgentTranscript {
        steps: steps.to_vec(),
        iterations_used: steps.len(),
        terminated_by: by,
    };

    while steps.len() < cfg.max_iterations {
        let bindings = crate::prompt::bindings([
            ("tools", SEARCH_TOOL_DESCRIPTION),
            ("tool_names", SEARCH_TOOL),
            ("input", myth),
            ("agent_scratchpad", &scratchpad(&steps)),
        ]);
        let prompt = ctx.templates.render(TemplateId::React, &bindings)?;
        let request = ChatRequest::from_prompt(&prompt, ctx.chat.settings(), ctx.seed);
        let output = ctx.chat.complete(&request)?;

        match parse_step(&output) {
            Ok(mut step) if step.kind == StepKind::Final => {
                let answer = step.final_answer.clone().unwrap_or_default();
                step.observation = None;
                steps.push(step);
                let over_budget = word_count(&answer) > cfg.answer_word_budget
                    || sentence_count(&answer) > cfg.answer_sentence_budget;
                return Ok(AgentRun {
                    final_answer: answer,
                    transcript: transcript(&steps, Termination::FinalAnswer),
                    over_budget,
                });
            }
            Ok(mut step) => {
                last_failed = false;
                let name = step.action_name.clone().unwrap_or_default();
                let observation = if name == SEARCH_TOOL {
                    let query = step.action_input.clone().unwrap_or_default();
                    format_observation(&ctx.search.web_search(&query)?)
                } else {
                    format!("{name} is not a valid tool, try one of [{SEARCH_TOOL}].")
                };
                step.observation = Some(observation);
                steps.push(step);
            }
            Err(StepParseFailure) => {
                let log = output.trim_end().to_string();
                steps.push(AgentStep {
                    kind: StepKind::Thought,
                    thought: clean_thought(&log),
                    action_name: None,
                    action_input: None,
                    observation: Some(INVALID_FORMAT_OBSERVATION.to_string()),
                    final_answer: None,
                    log,
                });
                if last_failed {
                    return Err(AgentError::StepParseFailure {
                        transcript: transcript(&steps, Termination::ParseFailure),
                    });
                }
                last_failed = true;
            }
        }
    }
    Err(AgentError::IterationCapReached {
        transcript: transcript(&steps, Termination::IterationCap),
    })
}
