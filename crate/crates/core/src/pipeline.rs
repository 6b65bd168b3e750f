//! The three debunking strategies and their provenance.
//!
//! * generic: one prompt with the full fallacy taxonomy and a fixed example.
//! * contextual: predicted fallacy plus the most similar gold exemplar with
//!   that label, bound into a single prompt.
//! * structured: four layers (agent fact, paraphrased myth, fallacy
//!   explanation, closing fact with optional evidence) assembled into a
//!   sandwich.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{run_agent, AgentConfig, AgentContext, AgentError, AgentTranscript};
use crate::corpus::{
    cosine_similarity, select_evidence, select_exemplar, select_exemplar_global, EmbeddingVector,
    EvidenceCorpus, ExemplarCorpus, ExemplarMatch, RetrievalError,
};
use crate::gateway::{
    CardsPrediction, ChatGateway, ChatRequest, FallacyPrediction, GatewayError, Gateways,
};
use crate::prompt::{bindings, PromptError, RenderedPrompt, TemplateId, TemplateSet};
use crate::sandwich::{
    parse_sandwich, validate_sandwich, word_count, SandwichError, StructureReport, TruthSandwich,
};
use crate::taxonomy::Taxonomy;

/// Exemplar debunkings longer than this are still passed whole, with a warning.
pub const EXAMPLE_WARNING_WORDS: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Generic,
    Contextual,
    Structured,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Generic,
        Strategy::Contextual,
        Strategy::Structured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Generic => "generic",
            Strategy::Contextual => "contextual",
            Strategy::Structured => "structured",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy {0:?} (expected generic, contextual or structured)")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generic" => Ok(Strategy::Generic),
            "contextual" => Ok(Strategy::Contextual),
            "structured" => Ok(Strategy::Structured),
            _ => Err(UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebunkRequest {
    pub myth: String,
    pub strategy: Strategy,
    #[serde(default)]
    pub run_seed: u64,
}

/// Named point of failure inside a strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    PromptRender,
    Generation,
    Parsing,
    FallacyPrediction,
    Embedding,
    ExemplarSelection,
    Agent,
    CardsPrediction,
    EvidenceSelection,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::PromptRender => "prompt_render",
            Stage::Generation => "generation",
            Stage::Parsing => "parsing",
            Stage::FallacyPrediction => "fallacy_prediction",
            Stage::Embedding => "embedding",
            Stage::ExemplarSelection => "exemplar_selection",
            Stage::Agent => "agent",
            Stage::CardsPrediction => "cards_prediction",
            Stage::EvidenceSelection => "evidence_selection",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Sandwich(#[from] SandwichError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// A failed request, attributed to the stage (and structured layer) that failed.
#[derive(Debug, Error)]
pub struct PipelineError {
    pub strategy: Strategy,
    /// Structured-strategy layer, 1 to 4.
    pub layer: Option<u8>,
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(
                f,
                "{} strategy, layer {l}, stage {}: {}",
                self.strategy, self.stage, self.source
            ),
            None => write!(
                f,
                "{} strategy, stage {}: {}",
                self.strategy, self.stage, self.source
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackFlag {
    /// No exemplar carried the predicted label; the global best was used.
    ExemplarFallback,
}

/// One rendered prompt and the raw text it produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTrace {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<u8>,
    pub template_id: TemplateId,
    pub bindings: BTreeMap<String, String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallacy_prediction: Option<FallacyPrediction>,
    /// Where the bound definition text came from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub definition_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exemplar_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exemplar_similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cards_prediction: Option<CardsPrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_claim_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_sentence_ids: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fact2_variant: Option<TemplateId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent_transcript: Option<AgentTranscript>,
    pub fallback_flags: Vec<FallbackFlag>,
    pub warnings: Vec<String>,
    pub prompts: Vec<PromptTrace>,
}

impl Provenance {
    fn new(strategy: Strategy, model: &str) -> Self {
        Self {
            strategy,
            model: model.to_string(),
            fallacy_prediction: None,
            definition_source: None,
            exemplar_id: None,
            exemplar_similarity: None,
            cards_prediction: None,
            evidence_claim_id: None,
            evidence_sentence_ids: None,
            fact2_variant: None,
            agent_transcript: None,
            fallback_flags: Vec::new(),
            warnings: Vec::new(),
            prompts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebunkResult {
    pub myth: String,
    pub sandwich: TruthSandwich,
    pub structure: StructureReport,
    pub provenance: Provenance,
    /// Wall-clock durations; omitted from [`DebunkResult::canonical_json`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<StageTiming>,
}

impl DebunkResult {
    /// Single-line JSON without timings. Replayed runs produce identical bytes.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.timings.clear();
        serde_json::to_string(&copy).expect("result serializes")
    }
}

/// Corpora used by the contextual and structured strategies.
#[derive(Debug, Clone)]
pub struct Corpora {
    pub exemplars: ExemplarCorpus,
    pub evidence: EvidenceCorpus,
}

/// Everything a request runs against. `gateways.chat` is the model the
/// strategy targets; callers choose it per strategy.
pub struct PipelineContext<'a> {
    pub gateways: &'a Gateways,
    pub corpora: &'a Corpora,
    pub templates: &'a TemplateSet,
    pub agent: AgentConfig,
}

struct Run<'a> {
    ctx: &'a PipelineContext<'a>,
    strategy: Strategy,
    seed: u64,
    layer: Option<u8>,
    provenance: Provenance,
    timings: Vec<StageTiming>,
}

impl<'a> Run<'a> {
    fn new(ctx: &'a PipelineContext<'a>, strategy: Strategy, seed: u64) -> Self {
        Self {
            ctx,
            strategy,
            seed,
            layer: None,
            provenance: Provenance::new(strategy, &ctx.gateways.chat.settings().model),
            timings: Vec::new(),
        }
    }

    fn fail(&self, stage: Stage, err: impl Into<StageError>) -> PipelineError {
        PipelineError {
            strategy: self.strategy,
            layer: self.layer,
            stage,
            source: err.into(),
        }
    }

    fn timed<T, E: Into<StageError>>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&Self) -> Result<T, E>,
    ) -> Result<T, PipelineError> {
        let start = Instant::now();
        let out = f(self).map_err(|e| self.fail(stage, e));
        let label = match self.layer {
            Some(l) => format!("layer{l}.{stage}"),
            None => stage.to_string(),
        };
        self.timings.push(StageTiming {
            stage: label,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    fn render(
        &mut self,
        id: TemplateId,
        b: BTreeMap<String, String>,
    ) -> Result<RenderedPrompt, PipelineError> {
        self.timed(Stage::PromptRender, |r| r.ctx.templates.render(id, &b))
    }

    /// Sends the prompt and records the trace.
    fn generate(
        &mut self,
        chat: &ChatGateway,
        prompt: RenderedPrompt,
    ) -> Result<String, PipelineError> {
        let request = ChatRequest::from_prompt(&prompt, chat.settings(), self.seed);
        let output = self.timed(Stage::Generation, |_| chat.complete(&request))?;
        self.provenance.prompts.push(PromptTrace {
            layer: self.layer,
            template_id: prompt.template_id,
            bindings: prompt.provenance,
            output: output.clone(),
        });
        Ok(output)
    }

    fn predict_fallacy(&mut self, myth: &str) -> Result<FallacyPrediction, PipelineError> {
        let p = self.timed(Stage::FallacyPrediction, |r| {
            r.ctx.gateways.fallacy.predict_fallacy(myth)
        })?;
        self.provenance.fallacy_prediction = Some(p.clone());
        self.provenance.definition_source = Some("taxonomy".to_string());
        Ok(p)
    }

    fn embed(&mut self, text: &str) -> Result<EmbeddingVector, PipelineError> {
        self.timed(Stage::Embedding, |r| r.ctx.gateways.embed.embed(text))
    }

    /// Same-label exemplar, or the global best with a fallback flag.
    fn exemplar(
        &mut self,
        myth_vec: &EmbeddingVector,
        prediction: &FallacyPrediction,
    ) -> Result<ExemplarMatch, PipelineError> {
        let chosen = self.timed(Stage::ExemplarSelection, |r| {
            let corpus = &r.ctx.corpora.exemplars;
            match select_exemplar(myth_vec, prediction.label, corpus, &r.ctx.gateways.embed) {
                Err(RetrievalError::NoCandidates(_)) => {
                    select_exemplar_global(myth_vec, corpus, &r.ctx.gateways.embed)
                        .map(|m| (m, true))
                }
                other => other.map(|m| (m, false)),
            }
        })?;
        let (m, fell_back) = chosen;
        if fell_back {
            self.provenance
                .fallback_flags
                .push(FallbackFlag::ExemplarFallback);
            self.provenance.warnings.push(format!(
                "no exemplar labelled {}; used the most similar exemplar overall",
                prediction.label
            ));
        }
        self.provenance.exemplar_id = Some(m.record.id.clone());
        self.provenance.exemplar_similarity = Some(m.similarity);
        Ok(m)
    }

    fn finish(mut self, myth: &str, mut sandwich: TruthSandwich) -> DebunkResult {
        sandwich.refresh_counts();
        let structure = validate_sandwich(&sandwich);
        for (slot, over) in [
            ("fact1", structure.over_budget.fact1),
            ("myth", structure.over_budget.myth),
            ("fallacy", structure.over_budget.fallacy),
            ("fact2", structure.over_budget.fact2),
        ] {
            if over {
                self.provenance
                    .warnings
                    .push(format!("{slot} exceeds its word budget"));
            }
        }
        DebunkResult {
            myth: myth.to_string(),
            sandwich,
            structure,
            provenance: self.provenance,
            timings: self.timings,
        }
    }
}

fn check_input(req: &DebunkRequest) -> Result<String, PipelineError> {
    let myth = req.myth.trim();
    if myth.is_empty() {
        return Err(PipelineError {
            strategy: req.strategy,
            layer: None,
            stage: Stage::Input,
            source: StageError::InvalidInput("myth text is empty".to_string()),
        });
    }
    Ok(myth.to_string())
}

/// Runs the requested strategy.
pub fn debunk(
    req: &DebunkRequest,
    ctx: &PipelineContext<'_>,
) -> Result<DebunkResult, PipelineError> {
    match req.strategy {
        Strategy::Generic => run_generic(req, ctx),
        Strategy::Contextual => run_contextual(req, ctx),
        Strategy::Structured => run_structured(req, ctx),
    }
}

pub fn run_generic(
    req: &DebunkRequest,
    ctx: &PipelineContext<'_>,
) -> Result<DebunkResult, PipelineError> {
    let myth = check_input(req)?;
    let mut run = Run::new(ctx, Strategy::Generic, req.run_seed);
    let prompt = run.render(TemplateId::Generic, bindings([("text", myth.as_str())]))?;
    let output = run.generate(&ctx.gateways.chat, prompt)?;
    let sandwich = run.timed(Stage::Parsing, |_| parse_sandwich(&output))?;
    Ok(run.finish(&myth, sandwich))
}

pub fn run_contextual(
    req: &DebunkRequest,
    ctx: &PipelineContext<'_>,
) -> Result<DebunkResult, PipelineError> {
    let myth = check_input(req)?;
    let mut run = Run::new(ctx, Strategy::Contextual, req.run_seed);
    let prediction = run.predict_fallacy(&myth)?;
    let myth_vec = run.embed(&myth)?;
    let exemplar = run.exemplar(&myth_vec, &prediction)?;

    let example = exemplar.record.debunking.format_canonical(false);
    let example_words = word_count(&example);
    if example_words > EXAMPLE_WARNING_WORDS {
        run.provenance
            .warnings
            .push(format!("exemplar debunking is {example_words} words long"));
    }
    let label = Taxonomy::builtin().get(prediction.label);
    let prompt = run.render(
        TemplateId::Contextual,
        bindings([
            ("claim", exemplar.record.myth_text.as_str()),
            ("fallacy", label.name.name()),
            ("definition", label.definition.as_str()),
            ("example", example.as_str()),
            ("text", myth.as_str()),
        ]),
    )?;
    let output = run.generate(&ctx.gateways.chat, prompt)?;
    let sandwich = run.timed(Stage::Parsing, |_| parse_sandwich(&output))?;
    Ok(run.finish(&myth, sandwich))
}

/// Drops answer labels and chat delimiters a model may echo around a layer.
fn clean_layer_output(text: &str) -> String {
    let mut t = text.trim();
    for tag in ["</s>", "[/INST]"] {
        while let Some(rest) = t.strip_suffix(tag) {
            t = rest.trim_end();
        }
    }
    for label in ["Summary:", "Response:", "# Summary:"] {
        if let Some(rest) = t.strip_prefix(label) {
            t = rest.trim_start();
        }
    }
    t.to_string()
}

fn layer_text(run: &Run<'_>, output: &str) -> Result<String, PipelineError> {
    let text = clean_layer_output(output);
    if text.is_empty() {
        return Err(run.fail(Stage::Generation, SandwichError::EmptyOutput));
    }
    Ok(text)
}

pub fn run_structured(
    req: &DebunkRequest,
    ctx: &PipelineContext<'_>,
) -> Result<DebunkResult, PipelineError> {
    let myth = check_input(req)?;
    let mut run = Run::new(ctx, Strategy::Structured, req.run_seed);
    let chat = &ctx.gateways.chat;

    // Layer 1: searched fact.
    run.layer = Some(1);
    let agent_ctx = AgentContext {
        chat,
        search: &ctx.gateways.search,
        templates: ctx.templates,
        seed: req.run_seed,
    };
    let agent = match run.timed(Stage::Agent, |r| run_agent(&myth, &r.ctx.agent, &agent_ctx)) {
        Ok(a) => a,
        Err(e) => {
            if let StageError::Agent(a) = &e.source {
                run.provenance.agent_transcript = a.transcript().cloned();
            }
            return Err(e);
        }
    };
    if agent.over_budget {
        run.provenance.warnings.push(format!(
            "agent final answer exceeds {} words or {} sentences",
            ctx.agent.answer_word_budget, ctx.agent.answer_sentence_budget
        ));
    }
    run.provenance.agent_transcript = Some(agent.transcript.clone());
    let fact1 = agent.final_answer;

    // Layer 2: paraphrased myth.
    run.layer = Some(2);
    let prompt = run.render(TemplateId::Paraphrase, bindings([("text", myth.as_str())]))?;
    let output = run.generate(chat, prompt)?;
    let myth_slot = layer_text(&run, &output)?;

    // Layer 3: fallacy explanation.
    run.layer = Some(3);
    let prediction = run.predict_fallacy(&myth)?;
    let myth_vec = run.embed(&myth)?;
    let exemplar = run.exemplar(&myth_vec, &prediction)?;
    let label = Taxonomy::builtin().get(prediction.label);
    let prompt = run.render(
        TemplateId::FallacyLayer,
        bindings([
            ("misinformation", myth.as_str()),
            ("detected_fallacy", label.name.name()),
            ("fallacy_definition", label.definition.as_str()),
            ("factual_information", fact1.as_str()),
            ("example_myth", exemplar.record.myth_text.as_str()),
            (
                "example_response",
                exemplar.record.debunking.fallacy_text.as_str(),
            ),
        ]),
    )?;
    let output = run.generate(chat, prompt)?;
    let fallacy_slot = layer_text(&run, &output)?;

    // Layer 4: closing fact, with evidence when a claim of the same category exists.
    run.layer = Some(4);
    let cards = run.timed(Stage::CardsPrediction, |r| {
        r.ctx.gateways.cards.predict_cards(&myth)
    })?;
    run.provenance.cards_prediction = Some(cards.clone());
    let evidence = run.timed(Stage::EvidenceSelection, |r| {
        select_evidence(
            &myth_vec,
            &cards.label,
            &r.ctx.corpora.evidence,
            &r.ctx.gateways.embed,
        )
    })?;
    let prompt = match &evidence {
        Some(m) => {
            run.provenance.evidence_claim_id = Some(m.claim.id.clone());
            run.provenance.evidence_sentence_ids =
                Some(m.sentences.iter().map(|s| s.sentence_id.clone()).collect());
            let details = m
                .sentences
                .iter()
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            run.render(
                TemplateId::Fact2WithEvidence,
                bindings([
                    ("complementary_details", details.as_str()),
                    ("fact", fact1.as_str()),
                ]),
            )?
        }
        None => run.render(TemplateId::Fact2Plain, bindings([("fact", fact1.as_str())]))?,
    };
    run.provenance.fact2_variant = Some(prompt.template_id);
    let output = run.generate(chat, prompt)?;
    let fact2 = layer_text(&run, &output)?;

    run.layer = None;
    let sandwich = TruthSandwich::from_slots(&fact1, &myth_slot, &fallacy_slot, &fact2);
    Ok(run.finish(&myth, sandwich))
}

/// Recomputes a contextual/structured exemplar similarity from scratch.
pub fn recompute_similarity(
    gateways: &Gateways,
    myth: &str,
    exemplar_myth: &str,
) -> Result<f64, RetrievalError> {
    let a = gateways.embed.embed(myth)?;
    let b = gateways.embed.embed(exemplar_myth)?;
    cosine_similarity(&a, &b)
}
