//! TOML configuration and construction of the debunking engine from it.
//!
//! Relative paths resolve against the directory holding the config file.
//! Environment variables supply credentials and may override base URLs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use gendebunk_core::agent::AgentConfig;
use gendebunk_core::corpus::{Corpus, CorpusRecord, EvidenceCorpus, ExemplarCorpus};
use gendebunk_core::evaluation::CategorySet;
use gendebunk_core::gateway::{
    CardsGateway, Cassette, ChatGateway, ChatSettings, EmbedBackend, EmbedGateway, FallacyGateway,
    Gateways, HttpTransport, Recorder, Replayer, SearchGateway, StubEmbedder, Transport,
    Unconfigured, STUB_DIMENSION,
};
use gendebunk_core::pipeline::{
    debunk, Corpora, DebunkRequest, DebunkResult, PipelineContext, PipelineError, Strategy,
};
use gendebunk_core::prompt::TemplateSet;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Call backends over HTTP.
    Live,
    /// Call backends and write every exchange to the cassette.
    Record,
    /// Serve every call from the cassette; no network.
    #[default]
    Replay,
}

/// One HTTP backend. `base_url_env` wins over `base_url` when set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backend {
    pub base_url: Option<String>,
    pub base_url_env: Option<String>,
    pub api_key_env: Option<String>,
}

impl Backend {
    fn resolved_url(&self) -> Option<String> {
        self.base_url_env
            .as_ref()
            .and_then(|v| std::env::var(v).ok())
            .filter(|v| !v.trim().is_empty())
            .or_else(|| self.base_url.clone())
    }

    fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_ref()
            .and_then(|v| std::env::var(v).ok())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatBackend {
    #[serde(flatten)]
    pub backend: Backend,
    #[serde(flatten)]
    pub settings: ChatSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub kind: EmbedKind,
    pub dimension: usize,
    #[serde(flatten)]
    pub backend: Backend,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            kind: EmbedKind::Stub,
            dimension: STUB_DIMENSION,
            backend: Backend::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorporaConfig {
    pub exemplars: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub myths: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub cassette: Option<PathBuf>,
    pub timeout_secs: u64,
    pub snippet_chars: Option<usize>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            cassette: None,
            timeout_secs: 60,
            snippet_chars: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSection {
    pub max_iterations: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            max_iterations: AgentConfig::default().max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Categories {
    #[default]
    #[serde(rename = "0-3")]
    #[value(name = "0-3")]
    ZeroToThree,
    #[serde(rename = "1-3")]
    #[value(name = "1-3")]
    OneToThree,
}

impl From<Categories> for CategorySet {
    fn from(c: Categories) -> Self {
        match c {
            Categories::ZeroToThree => CategorySet::ZeroToThree,
            Categories::OneToThree => CategorySet::OneToThree,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub categories: Categories,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub addr: String,
    pub store: Option<PathBuf>,
    /// Batch outputs whose results become the annotation study items.
    pub study_results: Vec<PathBuf>,
    /// Environment variable holding the shared API token, if any.
    pub token_env: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".to_string(),
            store: None,
            study_results: Vec::new(),
            token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub corpora: CorporaConfig,
    /// Template directory; the bundled templates when absent.
    pub templates: Option<PathBuf>,
    pub gateways: GatewayConfig,
    /// Chat backends by name.
    pub chat: BTreeMap<String, ChatBackend>,
    /// Chat backend name per strategy.
    pub strategies: BTreeMap<Strategy, String>,
    pub fallacy: Backend,
    pub cards: Backend,
    pub search: Backend,
    pub embed: EmbedConfig,
    pub agent: AgentSection,
    pub evaluation: EvaluationConfig,
    pub service: ServiceConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        let mut chat = BTreeMap::new();
        let mut strategies = BTreeMap::new();
        for (strategy, model) in [
            (Strategy::Generic, "gpt-4"),
            (Strategy::Contextual, "palm-2"),
            (Strategy::Structured, "mixtral"),
        ] {
            chat.insert(
                model.to_string(),
                ChatBackend {
                    settings: ChatSettings {
                        model: model.to_string(),
                        ..ChatSettings::default()
                    },
                    ..ChatBackend::default()
                },
            );
            strategies.insert(strategy, model.to_string());
        }
        Self {
            corpora: CorporaConfig::default(),
            templates: None,
            gateways: GatewayConfig::default(),
            chat,
            strategies,
            fallacy: Backend::default(),
            cards: Backend::default(),
            search: Backend::default(),
            embed: EmbedConfig::default(),
            agent: AgentSection::default(),
            evaluation: EvaluationConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.corpora.exemplars,
            &mut self.corpora.evidence,
            &mut self.corpora.myths,
            &mut self.templates,
            &mut self.gateways.cassette,
            &mut self.service.store,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.service.study_results.iter_mut().for_each(fix);
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            max_iterations: self.agent.max_iterations,
            ..AgentConfig::default()
        }
    }
}

/// Everything needed to run debunking requests: per-strategy gateways,
/// corpora and templates. Shareable across threads.
pub struct Engine {
    gateways: BTreeMap<Strategy, Gateways>,
    corpora: Corpora,
    templates: TemplateSet,
    agent: AgentConfig,
    cassette: Option<Arc<Cassette>>,
    mode: Mode,
}

fn load_or_empty<T: CorpusRecord>(path: Option<&PathBuf>, what: &str) -> Result<Corpus<T>> {
    match path {
        Some(p) => {
            Corpus::load(p).with_context(|| format!("loading {what} corpus {}", p.display()))
        }
        None => Ok(Corpus::from_records(Vec::new())?),
    }
}

impl Engine {
    pub fn from_config(cfg: &AppConfig) -> Result<Self> {
        let templates = match &cfg.templates {
            Some(dir) => TemplateSet::load_dir(dir)
                .with_context(|| format!("loading templates from {}", dir.display()))?,
            None => TemplateSet::builtin().clone(),
        };
        let exemplars: ExemplarCorpus = load_or_empty(cfg.corpora.exemplars.as_ref(), "exemplar")?;
        let evidence: EvidenceCorpus = load_or_empty(cfg.corpora.evidence.as_ref(), "evidence")?;

        let mode = cfg.gateways.mode;
        let cassette = match (mode, &cfg.gateways.cassette) {
            (Mode::Live, _) => None,
            (Mode::Replay, Some(p)) => {
                Some(Arc::new(Cassette::open(p).with_context(|| {
                    format!("opening cassette {}", p.display())
                })?))
            }
            (Mode::Record, Some(p)) => Some(Arc::new(
                Cassette::create_or_extend(p)
                    .with_context(|| format!("opening cassette {}", p.display()))?,
            )),
            (_, None) => bail!("{mode:?} mode needs a cassette path"),
        };
        let timeout = Duration::from_secs(cfg.gateways.timeout_secs.max(1));
        let transport = |backend: &Backend| -> Arc<dyn Transport> {
            let live = || -> Arc<dyn Transport> {
                match backend.resolved_url() {
                    Some(url) => Arc::new(HttpTransport::new(url, backend.api_key(), timeout)),
                    None => Arc::new(Unconfigured),
                }
            };
            match (mode, &cassette) {
                (Mode::Replay, Some(c)) => Arc::new(Replayer::new(c.clone())),
                (Mode::Record, Some(c)) => Arc::new(Recorder::new(live(), c.clone())),
                _ => live(),
            }
        };

        let embed = match cfg.embed.kind {
            EmbedKind::Stub => EmbedGateway::new(
                EmbedBackend::Stub(StubEmbedder {
                    dimension: cfg.embed.dimension,
                }),
                cfg.embed.dimension,
            )?,
            EmbedKind::Remote => EmbedGateway::new(
                EmbedBackend::Remote {
                    transport: transport(&cfg.embed.backend),
                    dimension: cfg.embed.dimension,
                },
                cfg.embed.dimension,
            )?,
        };
        let mut search = SearchGateway::new(transport(&cfg.search));
        if let Some(chars) = cfg.gateways.snippet_chars {
            search = search.with_snippet_budget(chars);
        }
        let base = Gateways {
            chat: ChatGateway::new(Arc::new(Unconfigured), ChatSettings::default()),
            fallacy: FallacyGateway::new(transport(&cfg.fallacy)),
            cards: CardsGateway::new(transport(&cfg.cards)),
            embed,
            search,
        };
        let mut gateways = BTreeMap::new();
        for strategy in Strategy::ALL {
            let name = cfg
                .strategies
                .get(&strategy)
                .with_context(|| format!("no chat backend mapped to the {strategy} strategy"))?;
            let chat = cfg.chat.get(name).with_context(|| {
                format!("{strategy} strategy maps to unknown chat backend {name:?}")
            })?;
            let mut g = base.clone();
            g.chat = ChatGateway::new(transport(&chat.backend), chat.settings.clone());
            gateways.insert(strategy, g);
        }
        Ok(Self {
            gateways,
            corpora: Corpora {
                exemplars,
                evidence,
            },
            templates,
            agent: cfg.agent_config(),
            cassette,
            mode,
        })
    }

    pub fn gateways(&self, strategy: Strategy) -> &Gateways {
        &self.gateways[&strategy]
    }

    pub fn corpora(&self) -> &Corpora {
        &self.corpora
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn debunk(&self, req: &DebunkRequest) -> Result<DebunkResult, PipelineError> {
        let ctx = PipelineContext {
            gateways: self.gateways(req.strategy),
            corpora: &self.corpora,
            templates: &self.templates,
            agent: self.agent.clone(),
        };
        debunk(req, &ctx)
    }

    /// Writes recorded exchanges to disk. A no-op outside record mode.
    pub fn save_cassette(&self) -> Result<()> {
        if let (Mode::Record, Some(c)) = (self.mode, &self.cassette) {
            c.save().context("saving cassette")?;
        }
        Ok(())
    }
}
