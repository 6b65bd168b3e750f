//! Shared test fixtures: a deterministic HTTP simulator for every external
//! backend, configs pointing at it or at the committed cassettes, and the
//! recording scenarios that produce those cassettes.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use gendebunk::config::{AppConfig, Backend, Engine, Mode};
use gendebunk_core::agent::{run_agent, AgentConfig, AgentContext, AgentError, AgentRun};
use gendebunk_core::corpus::MythCorpus;
use gendebunk_core::pipeline::{DebunkRequest, DebunkResult, Strategy};
use gendebunk_core::taxonomy::Fallacy;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn data_dir() -> PathBuf {
    repo_root().join("data")
}

pub fn cassette_path(name: &str) -> PathBuf {
    data_dir().join("cassettes").join(format!("{name}.json"))
}

pub const FLICC20: &str = "flicc20";
pub const AGENT_3STEP: &str = "agent_3step";
pub const AGENT_NOFINAL: &str = "agent_nofinal";

#[derive(Debug, Clone, Deserialize)]
pub struct Entry {
    pub id: String,
    pub text: String,
    pub fallacy: String,
    pub fallacy_confidence: f64,
    pub cards_label: String,
    pub cards_confidence: f64,
    pub react_steps: Vec<String>,
    pub fact1: String,
    pub paraphrase: String,
    pub fallacy_response: String,
    pub fact2: String,
}

#[derive(Debug, Clone)]
struct Sentence {
    claim: String,
    index: usize,
    source: String,
    text: String,
    tokens: BTreeSet<String>,
}

/// What the simulated backends know: scripted answers per myth and the
/// evidence sentences that back the search engine.
#[derive(Debug, Clone)]
pub struct Knowledge {
    pub entries: Vec<Entry>,
    sentences: Vec<Sentence>,
}

fn tokens(text: &str) -> BTreeSet<String> {
    const STOP: [&str; 12] = [
        "the", "and", "for", "are", "was", "has", "have", "that", "this", "with", "from", "since",
    ];
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|t| t.len() >= 3 && !STOP.contains(&t.as_str()))
        .collect()
}

const FALLBACK_FACT1: &str = "Multiple independent lines of evidence show that human greenhouse gas emissions are the main driver of recent climate change.";
const FALLBACK_FALLACY: &str =
    "This argument oversimplifies the evidence and ignores measurements that contradict it.";
const FALLBACK_FACT2: &str =
    "Measurements from around the world confirm that humans are driving today's warming.";

impl Knowledge {
    pub fn load() -> Self {
        let text =
            std::fs::read_to_string(data_dir().join("fixtures/simulator_knowledge.jsonl")).unwrap();
        let entries = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let evidence =
            gendebunk_core::corpus::EvidenceCorpus::load(data_dir().join("corpora/evidence.jsonl"))
                .unwrap();
        let mut sentences = Vec::new();
        for claim in evidence.records() {
            for (index, e) in claim.evidence.iter().enumerate() {
                sentences.push(Sentence {
                    claim: claim.id.clone(),
                    index,
                    source: e.source_id.clone(),
                    text: e.text.clone(),
                    tokens: tokens(&e.text),
                });
            }
        }
        Self { entries, sentences }
    }

    pub fn entry(&self, id: &str) -> &Entry {
        self.entries.iter().find(|e| e.id == id).unwrap()
    }

    fn by_text(&self, text: &str) -> Option<&Entry> {
        let text = text.trim();
        self.entries.iter().find(|e| e.text == text)
    }

    fn by_fact1(&self, fact: &str) -> Option<&Entry> {
        let fact = fact.trim();
        self.entries
            .iter()
            .find(|e| !e.fact1.is_empty() && e.fact1 == fact)
    }

    /// Up to seven hits so callers must apply their own cap.
    pub fn search(&self, query: &str) -> Vec<Value> {
        let q = tokens(query);
        let mut scored: Vec<(usize, &Sentence)> = self
            .sentences
            .iter()
            .map(|s| (q.intersection(&s.tokens).count(), s))
            .filter(|(n, _)| *n > 0)
            .collect();
        scored.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.1.claim.cmp(&b.1.claim))
                .then(a.1.index.cmp(&b.1.index))
        });
        scored
            .into_iter()
            .take(7)
            .map(|(_, s)| {
                json!({
                    "title": s.source.replace('_', " "),
                    "snippet": s.text,
                    "url": format!("https://en.wikipedia.org/wiki/{}", s.source),
                })
            })
            .collect()
    }

    pub fn chat(&self, prompt: &str) -> String {
        let after_last = |marker: &str| -> String {
            prompt
                .rfind(marker)
                .map(|i| &prompt[i + marker.len()..])
                .and_then(|rest| rest.lines().next())
                .unwrap_or("")
                .trim()
                .to_string()
        };
        if prompt.contains("translate this misinformation into a climate change-related question") {
            let myth = after_last("Question: ");
            let start = prompt.rfind("Question: ").unwrap_or(0);
            let step = prompt[start..].matches("\nObservation: ").count();
            let steps: Vec<String> = match self.by_text(&myth) {
                Some(e) => e.react_steps.clone(),
                None => vec![
                    format!(
                        "I should look for evidence on this claim.\nAction: web_search\nAction Input: {}",
                        myth.split_whitespace().take(8).collect::<Vec<_>>().join(" ")
                    ),
                    format!("I now know the final answer\nFinal Answer: {FALLBACK_FACT1}"),
                ],
            };
            let out = steps[step.min(steps.len() - 1)].clone();
            // Models tend to keep going and invent the tool output; the stop
            // sequence must cut this off.
            return if out.contains("Final Answer:") {
                out
            } else {
                format!("{out}\nObservation: (invented search result)")
            };
        }
        if prompt.contains("You are a paraphrasing system") {
            let myth = after_last("text: ");
            return match self.by_text(&myth) {
                Some(e) => format!("{} </s>", e.paraphrase),
                None => myth
                    .split_whitespace()
                    .take(30)
                    .collect::<Vec<_>>()
                    .join(" "),
            };
        }
        if prompt.contains("What fallacy is contained") {
            let myth = after_last("Misinformation: ");
            return self
                .by_text(&myth)
                .map_or(FALLBACK_FALLACY.to_string(), |e| e.fallacy_response.clone());
        }
        if prompt.contains("Reinforce the following fact") {
            let fact = after_last("# Fact:\n");
            return self
                .by_fact1(&fact)
                .map_or(FALLBACK_FACT2.to_string(), |e| {
                    format!("Summary: {}", e.fact2)
                });
        }
        let myth = if prompt.contains("<role>") {
            after_last("myth: ")
        } else if prompt.contains("[Role]:") {
            after_last("Misinformation: ")
        } else {
            return "I am not sure how to respond to that.".to_string();
        };
        let (fact1, paraphrase, fallacy, fact2) = match self.by_text(&myth) {
            Some(e) => (
                e.fact1.clone(),
                e.paraphrase.clone(),
                e.fallacy_response.clone(),
                e.fact2.clone(),
            ),
            None => (
                FALLBACK_FACT1.to_string(),
                myth.split_whitespace()
                    .take(30)
                    .collect::<Vec<_>>()
                    .join(" "),
                FALLBACK_FALLACY.to_string(),
                FALLBACK_FACT2.to_string(),
            ),
        };
        format!("## FACT: {fact1}\n## MYTH: {paraphrase}\n## FALLACY: {fallacy}\n## FACT: {fact2} !###!")
    }

    pub fn classify_fallacy(&self, text: &str) -> Value {
        match self.by_text(text) {
            Some(e) => json!({"label": e.fallacy, "confidence": e.fallacy_confidence}),
            None => {
                let digest = Sha256::digest(text.as_bytes());
                let label = Fallacy::ALL[digest[0] as usize % Fallacy::ALL.len()];
                json!({"label": label.name(), "confidence": 0.5})
            }
        }
    }

    pub fn classify_cards(&self, text: &str) -> Value {
        match self.by_text(text) {
            Some(e) => json!({"label": e.cards_label, "confidence": e.cards_confidence}),
            None => json!({"label": "0_0", "confidence": 0.5}),
        }
    }
}

struct SimState {
    knowledge: Knowledge,
    calls: AtomicUsize,
}

fn text_field(body: &Value, name: &str) -> String {
    body.get(name)
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string()
}

async fn chat(State(s): State<Arc<SimState>>, Json(body): Json<Value>) -> Json<Value> {
    s.calls.fetch_add(1, Ordering::SeqCst);
    let prompt: String = body["messages"]
        .as_array()
        .map(|m| {
            m.iter()
                .filter_map(|x| x["content"].as_str())
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_default();
    let text = s.knowledge.chat(&prompt);
    Json(json!({
        "model": body["model"],
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }))
}

async fn fallacy(State(s): State<Arc<SimState>>, Json(body): Json<Value>) -> Json<Value> {
    s.calls.fetch_add(1, Ordering::SeqCst);
    Json(s.knowledge.classify_fallacy(&text_field(&body, "text")))
}

async fn cards(State(s): State<Arc<SimState>>, Json(body): Json<Value>) -> Json<Value> {
    s.calls.fetch_add(1, Ordering::SeqCst);
    Json(s.knowledge.classify_cards(&text_field(&body, "text")))
}

async fn search(State(s): State<Arc<SimState>>, Json(body): Json<Value>) -> Json<Value> {
    s.calls.fetch_add(1, Ordering::SeqCst);
    Json(json!({"results": s.knowledge.search(&text_field(&body, "query"))}))
}

/// The simulator on a loopback port, served from a background thread.
pub struct Simulator {
    pub base: String,
    state: Arc<SimState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Simulator {
    pub fn start() -> Self {
        let state = Arc::new(SimState {
            knowledge: Knowledge::load(),
            calls: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/llm/chat/completions", post(chat))
            .route("/fallacy/classify", post(fallacy))
            .route("/cards/classify", post(cards))
            .route("/web/search", post(search))
            .with_state(state.clone());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base: format!("http://{addr}"),
            state,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    /// Points every backend of `cfg` at this simulator.
    pub fn wire(&self, cfg: &mut AppConfig) {
        let backend = |path: &str| Backend {
            base_url: Some(format!("{}/{path}", self.base)),
            ..Backend::default()
        };
        for chat in cfg.chat.values_mut() {
            chat.backend = backend("llm");
        }
        cfg.fallacy = backend("fallacy");
        cfg.cards = backend("cards");
        cfg.search = backend("web");
    }
}

impl Drop for Simulator {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Default configuration over the repository corpora.
pub fn base_config() -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.corpora.exemplars = Some(data_dir().join("corpora/exemplars.jsonl"));
    cfg.corpora.evidence = Some(data_dir().join("corpora/evidence.jsonl"));
    cfg.corpora.myths = Some(data_dir().join("corpora/test_myths.jsonl"));
    cfg
}

pub fn replay_config(cassette: &Path) -> AppConfig {
    let mut cfg = base_config();
    cfg.gateways.mode = Mode::Replay;
    cfg.gateways.cassette = Some(cassette.to_path_buf());
    cfg
}

pub fn record_config(sim: &Simulator, cassette: &Path) -> AppConfig {
    let mut cfg = base_config();
    sim.wire(&mut cfg);
    cfg.gateways.mode = Mode::Record;
    cfg.gateways.cassette = Some(cassette.to_path_buf());
    cfg
}

pub fn test_myths() -> MythCorpus {
    MythCorpus::load(data_dir().join("corpora/test_myths.jsonl")).unwrap()
}

/// All strategies over all test myths, strategy-major, in corpus order.
pub fn flicc20_requests() -> Vec<DebunkRequest> {
    let myths = test_myths();
    Strategy::ALL
        .iter()
        .flat_map(|s| {
            myths.records().iter().map(move |m| DebunkRequest {
                myth: m.text.clone(),
                strategy: *s,
                run_seed: 0,
            })
        })
        .collect()
}

pub fn run_all(engine: &Engine, requests: &[DebunkRequest]) -> Vec<DebunkResult> {
    requests
        .iter()
        .map(|r| {
            engine
                .debunk(r)
                .unwrap_or_else(|e| panic!("{:?} failed: {e}", r.myth))
        })
        .collect()
}

/// Runs the agent alone for a scripted myth with the structured strategy's
/// chat backend.
pub fn run_agent_scenario(
    engine: &Engine,
    myth: &str,
    max_iterations: usize,
) -> Result<AgentRun, AgentError> {
    let gateways = engine.gateways(Strategy::Structured);
    let ctx = AgentContext {
        chat: &gateways.chat,
        search: &gateways.search,
        templates: engine.templates(),
        seed: 0,
    };
    let cfg = AgentConfig {
        max_iterations,
        ..AgentConfig::default()
    };
    run_agent(myth, &cfg, &ctx)
}

/// Records every scenario into `dir` and returns the flicc20 results.
pub fn record_all(sim: &Simulator, dir: &Path) -> Vec<DebunkResult> {
    let engine =
        Engine::from_config(&record_config(sim, &dir.join(format!("{FLICC20}.json")))).unwrap();
    let results = run_all(&engine, &flicc20_requests());
    engine.save_cassette().unwrap();

    let knowledge = Knowledge::load();
    for (name, expect_final) in [(AGENT_3STEP, true), (AGENT_NOFINAL, false)] {
        let engine =
            Engine::from_config(&record_config(sim, &dir.join(format!("{name}.json")))).unwrap();
        let out = run_agent_scenario(
            &engine,
            &knowledge.entry(name).text,
            AgentConfig::default().max_iterations,
        );
        assert_eq!(out.is_ok(), expect_final, "{name}: {out:?}");
        engine.save_cassette().unwrap();
    }
    results
}

/// The 60 replayed study results, computed once per test binary.
pub fn study_results() -> &'static [DebunkResult] {
    static RESULTS: std::sync::OnceLock<Vec<DebunkResult>> = std::sync::OnceLock::new();
    RESULTS.get_or_init(|| {
        let engine = Engine::from_config(&replay_config(&cassette_path(FLICC20))).unwrap();
        run_all(&engine, &flicc20_requests())
    })
}

/// Writes the study results as a batch output file.
pub fn write_study_file(path: &Path) {
    let mut text = String::new();
    for r in study_results() {
        text.push_str(&r.canonical_json());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Service state over a replay engine and a store seeded with the study items.
pub fn api_state(store: &Path, token: Option<&str>) -> Arc<gendebunk::service::AppState> {
    let engine = Engine::from_config(&replay_config(&cassette_path(FLICC20))).unwrap();
    let mut annotations = gendebunk::study::Annotations::open(store).unwrap();
    for r in study_results() {
        annotations.add_result(r.clone(), true).unwrap();
    }
    Arc::new(gendebunk::service::AppState {
        engine: Arc::new(engine),
        annotations: std::sync::Mutex::new(annotations),
        categories: Default::default(),
        token: token.map(str::to_string),
    })
}

/// The service router on a loopback port, served from a background thread.
pub struct Api {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Api {
    pub fn start(state: Arc<gendebunk::service::AppState>) -> Self {
        let app = gendebunk::service::router(state);
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn client(&self) -> Client {
        Client::new(&self.base)
    }
}

impl Drop for Api {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Minimal HTTP client that returns every status instead of erroring.
pub struct Client {
    base: String,
    agent: ureq::Agent,
    pub token: Option<String>,
}

pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
            token: None,
        }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
        let mut resp = resp.expect("request reaches the server");
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or_default().to_string()))
            .collect();
        Reply {
            status: resp.status().as_u16(),
            headers,
            body: resp.body_mut().read_to_string().unwrap(),
        }
    }

    pub fn get(&self, path: &str) -> Reply {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(gendebunk::service::TOKEN_HEADER, t);
        }
        Self::finish(req.call())
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Reply {
        let mut req = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json");
        if let Some(t) = &self.token {
            req = req.header(gendebunk::service::TOKEN_HEADER, t);
        }
        Self::finish(req.send(body))
    }

    pub fn post(&self, path: &str, body: &Value) -> Reply {
        self.post_raw(path, &body.to_string())
    }

    pub fn session(&self, annotator: &str, role: &str, blind: bool) -> String {
        let r = self.post(
            "/api/sessions",
            &json!({"annotator_id": annotator, "role": role, "blind": blind}),
        );
        assert_eq!(r.status, 200, "{}", r.body);
        r.json()["session_id"].as_str().unwrap().to_string()
    }

    pub fn next(&self, session: &str) -> Value {
        let r = self.get(&format!("/api/tasks/next?session={session}"));
        assert_eq!(r.status, 200, "{}", r.body);
        r.json()
    }

    pub fn rate(&self, session: &str, item: &str, scores: [i64; 4]) -> Reply {
        self.post(
            "/api/ratings",
            &json!({
                "session": session,
                "item": item,
                "fact1": scores[0],
                "fallacy": scores[1],
                "fact2": scores[2],
                "structure": scores[3],
            }),
        )
    }

    /// Rates up to `limit` tasks of a session with [`scripted_scores`].
    pub fn rate_through(&self, session: &str, annotator: &str, limit: usize) -> usize {
        let mut n = 0;
        while n < limit {
            let task = self.next(session);
            if task["done"].as_bool().unwrap() {
                break;
            }
            let item = task["item"].as_str().unwrap().to_string();
            let r = self.rate(session, &item, scripted_scores(annotator, &item));
            assert_eq!(r.status, 200, "{}", r.body);
            n += 1;
        }
        n
    }
}

/// Deterministic, annotator-dependent but correlated scores for an item.
pub fn scripted_scores(annotator: &str, item: &str) -> [i64; 4] {
    let base = Sha256::digest(item.as_bytes());
    let own = Sha256::digest(format!("{annotator}/{item}").as_bytes());
    let pick = |k: usize| -> i64 {
        if own[k] % 3 == 0 {
            i64::from(own[k + 8] % 4)
        } else {
            i64::from(base[k] % 4)
        }
    };
    [pick(0), pick(1), pick(2), 1]
}

pub const PANEL: [(&str, &str); 4] = [
    ("ann1", "non_expert"),
    ("ann2", "non_expert"),
    ("ann3", "non_expert"),
    ("expert", "expert"),
];
