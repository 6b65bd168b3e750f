//! Blind annotation state, rebuilt by folding the record log.
//!
//! The log is the only source of truth. Every mutation is validated
//! against the folded state, appended, then applied, so replaying the log
//! after a crash yields the same items, sessions, cursors and ratings.

use std::collections::{BTreeMap, BTreeSet};

use gendebunk_core::evaluation::{
    validate_rating, Annotator, RatingError, RatingRow, RatingSlot, Role, Rubric,
};
use gendebunk_core::pipeline::DebunkResult;
use gendebunk_core::sandwich::TruthSandwich;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::store::{RecordKind, Store, StoreError, StoredRecord};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("item {got} is not the current task (expected {})", expected.as_deref().unwrap_or("none, the session is complete"))]
    WrongTask {
        expected: Option<String>,
        got: String,
    },
    #[error("{annotator} already rated {slot} of item {item}")]
    DuplicateRating {
        annotator: String,
        item: String,
        slot: RatingSlot,
    },
    #[error("{slot} score {points} is outside 0..={max}", max = .slot.max_points())]
    OutOfRange { slot: RatingSlot, points: i64 },
    #[error("missing {0} score")]
    MissingScore(RatingSlot),
    #[error("annotator {0} already has a session with a different role")]
    RoleConflict(String),
    #[error("no study items are loaded")]
    NoStudyItems,
    #[error("item {0} belongs to the blind study; complete a session to see its provenance")]
    BlindItem(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("record {seq} cannot be applied: {reason}")]
    Replay { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    /// Part of the blind study (as opposed to an interactive demo run).
    pub study: bool,
    pub result: DebunkResult,
}

impl Item {
    pub fn model(&self) -> &str {
        &self.result.provenance.model
    }
}

/// Opaque, content-derived identifier for a debunking.
pub fn item_id(result: &DebunkResult) -> String {
    let digest = Sha256::digest(result.canonical_json().as_bytes());
    format!("it-{}", &hex::encode(digest)[..16])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum SessionEvent {
    Created {
        session_id: String,
        annotator: Annotator,
        blind: bool,
        /// Study items at creation time, sorted; the order is derived.
        items: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub fact1: u8,
    pub fallacy: u8,
    pub fact2: u8,
    pub structure: u8,
}

impl Scores {
    fn get(&self, slot: RatingSlot) -> u8 {
        match slot {
            RatingSlot::Fact1 => self.fact1,
            RatingSlot::Fallacy => self.fallacy,
            RatingSlot::Fact2 => self.fact2,
            RatingSlot::Structure => self.structure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RatingEvent {
    session: String,
    item: String,
    scores: Scores,
}

/// A rating as submitted over the API. Scores arrive as plain integers so
/// range errors can be reported precisely.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub session: String,
    pub item: String,
    pub fact1: Option<i64>,
    pub fallacy: Option<i64>,
    pub fact2: Option<i64>,
    pub structure: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub annotator: Annotator,
    pub blind: bool,
    pub order: Vec<String>,
    pub cursor: usize,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.cursor >= self.order.len()
    }

    pub fn current(&self) -> Option<&str> {
        self.order.get(self.cursor).map(String::as_str)
    }
}

/// Seed of a session's task order.
pub fn session_seed(session_id: &str) -> u64 {
    let digest = Sha256::digest(session_id.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Deterministic per-session permutation of `items`.
pub fn shuffled(items: &[String], session_id: &str) -> Vec<String> {
    let mut order = items.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(session_seed(session_id)));
    order
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub annotator: Annotator,
    pub blind: bool,
    pub total: usize,
    pub cursor: usize,
    pub complete: bool,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.id.clone(),
            annotator: s.annotator.clone(),
            blind: s.blind,
            total: s.order.len(),
            cursor: s.cursor,
            complete: s.is_complete(),
        }
    }
}

/// The next thing an annotator should rate. `model` is only present for
/// sessions that are not blind.
#[derive(Debug, Clone, Serialize)]
pub struct Task {
    pub session: String,
    pub done: bool,
    pub position: usize,
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<TruthSandwich>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rubric: Option<&'static Rubric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Accepted {
    pub session: String,
    pub item: String,
    pub cursor: usize,
    pub total: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Study {
    items: BTreeMap<String, Item>,
    sessions: BTreeMap<String, Session>,
    ratings: Vec<RatingRow>,
    rated: BTreeSet<(String, String)>,
}

impl Study {
    /// Folds a full record log.
    pub fn replay(records: &[StoredRecord]) -> Result<Self, StudyError> {
        let mut study = Self::default();
        for r in records {
            study.apply(r)?;
        }
        Ok(study)
    }

    fn apply(&mut self, rec: &StoredRecord) -> Result<(), StudyError> {
        let bad = |reason: String| StudyError::Replay {
            seq: rec.seq,
            reason,
        };
        match rec.kind {
            RecordKind::DebunkResult => {
                let item: Item =
                    serde_json::from_value(rec.payload.clone()).map_err(|e| bad(e.to_string()))?;
                self.items.entry(item.id.clone()).or_insert(item);
            }
            RecordKind::SessionEvent => {
                let SessionEvent::Created {
                    session_id,
                    annotator,
                    blind,
                    items,
                } = serde_json::from_value(rec.payload.clone()).map_err(|e| bad(e.to_string()))?;
                let order = shuffled(&items, &session_id);
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        id: session_id,
                        annotator,
                        blind,
                        order,
                        cursor: 0,
                    },
                );
            }
            RecordKind::Rating => {
                let ev: RatingEvent =
                    serde_json::from_value(rec.payload.clone()).map_err(|e| bad(e.to_string()))?;
                let session = self
                    .sessions
                    .get_mut(&ev.session)
                    .ok_or_else(|| bad(format!("unknown session {}", ev.session)))?;
                let model = self
                    .items
                    .get(&ev.item)
                    .map(|i| i.model().to_string())
                    .ok_or_else(|| bad(format!("unknown item {}", ev.item)))?;
                for slot in RatingSlot::ALL {
                    self.ratings.push(RatingRow {
                        annotator: session.annotator.id.clone(),
                        role: session.annotator.role,
                        item: ev.item.clone(),
                        model: model.clone(),
                        slot,
                        points: ev.scores.get(slot),
                    });
                }
                self.rated.insert((session.annotator.id.clone(), ev.item));
                session.cursor += 1;
            }
        }
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn session(&self, id: &str) -> Result<&Session, StudyError> {
        self.sessions
            .get(id)
            .ok_or_else(|| StudyError::UnknownSession(id.to_string()))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn study_items(&self) -> Vec<String> {
        self.items
            .values()
            .filter(|i| i.study)
            .map(|i| i.id.clone())
            .collect()
    }

    /// Ratings from completed sessions only; these feed the reports.
    pub fn completed_ratings(&self) -> Vec<RatingRow> {
        let done: BTreeSet<&str> = self
            .sessions
            .values()
            .filter(|s| s.is_complete())
            .map(|s| s.annotator.id.as_str())
            .collect();
        self.ratings
            .iter()
            .filter(|r| done.contains(r.annotator.as_str()))
            .cloned()
            .collect()
    }

    pub fn all_ratings(&self) -> &[RatingRow] {
        &self.ratings
    }

    pub fn next_task(&self, session_id: &str) -> Result<Task, StudyError> {
        let s = self.session(session_id)?;
        let mut task = Task {
            session: s.id.clone(),
            done: s.is_complete(),
            position: s.cursor,
            total: s.order.len(),
            item: None,
            sandwich: None,
            rubric: None,
            model: None,
        };
        if let Some(id) = s.current() {
            let item = &self.items[id];
            task.item = Some(id.to_string());
            task.sandwich = Some(item.result.sandwich.clone());
            task.rubric = Some(Rubric::builtin());
            if !s.blind {
                task.model = Some(item.model().to_string());
            }
        }
        Ok(task)
    }

    /// Provenance is withheld for study items until the asking session is
    /// complete or was never blind.
    pub fn provenance(&self, item_id: &str, session: Option<&str>) -> Result<&Item, StudyError> {
        let item = self
            .items
            .get(item_id)
            .ok_or_else(|| StudyError::UnknownItem(item_id.to_string()))?;
        if item.study {
            let unlocked = match session {
                Some(id) => {
                    let s = self.session(id)?;
                    !s.blind || s.is_complete()
                }
                None => false,
            };
            if !unlocked {
                return Err(StudyError::BlindItem(item_id.to_string()));
            }
        }
        Ok(item)
    }

    fn check_rating(&self, sub: &RatingSubmission) -> Result<RatingEvent, StudyError> {
        let s = self.session(&sub.session)?;
        if s.current() != Some(sub.item.as_str()) {
            return Err(StudyError::WrongTask {
                expected: s.current().map(str::to_string),
                got: sub.item.clone(),
            });
        }
        let mut points = [0u8; 4];
        for (i, (slot, value)) in [
            (RatingSlot::Fact1, sub.fact1),
            (RatingSlot::Fallacy, sub.fallacy),
            (RatingSlot::Fact2, sub.fact2),
            (RatingSlot::Structure, sub.structure),
        ]
        .into_iter()
        .enumerate()
        {
            let v = value.ok_or(StudyError::MissingScore(slot))?;
            let p = u8::try_from(v).map_err(|_| StudyError::OutOfRange { slot, points: v })?;
            let row = RatingRow {
                annotator: s.annotator.id.clone(),
                role: s.annotator.role,
                item: sub.item.clone(),
                model: self.items[&sub.item].model().to_string(),
                slot,
                points: p,
            };
            validate_rating(&row).map_err(|e| match e {
                RatingError::OutOfRange { slot, points } => StudyError::OutOfRange {
                    slot,
                    points: i64::from(points),
                },
                other => StudyError::InvalidRequest(other.to_string()),
            })?;
            if self
                .rated
                .contains(&(s.annotator.id.clone(), sub.item.clone()))
            {
                return Err(StudyError::DuplicateRating {
                    annotator: s.annotator.id.clone(),
                    item: sub.item.clone(),
                    slot,
                });
            }
            points[i] = p;
        }
        Ok(RatingEvent {
            session: s.id.clone(),
            item: sub.item.clone(),
            scores: Scores {
                fact1: points[0],
                fallacy: points[1],
                fact2: points[2],
                structure: points[3],
            },
        })
    }
}

/// The record log together with its folded state.
#[derive(Debug)]
pub struct Annotations {
    store: Store,
    study: Study,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NewSession {
    pub annotator_id: String,
    pub role: Role,
    #[serde(default = "default_blind")]
    pub blind: bool,
    #[serde(default)]
    pub session_id: Option<String>,
}

fn default_blind() -> bool {
    true
}

impl Annotations {
    pub fn open(path: impl AsRef<std::path::Path>) -> Result<Self, StudyError> {
        let (store, records, warnings) = Store::open(path)?;
        let study = Study::replay(&records)?;
        Ok(Self {
            store,
            study,
            warnings,
        })
    }

    pub fn study(&self) -> &Study {
        &self.study
    }

    /// Repairs made while opening the log.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn commit(&mut self, kind: RecordKind, payload: Value) -> Result<(), StudyError> {
        let rec = self.store.append(kind, payload)?;
        self.study.apply(&rec)
    }

    /// Stores a debunking unless an identical one is already present.
    pub fn add_result(&mut self, result: DebunkResult, study: bool) -> Result<String, StudyError> {
        let id = item_id(&result);
        if let Some(existing) = self.study.items.get(&id) {
            if existing.study || !study {
                return Ok(id);
            }
        }
        let item = Item {
            id: id.clone(),
            study,
            result,
        };
        self.commit(
            RecordKind::DebunkResult,
            serde_json::to_value(&item).expect("item serializes"),
        )?;
        Ok(id)
    }

    /// Creates a session, or returns the annotator's existing one.
    pub fn create_session(&mut self, req: &NewSession) -> Result<SessionSummary, StudyError> {
        let annotator_id = req.annotator_id.trim();
        if annotator_id.is_empty() {
            return Err(StudyError::InvalidRequest("annotator_id is empty".into()));
        }
        if let Some(s) = self
            .study
            .sessions
            .values()
            .find(|s| s.annotator.id == annotator_id)
        {
            if s.annotator.role != req.role {
                return Err(StudyError::RoleConflict(annotator_id.to_string()));
            }
            return Ok(s.into());
        }
        let items = self.study.study_items();
        if items.is_empty() {
            return Err(StudyError::NoStudyItems);
        }
        let session_id = match &req.session_id {
            Some(id) if !id.trim().is_empty() => {
                if self.study.sessions.contains_key(id.trim()) {
                    return Err(StudyError::InvalidRequest(format!(
                        "session {id} already exists"
                    )));
                }
                id.trim().to_string()
            }
            _ => {
                let n = self.study.sessions.len();
                let digest = Sha256::digest(format!("{annotator_id}\n{n}").as_bytes());
                format!("s-{}", &hex::encode(digest)[..12])
            }
        };
        let event = SessionEvent::Created {
            session_id: session_id.clone(),
            annotator: Annotator {
                id: annotator_id.to_string(),
                role: req.role,
            },
            blind: req.blind,
            items,
        };
        self.commit(
            RecordKind::SessionEvent,
            serde_json::to_value(&event).expect("event serializes"),
        )?;
        Ok(self.study.session(&session_id)?.into())
    }

    pub fn submit(&mut self, sub: &RatingSubmission) -> Result<Accepted, StudyError> {
        let event = self.study.check_rating(sub)?;
        self.commit(
            RecordKind::Rating,
            serde_json::to_value(&event).expect("event serializes"),
        )?;
        let s = self.study.session(&sub.session)?;
        Ok(Accepted {
            session: s.id.clone(),
            item: sub.item.clone(),
            cursor: s.cursor,
            total: s.order.len(),
            complete: s.is_complete(),
        })
    }
}
