//! Human evaluation: the scoring rubric, rating validation, the ratings
//! matrix and its tab-separated file format, agreement metrics and report
//! tables.

pub mod metrics;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{cohen_kappa, gwet_ac1, percent_agreement, Metric, MetricError};
pub use report::{
    aggregate_scores, agreement_report, pairwise_agreement, AgreementCell, AgreementReport,
    AgreementRow, Group, PairValue, PairwiseResult, ReportError, ScoreCell, ScoreRow, ScoreTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Expert,
    NonExpert,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    pub role: Role,
}

/// A rated part of a debunking. `Structure` is the 0/1 compliance point,
/// stored but excluded from agreement and score tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingSlot {
    Fact1,
    Fallacy,
    Fact2,
    Structure,
}

impl RatingSlot {
    pub const ALL: [RatingSlot; 4] = [
        RatingSlot::Fact1,
        RatingSlot::Fallacy,
        RatingSlot::Fact2,
        RatingSlot::Structure,
    ];
    /// Slots that enter agreement and score tables.
    pub const SCORED: [RatingSlot; 3] = [RatingSlot::Fact1, RatingSlot::Fact2, RatingSlot::Fallacy];

    pub fn max_points(self) -> u8 {
        match self {
            RatingSlot::Structure => 1,
            _ => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RatingSlot::Fact1 => "fact1",
            RatingSlot::Fallacy => "fallacy",
            RatingSlot::Fact2 => "fact2",
            RatingSlot::Structure => "structure",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RatingSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category set used by the agreement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategorySet {
    /// The rubric's full scale, including 0 ("Inadequate").
    #[default]
    ZeroToThree,
    OneToThree,
}

impl CategorySet {
    pub fn categories(self) -> &'static [u8] {
        match self {
            CategorySet::ZeroToThree => &[0, 1, 2, 3],
            CategorySet::OneToThree => &[1, 2, 3],
        }
    }
}

/// One row of the ratings file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRow {
    pub annotator: String,
    pub role: Role,
    pub item: String,
    pub model: String,
    pub slot: RatingSlot,
    pub points: u8,
}

pub const TSV_COLUMNS: [&str; 6] = ["annotator", "role", "item", "model", "slot", "points"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("{slot} score {points} is outside 0..={max}", max = .slot.max_points())]
    OutOfRange { slot: RatingSlot, points: u8 },
    #[error("{annotator} already rated {slot} of item {item}")]
    DuplicateRating {
        annotator: String,
        item: String,
        slot: RatingSlot,
    },
    #[error("annotator {0} appears with two roles")]
    RoleConflict(String),
    #[error("item {0} is attributed to two models")]
    ModelConflict(String),
    #[error("empty {0} field")]
    EmptyField(&'static str),
    #[error("ratings file: {0}")]
    Format(String),
}

/// Range and field checks for a single rating. Duplicates are checked by
/// [`RatingsMatrix::add`].
pub fn validate_rating(row: &RatingRow) -> Result<(), RatingError> {
    for (name, value) in [
        ("annotator", &row.annotator),
        ("item", &row.item),
        ("model", &row.model),
    ] {
        if value.trim().is_empty() {
            return Err(RatingError::EmptyField(name));
        }
    }
    if row.points > row.slot.max_points() {
        return Err(RatingError::OutOfRange {
            slot: row.slot,
            points: row.points,
        });
    }
    Ok(())
}

/// Annotator by item by slot grid; `None` marks a missing score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsMatrix {
    items: Vec<String>,
    annotators: Vec<Annotator>,
    models: BTreeMap<String, String>,
    grid: Vec<Vec<[Option<u8>; 4]>>,
    item_index: HashMap<String, usize>,
    annotator_index: HashMap<String, usize>,
}

impl RatingsMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows<'a>(
        rows: impl IntoIterator<Item = &'a RatingRow>,
    ) -> Result<Self, RatingError> {
        let mut m = Self::new();
        for row in rows {
            m.add(row)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, row: &RatingRow) -> Result<(), RatingError> {
        validate_rating(row)?;
        if let Some(&a) = self.annotator_index.get(&row.annotator) {
            if self.annotators[a].role != row.role {
                return Err(RatingError::RoleConflict(row.annotator.clone()));
            }
        }
        if let Some(model) = self.models.get(&row.item) {
            if *model != row.model {
                return Err(RatingError::ModelConflict(row.item.clone()));
            }
        }
        let a = self.annotator_slot(&row.annotator, row.role);
        let i = self.item_slot(&row.item);
        let cell = &mut self.grid[a][i][row.slot.index()];
        if cell.is_some() {
            return Err(RatingError::DuplicateRating {
                annotator: row.annotator.clone(),
                item: row.item.clone(),
                slot: row.slot,
            });
        }
        *cell = Some(row.points);
        self.models.insert(row.item.clone(), row.model.clone());
        Ok(())
    }

    fn annotator_slot(&mut self, id: &str, role: Role) -> usize {
        if let Some(&a) = self.annotator_index.get(id) {
            return a;
        }
        self.annotators.push(Annotator {
            id: id.to_string(),
            role,
        });
        self.grid.push(vec![[None; 4]; self.items.len()]);
        self.annotator_index
            .insert(id.to_string(), self.annotators.len() - 1);
        self.annotators.len() - 1
    }

    fn item_slot(&mut self, id: &str) -> usize {
        if let Some(&i) = self.item_index.get(id) {
            return i;
        }
        self.items.push(id.to_string());
        for row in &mut self.grid {
            row.push([None; 4]);
        }
        self.item_index.insert(id.to_string(), self.items.len() - 1);
        self.items.len() - 1
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn annotators(&self) -> &[Annotator] {
        &self.annotators
    }

    /// Item to model attribution taken from the rows.
    pub fn model_map(&self) -> &BTreeMap<String, String> {
        &self.models
    }

    pub fn get(&self, annotator: &str, item: &str, slot: RatingSlot) -> Option<u8> {
        let a = *self.annotator_index.get(annotator)?;
        let i = *self.item_index.get(item)?;
        self.grid[a][i][slot.index()]
    }

    /// One annotator's scores for `slot`, aligned with [`Self::items`].
    pub fn scores(&self, annotator: &str, slot: RatingSlot) -> Vec<Option<u8>> {
        match self.annotator_index.get(annotator) {
            Some(&a) => self.grid[a].iter().map(|cell| cell[slot.index()]).collect(),
            None => vec![None; self.items.len()],
        }
    }

    /// Study-design checks that do not block computation.
    pub fn warnings(&self) -> Vec<String> {
        let experts = self
            .annotators
            .iter()
            .filter(|a| a.role == Role::Expert)
            .count();
        if experts == 1 {
            Vec::new()
        } else {
            vec![format!(
                "expected exactly one expert annotator, found {experts}"
            )]
        }
    }

    /// All present scores as rows, annotators then items then slots.
    pub fn rows(&self) -> Vec<RatingRow> {
        let mut out = Vec::new();
        for (a, ann) in self.annotators.iter().enumerate() {
            for (i, item) in self.items.iter().enumerate() {
                for slot in RatingSlot::ALL {
                    if let Some(points) = self.grid[a][i][slot.index()] {
                        out.push(RatingRow {
                            annotator: ann.id.clone(),
                            role: ann.role,
                            item: item.clone(),
                            model: self.models[item].clone(),
                            slot,
                            points,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Reads a tab-separated ratings file with a header row.
pub fn read_ratings_tsv(reader: impl Read) -> Result<Vec<RatingRow>, RatingError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| RatingError::Format(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != TSV_COLUMNS {
        return Err(RatingError::Format(format!(
            "header must be {}",
            TSV_COLUMNS.join("\\t")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| RatingError::Format(e.to_string())))
        .collect()
}

pub fn write_ratings_tsv(rows: &[RatingRow], writer: impl Write) -> Result<(), RatingError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(writer);
    let fmt_err = |e: csv::Error| RatingError::Format(e.to_string());
    for row in rows {
        wtr.serialize(row).map_err(fmt_err)?;
    }
    if rows.is_empty() {
        wtr.write_record(TSV_COLUMNS).map_err(fmt_err)?;
    }
    wtr.flush().map_err(|e| RatingError::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricLevel {
    pub points: u8,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricCriterion {
    pub question: String,
    pub levels: Vec<RubricLevel>,
}

/// Rating instructions shown to annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub fact: RubricCriterion,
    pub fallacy: RubricCriterion,
    pub structure: RubricCriterion,
}

impl Rubric {
    pub fn builtin() -> &'static Rubric {
        static RUBRIC: OnceLock<Rubric> = OnceLock::new();
        RUBRIC.get_or_init(|| {
            serde_json::from_str(include_str!("../../assets/rubric.json"))
                .expect("bundled rubric parses")
        })
    }

    pub fn criterion(&self, slot: RatingSlot) -> &RubricCriterion {
        match slot {
            RatingSlot::Fact1 | RatingSlot::Fact2 => &self.fact,
            RatingSlot::Fallacy => &self.fallacy,
            RatingSlot::Structure => &self.structure,
        }
    }
}
