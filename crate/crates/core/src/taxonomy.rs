//! The twelve-label fallacy taxonomy used by the classifier, the prompts and
//! the exemplar corpus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const TAXONOMY_JSONL: &str = include_str!("../assets/flicc_taxonomy.jsonl");

/// One of the twelve fallacy labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fallacy {
    AdHominem,
    Anecdote,
    CherryPicking,
    ConspiracyTheory,
    FakeExperts,
    FalseChoice,
    FalseEquivalence,
    ImpossibleExpectations,
    Misrepresentation,
    Oversimplification,
    SingleCause,
    SlothfulInduction,
}

impl Fallacy {
    pub const ALL: [Fallacy; 12] = [
        Fallacy::AdHominem,
        Fallacy::Anecdote,
        Fallacy::CherryPicking,
        Fallacy::ConspiracyTheory,
        Fallacy::FakeExperts,
        Fallacy::FalseChoice,
        Fallacy::FalseEquivalence,
        Fallacy::ImpossibleExpectations,
        Fallacy::Misrepresentation,
        Fallacy::Oversimplification,
        Fallacy::SingleCause,
        Fallacy::SlothfulInduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fallacy::AdHominem => "Ad Hominem",
            Fallacy::Anecdote => "Anecdote",
            Fallacy::CherryPicking => "Cherry Picking",
            Fallacy::ConspiracyTheory => "Conspiracy Theory",
            Fallacy::FakeExperts => "Fake Experts",
            Fallacy::FalseChoice => "False Choice",
            Fallacy::FalseEquivalence => "False Equivalence",
            Fallacy::ImpossibleExpectations => "Impossible Expectations",
            Fallacy::Misrepresentation => "Misrepresentation",
            Fallacy::Oversimplification => "Oversimplification",
            Fallacy::SingleCause => "Single Cause",
            Fallacy::SlothfulInduction => "Slothful Induction",
        }
    }

    /// Full taxonomy entry (definition and example) for this label.
    pub fn label(self) -> &'static FallacyLabel {
        Taxonomy::builtin().get(self)
    }
}

impl fmt::Display for Fallacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fallacy label {0:?}")]
pub struct UnknownFallacy(pub String);

fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for Fallacy {
    type Err = UnknownFallacy;

    /// Accepts the canonical names plus case, whitespace, hyphen and
    /// underscore variants ("cherry_picking", "CHERRY-PICKING").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = normalize_label(s);
        if wanted.is_empty() {
            return Err(UnknownFallacy(s.to_string()));
        }
        Fallacy::ALL
            .into_iter()
            .find(|f| normalize_label(f.name()) == wanted)
            .ok_or_else(|| UnknownFallacy(s.to_string()))
    }
}

impl Serialize for Fallacy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Fallacy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A taxonomy row: label name, definition and a canonical example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallacyLabel {
    pub name: Fallacy,
    pub definition: String,
    pub example: String,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("fallacy {0} listed more than once")]
    Duplicate(Fallacy),
    #[error("taxonomy has {0} labels, expected 12")]
    WrongSize(usize),
}

/// The full set of twelve labels, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    labels: Vec<FallacyLabel>,
}

impl Taxonomy {
    pub fn from_jsonl(text: &str) -> Result<Self, TaxonomyError> {
        let mut labels: Vec<FallacyLabel> = Vec::with_capacity(12);
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let label: FallacyLabel =
                serde_json::from_str(line).map_err(|e| TaxonomyError::Malformed {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if labels.iter().any(|l| l.name == label.name) {
                return Err(TaxonomyError::Duplicate(label.name));
            }
            labels.push(label);
        }
        if labels.len() != 12 {
            return Err(TaxonomyError::WrongSize(labels.len()));
        }
        labels.sort_by_key(|l| l.name);
        Ok(Self { labels })
    }

    /// The taxonomy shipped with the crate.
    pub fn builtin() -> &'static Taxonomy {
        static BUILTIN: std::sync::OnceLock<Taxonomy> = std::sync::OnceLock::new();
        BUILTIN.get_or_init(|| {
            Taxonomy::from_jsonl(TAXONOMY_JSONL).expect("bundled taxonomy is well-formed")
        })
    }

    pub fn get(&self, fallacy: Fallacy) -> &FallacyLabel {
        // labels are sorted in enum order and complete
        &self.labels[fallacy as usize]
    }

    pub fn labels(&self) -> &[FallacyLabel] {
        &self.labels
    }

    /// Pipe-separated table with a header row, one label per line.
    pub fn table_text(&self) -> String {
        let mut out = String::from("TECHNIQUE | DEFINITION | EXAMPLE");
        for l in &self.labels {
            out.push('\n');
            out.push_str(&format!(
                "{} | {} | \u{201c}{}\u{201d}",
                l.name, l.definition, l.example
            ));
        }
        out
    }
}
