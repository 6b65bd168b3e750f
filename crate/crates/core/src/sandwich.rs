//! Parsing and structural validation of fact-myth-fallacy-fact debunkings.
//!
//! Model output is expected to use `## FACT`, `## MYTH`, `## FALLACY` and a
//! second `## FACT` heading, terminated by the `!###!` end marker. Parsing is
//! lenient (case, colons, blank lines, preamble); structural problems are
//! reported by [`validate_sandwich`] instead of failing the parse.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::word_limit_of;

pub const END_MARKER: &str = "!###!";

/// The four layers, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Fact1,
    Myth,
    Fallacy,
    Fact2,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Fact1, Slot::Myth, Slot::Fallacy, Slot::Fact2];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Fact1 => "fact1",
            Slot::Myth => "myth",
            Slot::Fallacy => "fallacy",
            Slot::Fact2 => "fact2",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            Slot::Fact1 | Slot::Fact2 => "FACT",
            Slot::Myth => "MYTH",
            Slot::Fallacy => "FALLACY",
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-slot values of some type, in canonical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerSlot<T> {
    pub fact1: T,
    pub myth: T,
    pub fallacy: T,
    pub fact2: T,
}

impl<T: Copy> PerSlot<T> {
    pub fn get(&self, slot: Slot) -> T {
        match slot {
            Slot::Fact1 => self.fact1,
            Slot::Myth => self.myth,
            Slot::Fallacy => self.fallacy,
            Slot::Fact2 => self.fact2,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Slot) -> T) -> Self {
        Self {
            fact1: f(Slot::Fact1),
            myth: f(Slot::Myth),
            fallacy: f(Slot::Fallacy),
            fact2: f(Slot::Fact2),
        }
    }
}

/// Count of maximal non-whitespace runs. Punctuation stays attached to its
/// token and hyphenated forms count once.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A four-layer debunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthSandwich {
    pub fact1: String,
    pub myth: String,
    pub fallacy_text: String,
    pub fact2: String,
    #[serde(default)]
    pub word_counts: PerSlot<usize>,
    #[serde(default)]
    pub end_marker_seen: bool,
    /// Slots in the order their headings appeared. Empty means canonical.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub heading_order: Vec<Slot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TruthSandwich {
    /// Builds a sandwich from already separated layer texts.
    pub fn from_slots(
        fact1: impl AsRef<str>,
        myth: impl AsRef<str>,
        fallacy_text: impl AsRef<str>,
        fact2: impl AsRef<str>,
    ) -> Self {
        let mut s = Self {
            fact1: normalize_ws(fact1.as_ref()),
            myth: normalize_ws(myth.as_ref()),
            fallacy_text: normalize_ws(fallacy_text.as_ref()),
            fact2: normalize_ws(fact2.as_ref()),
            word_counts: PerSlot::default(),
            end_marker_seen: false,
            heading_order: Vec::new(),
            warnings: Vec::new(),
        };
        s.refresh_counts();
        s
    }

    pub fn slot(&self, slot: Slot) -> &str {
        match slot {
            Slot::Fact1 => &self.fact1,
            Slot::Myth => &self.myth,
            Slot::Fallacy => &self.fallacy_text,
            Slot::Fact2 => &self.fact2,
        }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut String {
        match slot {
            Slot::Fact1 => &mut self.fact1,
            Slot::Myth => &mut self.myth,
            Slot::Fallacy => &mut self.fallacy_text,
            Slot::Fact2 => &mut self.fact2,
        }
    }

    /// Recomputes `word_counts` from the slot texts.
    pub fn refresh_counts(&mut self) {
        self.word_counts = PerSlot::from_fn(|s| word_count(self.slot(s)));
    }

    /// Canonical serialized form: one `## HEADING:` line per slot, with the
    /// end marker after the closing fact when `with_marker` is set.
    pub fn format_canonical(&self, with_marker: bool) -> String {
        let mut out = String::new();
        for slot in Slot::ALL {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("## ");
            out.push_str(slot.heading());
            out.push_str(": ");
            out.push_str(self.slot(slot));
        }
        if with_marker {
            out.push(' ');
            out.push_str(END_MARKER);
        }
        out
    }

    /// Slot contents only, without headings or marker; for display.
    pub fn display_text(&self) -> String {
        Slot::ALL
            .iter()
            .map(|s| self.slot(*s))
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SandwichError {
    #[error("output contains no FACT/MYTH/FALLACY headings")]
    UnparseableOutput,
    #[error("output is empty")]
    EmptyOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Heading {
    Fact,
    Myth,
    Fallacy,
}

fn heading_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[ \t]*#{1,6}[ \t]*(fact|myth|fallacy)\b[ \t]*:?[ \t]*(.*)$")
            .expect("static regex")
    })
}

/// Splits raw model output into the four layers.
pub fn parse_sandwich(raw: &str) -> Result<TruthSandwich, SandwichError> {
    if raw.trim().is_empty() {
        return Err(SandwichError::EmptyOutput);
    }
    let (body, end_marker_seen) = match raw.find(END_MARKER) {
        Some(pos) => (&raw[..pos], true),
        None => (raw, false),
    };

    let mut sections: Vec<(Heading, String)> = Vec::new();
    let mut preamble = String::new();
    for line in body.lines() {
        if let Some(caps) = heading_regex().captures(line) {
            let heading = match caps[1].to_ascii_lowercase().as_str() {
                "fact" => Heading::Fact,
                "myth" => Heading::Myth,
                _ => Heading::Fallacy,
            };
            sections.push((heading, caps[2].to_string()));
        } else if let Some((_, text)) = sections.last_mut() {
            text.push('\n');
            text.push_str(line);
        } else {
            preamble.push_str(line);
        }
    }
    if sections.is_empty() {
        return Err(SandwichError::UnparseableOutput);
    }

    let mut sandwich = TruthSandwich::from_slots("", "", "", "");
    sandwich.end_marker_seen = end_marker_seen;
    if !preamble.trim().is_empty() {
        sandwich
            .warnings
            .push("text before the first heading was ignored".to_string());
    }

    let mut fallacy_seen = false;
    for (heading, text) in sections {
        let slot = match heading {
            Heading::Myth => Slot::Myth,
            Heading::Fallacy => {
                fallacy_seen = true;
                Slot::Fallacy
            }
            Heading::Fact if sandwich.fact1.is_empty() && !fallacy_seen => Slot::Fact1,
            Heading::Fact => Slot::Fact2,
        };
        let text = normalize_ws(&text);
        let target = sandwich.slot_mut(slot);
        if target.is_empty() {
            *target = text;
        } else {
            target.push(' ');
            target.push_str(&text);
            sandwich
                .warnings
                .push(format!("additional {} section appended", slot.heading()));
        }
        sandwich.heading_order.push(slot);
    }
    sandwich.refresh_counts();
    Ok(sandwich)
}

/// Outcome of structural validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureReport {
    pub structure_valid: bool,
    pub missing_slots: Vec<Slot>,
    /// Human-readable `"<slot> after <slot>"` entries.
    pub order_violations: Vec<String>,
    pub over_budget: PerSlot<bool>,
}

/// Checks presence and order of all four layers and flags word-budget
/// overruns. Overruns are warnings and never invalidate the structure.
pub fn validate_sandwich(s: &TruthSandwich) -> StructureReport {
    let missing_slots: Vec<Slot> = Slot::ALL
        .into_iter()
        .filter(|slot| s.slot(*slot).trim().is_empty())
        .collect();

    let mut order_violations = Vec::new();
    let mut highest: Option<Slot> = None;
    for slot in &s.heading_order {
        match highest {
            Some(h) if *slot < h => order_violations.push(format!("{slot} after {h}")),
            Some(h) if *slot == h => {}
            _ => highest = Some(*slot),
        }
    }

    let over_budget = PerSlot::from_fn(|slot| word_count(s.slot(slot)) > word_limit_of(slot));
    StructureReport {
        structure_valid: missing_slots.is_empty() && order_violations.is_empty(),
        missing_slots,
        order_violations,
        over_budget,
    }
}
