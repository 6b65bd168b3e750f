//! Pairwise-averaged agreement and per-model score tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{compute, Metric, MetricError};
use super::{Annotator, CategorySet, RatingSlot, RatingsMatrix, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("{group:?} grouping needs at least one pair of annotators")]
    GroupTooSmall { group: Group },
    #[error("item {0} has no model attribution")]
    UnmappedItem(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Every unordered pair of non-experts.
    NonExpertPairs,
    /// Every (non-expert, expert) pair.
    EachWithExpert,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::EachWithExpert, Group::NonExpertPairs];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::NonExpertPairs => "non_expert_pairs",
            Group::EachWithExpert => "each_with_expert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub a: String,
    pub b: String,
    /// `None` when the metric is undefined for this pair.
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub group: Group,
    pub metric: Metric,
    pub pairs: Vec<PairValue>,
    /// Mean over the pairs where the metric is defined.
    pub mean: Option<f64>,
    pub undefined_pairs: usize,
}

fn pairs_for(annotators: &[Annotator], group: Group) -> Vec<(&Annotator, &Annotator)> {
    let non: Vec<&Annotator> = annotators
        .iter()
        .filter(|a| a.role == Role::NonExpert)
        .collect();
    match group {
        Group::NonExpertPairs => non
            .iter()
            .enumerate()
            .flat_map(|(i, a)| non[i + 1..].iter().map(move |b| (*a, *b)))
            .collect(),
        Group::EachWithExpert => annotators
            .iter()
            .filter(|a| a.role == Role::Expert)
            .flat_map(|e| non.iter().map(move |n| (*n, e)))
            .collect(),
    }
}

/// Averages `metric` over the pairs of `group`, using only items of `model`
/// when given. Pairs with an undefined value are reported and skipped.
pub fn pairwise_agreement(
    matrix: &RatingsMatrix,
    group: Group,
    metric: Metric,
    slot: RatingSlot,
    model: Option<&str>,
    categories: CategorySet,
) -> Result<PairwiseResult, ReportError> {
    let pairs = pairs_for(matrix.annotators(), group);
    if pairs.is_empty() {
        return Err(ReportError::GroupTooSmall { group });
    }
    let keep: Vec<bool> = matrix
        .items()
        .iter()
        .map(|item| {
            model.is_none_or(|m| matrix.model_map().get(item).map(String::as_str) == Some(m))
        })
        .collect();
    let select = |id: &str| -> Vec<Option<u8>> {
        matrix
            .scores(id, slot)
            .into_iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s)
            .collect()
    };

    let mut values = Vec::new();
    for (a, b) in pairs {
        let result = compute(
            metric,
            &select(&a.id),
            &select(&b.id),
            categories.categories(),
        );
        let (value, undefined_reason) = match result {
            Ok(v) => (Some(v), None),
            Err(
                e @ (MetricError::NoOverlap
                | MetricError::DegenerateMarginals
                | MetricError::DegenerateChance),
            ) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        values.push(PairValue {
            a: a.id.clone(),
            b: b.id.clone(),
            value,
            undefined_reason,
        });
    }
    let defined: Vec<f64> = values.iter().filter_map(|p| p.value).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(PairwiseResult {
        group,
        metric,
        undefined_pairs: values.len() - defined.len(),
        pairs: values,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub slot: RatingSlot,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub undefined_pairs: usize,
    pub pairs: Vec<PairValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    /// A model name, or `all` for every item.
    pub model: String,
    pub group: Group,
    pub cells: Vec<AgreementCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub categories: Vec<u8>,
    pub annotators: Vec<Annotator>,
    pub rows: Vec<AgreementRow>,
    pub warnings: Vec<String>,
}

pub const ALL_MODELS: &str = "all";

/// Agreement per model and grouping over fact1, fact2 and fallacy.
pub fn agreement_report(
    matrix: &RatingsMatrix,
    categories: CategorySet,
) -> Result<AgreementReport, ReportError> {
    let mut warnings = matrix.warnings();
    let models: BTreeSet<&String> = matrix.model_map().values().collect();
    let mut scopes: Vec<Option<&str>> = models.iter().map(|m| Some(m.as_str())).collect();
    scopes.push(None);

    let mut rows = Vec::new();
    for scope in scopes {
        for group in Group::ALL {
            let mut cells = Vec::new();
            for slot in RatingSlot::SCORED {
                for metric in Metric::ALL {
                    match pairwise_agreement(matrix, group, metric, slot, scope, categories) {
                        Ok(r) => cells.push(AgreementCell {
                            slot,
                            metric,
                            mean: r.mean,
                            undefined_pairs: r.undefined_pairs,
                            pairs: r.pairs,
                        }),
                        Err(ReportError::GroupTooSmall { .. }) => break,
                        Err(e) => return Err(e),
                    }
                }
            }
            if cells.is_empty() {
                let w = format!("{} grouping has no annotator pairs", group.as_str());
                if !warnings.contains(&w) {
                    warnings.push(w);
                }
                continue;
            }
            rows.push(AgreementRow {
                model: scope.unwrap_or(ALL_MODELS).to_string(),
                group,
                cells,
            });
        }
    }
    Ok(AgreementReport {
        categories: categories.categories().to_vec(),
        annotators: matrix.annotators().to_vec(),
        rows,
        warnings,
    })
}

fn fmt_opt(v: Option<f64>, percent: bool) -> String {
    match v {
        None => "undefined".to_string(),
        Some(x) if percent => format!("{:.1}%", x * 100.0),
        Some(x) => format!("{x:.3}"),
    }
}

impl AgreementReport {
    /// Aligned table: one line per (model, group), columns per slot and metric.
    pub fn to_text(&self) -> String {
        let mut header = vec!["model".to_string(), "group".to_string()];
        for slot in RatingSlot::SCORED {
            for metric in Metric::ALL {
                let m = match metric {
                    Metric::PercentAgreement => "agree",
                    Metric::CohenKappa => "kappa",
                    Metric::GwetAc1 => "ac1",
                };
                header.push(format!("{slot}.{m}"));
            }
        }
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![row.model.clone(), row.group.as_str().to_string()];
            line.extend(
                row.cells
                    .iter()
                    .map(|c| fmt_opt(c.mean, c.metric == Metric::PercentAgreement)),
            );
            lines.push(line);
        }
        let mut out = align(&lines);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn align(lines: &[Vec<String>]) -> String {
    let cols = lines.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            lines
                .iter()
                .filter_map(|l| l.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in lines {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Mean scores for one annotator population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub fact1: Option<f64>,
    pub fact2: Option<f64>,
    /// Mean of the fact1 and fact2 means.
    pub fact_avg: Option<f64>,
    pub fallacy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model: String,
    pub all: ScoreCell,
    pub non_expert: ScoreCell,
    pub expert: ScoreCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

/// Mean fact1, fact2, fact average and fallacy scores per model for all
/// annotators, non-experts only and the expert only.
pub fn aggregate_scores(
    matrix: &RatingsMatrix,
    model_map: &BTreeMap<String, String>,
) -> Result<ScoreTable, ReportError> {
    for item in matrix.items() {
        if !model_map.contains_key(item) {
            return Err(ReportError::UnmappedItem(item.clone()));
        }
    }
    let models: BTreeSet<&String> = matrix.items().iter().map(|i| &model_map[i]).collect();
    let mean_of = |model: &str, role: Option<Role>, slot: RatingSlot| -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for ann in matrix.annotators() {
            if role.is_some_and(|r| r != ann.role) {
                continue;
            }
            for (item, score) in matrix.items().iter().zip(matrix.scores(&ann.id, slot)) {
                if let (Some(s), true) = (score, model_map[item] == model) {
                    sum += f64::from(s);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    };
    let cell = |model: &str, role: Option<Role>| {
        let fact1 = mean_of(model, role, RatingSlot::Fact1);
        let fact2 = mean_of(model, role, RatingSlot::Fact2);
        ScoreCell {
            fact1,
            fact2,
            fact_avg: fact1.zip(fact2).map(|(a, b)| (a + b) / 2.0),
            fallacy: mean_of(model, role, RatingSlot::Fallacy),
        }
    };
    Ok(ScoreTable {
        rows: models
            .into_iter()
            .map(|m| ScoreRow {
                model: m.clone(),
                all: cell(m, None),
                non_expert: cell(m, Some(Role::NonExpert)),
                expert: cell(m, Some(Role::Expert)),
            })
            .collect(),
    })
}

impl ScoreTable {
    pub fn to_text(&self) -> String {
        let mut header = vec!["model".to_string()];
        for pop in ["all", "non_expert", "expert"] {
            for col in ["fact1", "fact2", "fact_avg", "fallacy"] {
                header.push(format!("{pop}.{col}"));
            }
        }
        let mut lines = vec![header];
        for row in &self.rows {
            let mut line = vec![row.model.clone()];
            for c in [&row.all, &row.non_expert, &row.expert] {
                for v in [c.fact1, c.fact2, c.fact_avg, c.fallacy] {
                    line.push(v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}")));
                }
            }
            lines.push(line);
        }
        align(&lines)
    }
}
