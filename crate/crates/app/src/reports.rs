//! Agreement and score reports. The CLI and the HTTP service both render
//! through here, so their outputs are byte-identical for the same ratings.

use std::collections::BTreeMap;

use anyhow::Result;
use gendebunk_core::evaluation::{
    aggregate_scores, agreement_report, CategorySet, RatingRow, RatingsMatrix,
};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

fn json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn agreement(rows: &[RatingRow], categories: CategorySet, format: Format) -> Result<String> {
    let matrix = RatingsMatrix::from_rows(rows)?;
    let report = agreement_report(&matrix, categories)?;
    Ok(match format {
        Format::Text => report.to_text(),
        Format::Json => json(&report),
    })
}

pub fn scores(rows: &[RatingRow], format: Format) -> Result<String> {
    let matrix = RatingsMatrix::from_rows(rows)?;
    let model_map: BTreeMap<String, String> = matrix.model_map().clone();
    let table = aggregate_scores(&matrix, &model_map)?;
    Ok(match format {
        Format::Text => table.to_text(),
        Format::Json => json(&table),
    })
}
