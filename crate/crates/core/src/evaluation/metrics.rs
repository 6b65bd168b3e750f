//! Pairwise agreement statistics over two annotators' score lists.
//!
//! Score lists are aligned by item. A missing score (`None`) on either side
//! drops that position before any statistic is computed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("score lists have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("no item was scored by both annotators")]
    NoOverlap,
    #[error("score {0} is not in the category set")]
    UnknownCategory(u8),
    #[error("at least two categories are required")]
    TooFewCategories,
    #[error("Cohen's kappa is undefined: expected chance agreement is 1")]
    DegenerateMarginals,
    #[error("Gwet's AC1 is undefined: chance agreement is 1")]
    DegenerateChance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PercentAgreement,
    CohenKappa,
    GwetAc1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [
        Metric::PercentAgreement,
        Metric::CohenKappa,
        Metric::GwetAc1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::PercentAgreement => "percent_agreement",
            Metric::CohenKappa => "cohen_kappa",
            Metric::GwetAc1 => "gwet_ac1",
        }
    }
}

/// Positions where both lists hold a score.
pub fn overlapping<T: Copy + Into<Option<u8>>>(
    a: &[T],
    b: &[T],
) -> Result<Vec<(u8, u8)>, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    let pairs: Vec<(u8, u8)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x).into()?, (*y).into()?)))
        .collect();
    if pairs.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    Ok(pairs)
}

fn observed(pairs: &[(u8, u8)]) -> f64 {
    pairs.iter().filter(|(x, y)| x == y).count() as f64 / pairs.len() as f64
}

/// Per-category proportions for each annotator, indexed like `categories`.
fn marginals(pairs: &[(u8, u8)], categories: &[u8]) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    let mut pa = vec![0.0; categories.len()];
    let mut pb = vec![0.0; categories.len()];
    let index = |s: u8| {
        categories
            .iter()
            .position(|&c| c == s)
            .ok_or(MetricError::UnknownCategory(s))
    };
    for &(x, y) in pairs {
        pa[index(x)?] += 1.0;
        pb[index(y)?] += 1.0;
    }
    let n = pairs.len() as f64;
    pa.iter_mut().chain(pb.iter_mut()).for_each(|v| *v /= n);
    Ok((pa, pb))
}

/// Fraction of overlapping items with identical scores.
pub fn percent_agreement<T: Copy + Into<Option<u8>>>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    Ok(observed(&overlapping(a, b)?))
}

/// `(p_o - p_e) / (1 - p_e)` with `p_e = sum_k pa_k * pb_k`.
pub fn cohen_kappa<T: Copy + Into<Option<u8>>>(
    a: &[T],
    b: &[T],
    categories: &[u8],
) -> Result<f64, MetricError> {
    let pairs = overlapping(a, b)?;
    let (pa, pb) = marginals(&pairs, categories)?;
    let p_e: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(MetricError::DegenerateMarginals);
    }
    Ok((observed(&pairs) - p_e) / (1.0 - p_e))
}

/// `(P_a - P_e) / (1 - P_e)` with `P_e = sum_q pi_q (1 - pi_q) / (Q - 1)`,
/// `pi_q` the mean of the two annotators' proportions for category `q`.
pub fn gwet_ac1<T: Copy + Into<Option<u8>>>(
    a: &[T],
    b: &[T],
    categories: &[u8],
) -> Result<f64, MetricError> {
    if categories.len() < 2 {
        return Err(MetricError::TooFewCategories);
    }
    let pairs = overlapping(a, b)?;
    let (pa, pb) = marginals(&pairs, categories)?;
    let q = categories.len() as f64;
    let p_e: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| {
            let pi = (x + y) / 2.0;
            pi * (1.0 - pi)
        })
        .sum::<f64>()
        / (q - 1.0);
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(MetricError::DegenerateChance);
    }
    Ok((observed(&pairs) - p_e) / (1.0 - p_e))
}

pub fn compute<T: Copy + Into<Option<u8>>>(
    metric: Metric,
    a: &[T],
    b: &[T],
    categories: &[u8],
) -> Result<f64, MetricError> {
    match metric {
        Metric::PercentAgreement => {
            let pairs = overlapping(a, b)?;
            marginals(&pairs, categories)?;
            Ok(observed(&pairs))
        }
        Metric::CohenKappa => cohen_kappa(a, b, categories),
        Metric::GwetAc1 => gwet_ac1(a, b, categories),
    }
}
