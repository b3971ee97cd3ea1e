//! Ranking-quality metrics: Spearman rank correlation and normalized
//! discounted cumulative gain between a predicted ordering and a ground
//! truth.
//!
//! Both metrics work on orderings, not scores: ranks are the 1-based
//! positions in each list, so upstream tie-breaking fully determines them.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// A best-first list of distinct policy ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ordering {
    items: Vec<String>,
}

impl Ordering {
    pub fn new<I, S>(items: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let items: Vec<String> = items.into_iter().map(Into::into).collect();
        let mut seen = std::collections::HashSet::new();
        for item in &items {
            if !seen.insert(item.clone()) {
                return Err(MetricsError::DuplicateItem { item: item.clone() });
            }
        }
        Ok(Ordering { items })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of every item.
    fn ranks(&self) -> HashMap<&str, usize> {
        self.items.iter().enumerate().map(|(i, id)| (id.as_str(), i + 1)).collect()
    }
}

fn check_comparable(predicted: &Ordering, truth: &Ordering) -> Result<(), MetricsError> {
    if predicted.len() < 2 {
        return Err(MetricsError::TooFewItems { n: predicted.len() });
    }
    if predicted.len() != truth.len()
        || !predicted.items.iter().all(|i| truth.items.contains(i))
    {
        return Err(MetricsError::ItemSetMismatch);
    }
    Ok(())
}

/// Spearman's rank correlation coefficient,
/// `1 - 6 * sum(d_i^2) / (n(n^2 - 1))` over the rank differences `d_i`.
/// 1 for identical orderings, -1 for exact reversals.
pub fn srcc(predicted: &Ordering, truth: &Ordering) -> Result<f64, MetricsError> {
    check_comparable(predicted, truth)?;
    let truth_ranks = truth.ranks();
    let n = predicted.len() as f64;
    let sum_d2: f64 = predicted
        .items
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let d = (i + 1) as f64 - truth_ranks[id.as_str()] as f64;
            d * d
        })
        .sum();
    Ok(1.0 - 6.0 * sum_d2 / (n * (n * n - 1.0)))
}

/// Normalized discounted cumulative gain with graded relevance `n..1`
/// assigned by the ground-truth order (best item has relevance `n`):
/// `DCG = sum_i (2^rel_i - 1) / log2(i + 1)`, `NDCG = DCG(predicted) /
/// DCG(truth)`. 1 for identical orderings, always strictly positive.
pub fn ndcg(predicted: &Ordering, truth: &Ordering) -> Result<f64, MetricsError> {
    check_comparable(predicted, truth)?;
    let n = predicted.len();
    let truth_ranks = truth.ranks();
    let relevance = |id: &str| (n - truth_ranks[id] + 1) as f64;
    let dcg = |ordering: &Ordering| -> f64 {
        ordering
            .items
            .iter()
            .enumerate()
            .map(|(i, id)| (2f64.powf(relevance(id)) - 1.0) / ((i + 2) as f64).log2())
            .sum()
    };
    Ok(dcg(predicted) / dcg(truth))
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ordering contains duplicate item '{item}'")]
    DuplicateItem { item: String },
    #[error("orderings must rank the same item set")]
    ItemSetMismatch,
    #[error("need at least 2 items, got {n}")]
    TooFewItems { n: usize },
}
