//! Knownness/importance categorization of state-action pairs.
//!
//! Both quantities live on the grid `{0, 1, 2, 4, 8, ...}`. The importance of
//! a pair rounds its relative weight `w / min_weight` *up* to the grid; the
//! knownness rounds the observation ratio `n / (visit_target * w)` *down*.
//! Pairs with positive importance form the active set; a phase is balanced
//! when every cell `X_{knownness, importance}` holds at most `knownness`
//! active pairs, which is the regime where the optimistic plan is accurate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{FixedHorizonMdp, NonstationaryPolicy};
use crate::stats::ModelStats;
use crate::ucfh::UcfhConstants;

/// Smallest grid value `>= ratio`; zero only when the ratio is zero.
pub fn importance_of(weight: f64, min_weight: f64) -> u64 {
    if weight <= 0.0 {
        return 0;
    }
    let ratio = weight / min_weight;
    if ratio <= 1.0 {
        return 1;
    }
    let mut grid = 1u64;
    while (grid as f64) < ratio {
        grid *= 2;
    }
    grid
}

/// Largest grid value `<= ratio`; zero when the pair is unvisited, unweighted,
/// or observed less than its importance-scaled target.
pub fn knownness_of(count: u64, visit_target: f64, weight: f64) -> u64 {
    if weight <= 0.0 || count == 0 {
        return 0;
    }
    let ratio = count as f64 / (visit_target * weight);
    if ratio < 1.0 {
        return 0;
    }
    let mut grid = 1u64;
    while (grid * 2) as f64 <= ratio {
        grid *= 2;
    }
    grid
}

/// Per-pair categorization entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub weight: f64,
    pub importance: u64,
    pub knownness: u64,
}

/// Categorization of every pair under one policy and statistics snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryTable {
    /// `entries[s][a]`.
    pub entries: Vec<Vec<CategoryEntry>>,
    /// Active-set cell sizes keyed by `(knownness, importance)`; only pairs
    /// with positive importance are counted.
    pub cells: BTreeMap<(u64, u64), u64>,
    /// Cells whose size exceeds their knownness.
    pub unbalanced_cells: Vec<(u64, u64)>,
}

impl CategoryTable {
    pub fn balanced(&self) -> bool {
        self.unbalanced_cells.is_empty()
    }

    pub fn active_pairs(&self) -> u64 {
        self.cells.values().sum()
    }
}

/// Categorizes every pair of the model under the given policy, committed
/// statistics, and run constants.
pub fn categorize(
    mdp: &FixedHorizonMdp,
    policy: &NonstationaryPolicy,
    stats: &ModelStats,
    constants: &UcfhConstants,
) -> Result<CategoryTable> {
    categorize_counts(mdp, policy, &stats.committed_table(), constants)
}

/// Same categorization from a raw committed-count table, as stored in phase
/// records.
pub fn categorize_counts(
    mdp: &FixedHorizonMdp,
    policy: &NonstationaryPolicy,
    counts: &[Vec<u64>],
    constants: &UcfhConstants,
) -> Result<CategoryTable> {
    if counts.len() != mdp.num_states()
        || counts.iter().any(|row| row.len() != mdp.num_actions())
    {
        return Err(crate::error::Error::DimensionMismatch(
            "count table does not match the model dimensions".to_string(),
        ));
    }
    let weights = mdp.occupancy_weights(policy)?;
    let mut entries = Vec::with_capacity(mdp.num_states());
    let mut cells: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for s in 0..mdp.num_states() {
        let mut row = Vec::with_capacity(mdp.num_actions());
        for a in 0..mdp.num_actions() {
            let weight = weights[s][a];
            let importance = importance_of(weight, constants.min_weight);
            let knownness = knownness_of(counts[s][a], constants.visit_target, weight);
            if importance > 0 {
                *cells.entry((knownness, importance)).or_insert(0) += 1;
            }
            row.push(CategoryEntry {
                weight,
                importance,
                knownness,
            });
        }
        entries.push(row);
    }
    let unbalanced_cells = cells
        .iter()
        .filter(|&(&(knownness, _), &count)| count > knownness)
        .map(|(&cell, _)| cell)
        .collect();
    Ok(CategoryTable {
        entries,
        cells,
        unbalanced_cells,
    })
}
