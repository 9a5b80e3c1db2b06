//! Experiment records: per-episode rows, per-phase rows, and run summaries.
//!
//! Episode rows stream as JSONL; phase rows carry the executed policy and the
//! committed-count snapshot it was planned from, which is enough to recompute
//! every gap, mistake count, and category table offline.

use serde::{Deserialize, Serialize};

use crate::ucfh::UcfhConstants;

/// A model-statistics commit: the pair that was absorbed and its new total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub state: usize,
    pub action: usize,
    pub new_count: u64,
}

/// One executed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    /// 1-based episode index.
    pub episode: u64,
    /// 1-based index of the phase whose policy was executed.
    pub phase: u64,
    /// Realized (sampled) episode return.
    #[serde(rename = "return")]
    pub realized_return: f64,
    /// Exact expected return of the executed policy under the true model,
    /// weighted by the start distribution.
    pub value: f64,
    /// Optimal expected return minus `value`; the mistake criterion.
    pub gap: f64,
    /// Exact value of the executed policy from the modal start state.
    pub value_start_state: f64,
    /// Optimal-minus-executed value from the modal start state.
    pub gap_start_state: f64,
    /// Whether `gap` exceeds the configured accuracy.
    pub mistake: bool,
    /// Commit performed after this episode, if any.
    pub update: Option<UpdateEvent>,
}

/// One planning phase: the policy in effect and what it was planned from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    /// 1-based phase index.
    pub phase: u64,
    /// First episode executed under this phase's policy.
    pub first_episode: u64,
    /// Episodes executed in this phase.
    pub episodes: u64,
    /// The executed policy, `actions[t][s]`.
    pub policy: Vec<Vec<usize>>,
    /// Exact expected return of the policy (start-distribution weighted).
    pub value: f64,
    pub gap: f64,
    pub value_start_state: f64,
    pub gap_start_state: f64,
    /// Committed visit counts `n(s, a)` the phase was planned from, when the
    /// agent maintains them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub committed_counts: Option<Vec<Vec<u64>>>,
    /// The commit that ended this phase, if any.
    pub committed: Option<UpdateEvent>,
}

/// End-of-run totals and configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub agent: String,
    pub mdp_name: Option<String>,
    pub seed: u64,
    pub accuracy: f64,
    pub episodes: u64,
    pub phases: u64,
    pub total_mistakes: u64,
    pub total_updates: u64,
    /// True when the episode budget ran out mid-phase.
    pub truncated: bool,
    /// Optimal expected return (start-distribution weighted).
    pub optimal_return: f64,
    /// Optimal value from the modal start state.
    pub optimal_start_state_value: f64,
    /// Gap of the final policy.
    pub final_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<UcfhConstants>,
    /// Wall-clock seconds; excluded from reproducibility comparisons.
    pub wall_time_s: f64,
}

/// Full in-memory record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub rows: Vec<EpisodeRow>,
    pub phases: Vec<PhaseRow>,
    pub summary: RunSummary,
}

impl ExperimentRecord {
    /// Copy with the wall clock zeroed, for bit-reproducibility comparisons.
    pub fn reproducible(&self) -> Self {
        let mut copy = self.clone();
        copy.summary.wall_time_s = 0.0;
        copy
    }

    /// First episode index after which every executed policy stays within
    /// `accuracy` of optimal, or `None` if the final policy is still off.
    pub fn episodes_to_sustained_accuracy(&self, accuracy: f64) -> Option<u64> {
        let mut start = None;
        for row in &self.rows {
            if row.gap > accuracy {
                start = None;
            } else if start.is_none() {
                start = Some(row.episode);
            }
        }
        start
    }
}

/// Number of episode rows whose exact gap exceeds `accuracy`.
pub fn count_mistakes(rows: &[EpisodeRow], accuracy: f64) -> u64 {
    rows.iter().filter(|row| row.gap > accuracy).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(episode: u64, gap: f64) -> EpisodeRow {
        EpisodeRow {
            episode,
            phase: 1,
            realized_return: 0.0,
            value: 0.0,
            gap,
            value_start_state: 0.0,
            gap_start_state: gap,
            mistake: false,
            update: None,
        }
    }

    #[test]
    fn mistake_counting_thresholds() {
        assert_eq!(count_mistakes(&[], 0.5), 0);
        let rows = vec![row(1, 0.0), row(2, 0.0)];
        assert_eq!(count_mistakes(&rows, 0.1), 0);
        let rows = vec![row(1, 0.2), row(2, 0.6), row(3, 0.6)];
        assert_eq!(count_mistakes(&rows, 0.5), 2);
        // strict inequality at the threshold
        assert_eq!(count_mistakes(&[row(1, 0.5)], 0.5), 0);
    }

    #[test]
    fn sustained_accuracy_finds_last_regression() {
        let record = ExperimentRecord {
            rows: vec![row(1, 0.9), row(2, 0.0), row(3, 0.9), row(4, 0.1), row(5, 0.1)],
            phases: Vec::new(),
            summary: RunSummary {
                agent: "test".into(),
                mdp_name: None,
                seed: 0,
                accuracy: 0.5,
                episodes: 5,
                phases: 0,
                total_mistakes: 2,
                total_updates: 0,
                truncated: false,
                optimal_return: 1.0,
                optimal_start_state_value: 1.0,
                final_gap: 0.1,
                constants: None,
                wall_time_s: 0.0,
            },
        };
        assert_eq!(record.episodes_to_sustained_accuracy(0.5), Some(4));
        assert_eq!(record.episodes_to_sustained_accuracy(0.05), None);
    }
}
