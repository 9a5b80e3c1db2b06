//! Fixed-horizon extended value iteration.
//!
//! Plans optimistically against a class of models: every transition
//! probability may sit anywhere inside the convex hull of its confidence set.
//! One backward sweep per time step computes, for each state-action pair, the
//! transition vector inside the hulled box that maximizes the expected
//! continuation value. That inner maximization has a closed-form greedy
//! solution: start every successor at its hull minimum and hand the remaining
//! probability mass to successors in order of decreasing next-step value,
//! saturating each at its hull maximum.
//!
//! The resulting plan is optimistic: if the true model lies in every
//! confidence set used, the planned value dominates the true optimum.

use crate::confidence::{Interval, ProbabilitySet};
use crate::error::{Error, Result};
use crate::mdp::{FixedHorizonMdp, MdpSkeleton, NonstationaryPolicy};
use crate::stats::ModelStats;

/// Convex hulls of the per-transition confidence sets, indexed like the
/// declared successor sets. Time-independent: they depend only on counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HullTable {
    hulls: Vec<Vec<Vec<Interval>>>,
}

impl HullTable {
    /// Hulls from committed counts at per-set failure probability `delta1`.
    /// Pairs with no committed observations get the vacuous `[0, 1]` hull on
    /// every declared successor.
    pub fn from_stats(skeleton: &MdpSkeleton, stats: &ModelStats, delta1: f64) -> Result<Self> {
        let mut hulls = Vec::with_capacity(skeleton.num_states);
        for s in 0..skeleton.num_states {
            let mut per_action = Vec::with_capacity(skeleton.num_actions);
            for a in 0..skeleton.num_actions {
                let successors = skeleton.successors(s, a);
                let n = stats.committed(s, a);
                let row = if n == 0 {
                    vec![Interval { lo: 0.0, hi: 1.0 }; successors.len()]
                } else {
                    let counts = stats.committed_by_successor(s, a);
                    counts
                        .iter()
                        .map(|&c| {
                            ProbabilitySet::new(c as f64 / n as f64, n, delta1)
                                .map(|set| set.hull())
                        })
                        .collect::<Result<Vec<_>>>()?
                };
                per_action.push(row);
            }
            hulls.push(per_action);
        }
        Ok(Self { hulls })
    }

    /// Zero-width hulls pinned at the true transition probabilities. Used to
    /// exercise the planner in the no-uncertainty limit.
    pub fn exact(mdp: &FixedHorizonMdp) -> Self {
        let hulls = (0..mdp.num_states())
            .map(|s| {
                (0..mdp.num_actions())
                    .map(|a| {
                        mdp.successors(s, a)
                            .iter()
                            .map(|&next| {
                                let p = mdp.transition(s, a, next);
                                Interval { lo: p, hi: p }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { hulls }
    }

    pub fn row(&self, s: usize, a: usize) -> &[Interval] {
        &self.hulls[s][a]
    }
}

/// Output of a planning sweep: optimistic action values, the greedy policy,
/// and the optimistic (time-dependent) transition choices.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticPlan {
    /// `q[t][s][a]` for `t = 0..horizon`.
    q: Vec<Vec<Vec<f64>>>,
    policy: NonstationaryPolicy,
    /// `transitions[t][s][a]` aligned with the declared successor set, for
    /// `t = 0..horizon-1`; no transition is chosen at the final step.
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
}

impl OptimisticPlan {
    pub fn q_value(&self, t: usize, s: usize, a: usize) -> f64 {
        self.q[t][s][a]
    }

    pub fn policy(&self) -> &NonstationaryPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> NonstationaryPolicy {
        self.policy
    }

    /// Optimistic successor probabilities chosen at `(t, s, a)`, aligned
    /// with the declared successor set.
    pub fn transition_row(&self, t: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[t][s][a]
    }

    /// Value of the greedy action at `(t, s)`.
    pub fn state_value(&self, t: usize, s: usize) -> f64 {
        self.q[t][s][self.policy.action(t, s)]
    }
}

/// Distributes one unit of probability over box constraints: start from the
/// minima and greedily fill, in the given preference order, up to each
/// maximum. Returns the filled vector, which attains the maximum of any
/// linear objective consistent with the order.
pub fn greedy_redistribute(minima: &[f64], maxima: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    let len = minima.len();
    if maxima.len() != len || order.len() != len {
        return Err(Error::DimensionMismatch(
            "minima, maxima, and order must have equal length".to_string(),
        ));
    }
    let mut seen = vec![false; len];
    for &i in order {
        if i >= len || seen[i] {
            return Err(Error::InvalidArgument(
                "order must be a permutation of the successor indices".to_string(),
            ));
        }
        seen[i] = true;
    }
    for i in 0..len {
        if minima[i] > maxima[i] + 1e-12 {
            return Err(Error::Infeasible(format!(
                "minimum {} exceeds maximum {} at index {}",
                minima[i], maxima[i], i
            )));
        }
    }

    let mut filled = minima.to_vec();
    let mut deficit = 1.0 - filled.iter().sum::<f64>();
    if deficit < -1e-10 {
        return Err(Error::Infeasible(format!(
            "interval minima sum to {} > 1",
            filled.iter().sum::<f64>()
        )));
    }
    for &i in order {
        if deficit <= 1e-14 {
            break;
        }
        let room = (maxima[i] - filled[i]).max(0.0);
        let grant = room.min(deficit);
        filled[i] += grant;
        deficit -= grant;
    }
    if deficit > 1e-14 {
        return Err(Error::Infeasible(format!(
            "interval maxima sum to less than 1 (deficit {})",
            deficit
        )));
    }
    // Push the rounding residual into the top-ranked entry and re-clamp so
    // the simplex identity holds to full precision.
    let top = order[0];
    filled[top] = (filled[top] + deficit).clamp(minima[top].min(maxima[top]), maxima[top]);
    Ok(filled)
}

/// Plans against explicit hulls. `fixed_horizon_evi` is the entry point that
/// derives the hulls from visit statistics.
pub fn plan_with_hulls(skeleton: &MdpSkeleton, hulls: &HullTable) -> Result<OptimisticPlan> {
    let (num_states, num_actions, horizon) =
        (skeleton.num_states, skeleton.num_actions, skeleton.horizon);
    // Feasibility: each box must intersect the probability simplex.
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = hulls.row(s, a);
            if row.len() != skeleton.successors(s, a).len() {
                return Err(Error::DimensionMismatch(format!(
                    "hull row ({}, {}) does not match the declared successor set",
                    s, a
                )));
            }
            let max_sum: f64 = row.iter().map(|iv| iv.hi).sum();
            let min_sum: f64 = row.iter().map(|iv| iv.lo).sum();
            if max_sum < 1.0 - 1e-9 || min_sum > 1.0 + 1e-9 {
                return Err(Error::Infeasible(format!(
                    "hulls of ({}, {}) cannot reach the simplex (min sum {}, max sum {})",
                    s, a, min_sum, max_sum
                )));
            }
        }
    }

    let mut q = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    for s in 0..num_states {
        for a in 0..num_actions {
            q[horizon - 1][s][a] = skeleton.reward(horizon - 1, s);
        }
    }
    let mut transitions: Vec<Vec<Vec<Vec<f64>>>> = Vec::new();
    if horizon > 1 {
        transitions = vec![vec![vec![Vec::new(); num_actions]; num_states]; horizon - 1];
    }

    for t in (0..horizon.saturating_sub(1)).rev() {
        // Greedy continuation value per state under q[t + 1].
        let next_value: Vec<f64> = (0..num_states)
            .map(|s| {
                let row = &q[t + 1][s];
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        // One global preference order per time step: by continuation value
        // descending, ties toward the smaller state index.
        let mut order: Vec<usize> = (0..num_states).collect();
        order.sort_by(|&x, &y| next_value[y].total_cmp(&next_value[x]).then(x.cmp(&y)));
        let mut rank = vec![0usize; num_states];
        for (pos, &s) in order.iter().enumerate() {
            rank[s] = pos;
        }

        for s in 0..num_states {
            for a in 0..num_actions {
                let successors = skeleton.successors(s, a);
                let row = hulls.row(s, a);
                let minima: Vec<f64> = row.iter().map(|iv| iv.lo).collect();
                let maxima: Vec<f64> = row.iter().map(|iv| iv.hi).collect();
                let mut fill_order: Vec<usize> = (0..successors.len()).collect();
                fill_order.sort_by_key(|&j| rank[successors[j]]);
                let chosen = greedy_redistribute(&minima, &maxima, &fill_order)?;
                let continuation: f64 = chosen
                    .iter()
                    .zip(successors)
                    .map(|(&p, &next)| p * next_value[next])
                    .sum();
                q[t][s][a] = skeleton.reward(t, s) + continuation;
                transitions[t][s][a] = chosen;
            }
        }
    }

    let mut policy = NonstationaryPolicy::constant(horizon, num_states, 0);
    for t in 0..horizon {
        for s in 0..num_states {
            let mut best = 0;
            for a in 1..num_actions {
                if q[t][s][a] > q[t][s][best] {
                    best = a;
                }
            }
            policy.set_action(t, s, best);
        }
    }
    Ok(OptimisticPlan {
        q,
        policy,
        transitions,
    })
}

/// Optimistic planning from visit statistics: builds hulls of the
/// per-transition confidence sets at `delta1` and runs the backward sweep.
pub fn fixed_horizon_evi(
    skeleton: &MdpSkeleton,
    stats: &ModelStats,
    delta1: f64,
) -> Result<OptimisticPlan> {
    let hulls = HullTable::from_stats(skeleton, stats, delta1)?;
    plan_with_hulls(skeleton, &hulls)
}
