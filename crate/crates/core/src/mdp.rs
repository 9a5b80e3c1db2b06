//! Tabular episodic fixed-horizon MDPs and their exact evaluation machinery.
//!
//! An episode lasts exactly `horizon` decision steps. Time indices are
//! 0-based throughout: the agent observes `s_t`, takes `a_t = policy(t, s_t)`
//! and collects the (deterministic, time-dependent) reward `r_t(s_t)` for
//! `t = 0..horizon`. Transitions are stationary; policies are nonstationary
//! because in a finite-horizon problem the optimal action generally depends
//! on the number of remaining steps.
//!
//! Each state-action pair carries a declared successor set: the states it can
//! possibly transition to. Successor sets are part of the model specification
//! (domain knowledge) and may be strict supersets of the current support.

use rand::Rng;

use crate::error::{Error, Result};

/// Row-sum, start-distribution, and reward-range checks use this tolerance.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// A fully specified tabular fixed-horizon MDP.
///
/// Immutable after construction; all evaluation operations are pure.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedHorizonMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    /// `rewards[t][s]` in `[0, 1]`.
    rewards: Vec<Vec<f64>>,
    /// Dense `transitions[s][a][s']`.
    transitions: Vec<Vec<Vec<f64>>>,
    /// `start_dist[s]`, sums to one.
    start_dist: Vec<f64>,
    /// Sorted declared successor states per `(s, a)`.
    successor_sets: Vec<Vec<Vec<usize>>>,
    name: Option<String>,
}

/// Borrowed view of the parts of a model a planner may legitimately use:
/// dimensions, rewards, and declared successor sets. Deliberately excludes
/// the transition probabilities so that optimistic planners cannot peek at
/// the ground truth.
#[derive(Debug, Clone, Copy)]
pub struct MdpSkeleton<'a> {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub rewards: &'a [Vec<f64>],
    pub successor_sets: &'a [Vec<Vec<usize>>],
}

impl<'a> MdpSkeleton<'a> {
    pub fn reward(&self, t: usize, s: usize) -> f64 {
        self.rewards[t][s]
    }

    pub fn successors(&self, s: usize, a: usize) -> &'a [usize] {
        &self.successor_sets[s][a]
    }

    /// Largest declared successor-set size over all pairs.
    pub fn max_successors(&self) -> usize {
        self.successor_sets
            .iter()
            .flat_map(|per_action| per_action.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }
}

/// Deterministic nonstationary policy: one action per `(t, s)`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NonstationaryPolicy {
    actions: Vec<Vec<usize>>,
}

impl NonstationaryPolicy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    /// Policy that plays `action` at every `(t, s)`.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            actions: vec![vec![action; num_states]; horizon],
        }
    }

    /// Draws an independent uniform action for every `(t, s)`.
    pub fn uniform_random<R: Rng + ?Sized>(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        rng: &mut R,
    ) -> Self {
        let actions = (0..horizon)
            .map(|_| (0..num_states).map(|_| rng.random_range(0..num_actions)).collect())
            .collect();
        Self { actions }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn num_states(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn action(&self, t: usize, s: usize) -> usize {
        self.actions[t][s]
    }

    pub fn actions(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn set_action(&mut self, t: usize, s: usize, action: usize) {
        self.actions[t][s] = action;
    }
}

/// Value table `V_t(s)` for `t = 0..=horizon`; the final row is identically
/// zero so the backward recursion needs no special casing.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    fn zeroed(horizon: usize, num_states: usize) -> Self {
        Self {
            values: vec![vec![0.0; num_states]; horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn num_states(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.values[t][s]
    }

    /// The row `V_t(·)`.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
}

/// One executed step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A sampled episode: exactly `horizon` steps. The last step's `next_state`
/// is the terminal observation; it earns no reward but its transition is a
/// legitimate observation of the model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Trajectory {
    steps: Vec<Step>,
}

impl Trajectory {
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of collected rewards.
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|step| step.reward).sum()
    }
}

impl FixedHorizonMdp {
    /// Builds a model from dense transition tables. The declared successor
    /// set of each pair is the support of its transition row.
    pub fn from_dense(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
        start_dist: Vec<f64>,
    ) -> Result<Self> {
        let successor_sets = derive_support(&transitions);
        Self::with_declared_successors(
            num_states,
            num_actions,
            horizon,
            rewards,
            transitions,
            start_dist,
            successor_sets,
        )
    }

    /// Builds a model with explicitly declared successor sets, which may be
    /// strict supersets of the transition support.
    #[allow(clippy::too_many_arguments)]
    pub fn with_declared_successors(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        rewards: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
        start_dist: Vec<f64>,
        mut successor_sets: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        for per_action in &mut successor_sets {
            for set in per_action {
                set.sort_unstable();
                set.dedup();
            }
        }
        let mdp = Self {
            num_states,
            num_actions,
            horizon,
            rewards,
            transitions,
            start_dist,
            successor_sets,
            name: None,
        };
        let problems = mdp.validate();
        if problems.is_empty() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(problems))
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Every structural problem found, one entry per violation.
    fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.num_states == 0 {
            problems.push("num_states must be positive".to_string());
        }
        if self.num_actions == 0 {
            problems.push("num_actions must be positive".to_string());
        }
        if self.horizon == 0 {
            problems.push("horizon must be positive".to_string());
        }
        if self.rewards.len() != self.horizon {
            problems.push(format!(
                "rewards has {} rows, expected horizon {}",
                self.rewards.len(),
                self.horizon
            ));
        }
        for (t, row) in self.rewards.iter().enumerate() {
            if row.len() != self.num_states {
                problems.push(format!(
                    "rewards[{}] has {} entries, expected {}",
                    t,
                    row.len(),
                    self.num_states
                ));
                continue;
            }
            for (s, &r) in row.iter().enumerate() {
                if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&r) {
                    problems.push(format!("reward r_{}({}) = {} outside [0, 1]", t, s, r));
                }
            }
        }
        if self.start_dist.len() != self.num_states {
            problems.push(format!(
                "start_dist has {} entries, expected {}",
                self.start_dist.len(),
                self.num_states
            ));
        } else {
            let total: f64 = self.start_dist.iter().sum();
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                problems.push(format!("start_dist sums to {}, expected 1", total));
            }
            for (s, &p) in self.start_dist.iter().enumerate() {
                if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&p) {
                    problems.push(format!("start_dist[{}] = {} outside [0, 1]", s, p));
                }
            }
        }
        if self.transitions.len() != self.num_states
            || self.successor_sets.len() != self.num_states
        {
            problems.push("transition/successor tables must have one row per state".to_string());
            return problems;
        }
        for s in 0..self.num_states {
            if self.transitions[s].len() != self.num_actions
                || self.successor_sets[s].len() != self.num_actions
            {
                problems.push(format!(
                    "state {} must have one transition row and successor set per action",
                    s
                ));
                continue;
            }
            for a in 0..self.num_actions {
                let row = &self.transitions[s][a];
                if row.len() != self.num_states {
                    problems.push(format!(
                        "transition row ({}, {}) has {} entries, expected {}",
                        s,
                        a,
                        row.len(),
                        self.num_states
                    ));
                    continue;
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                    problems.push(format!(
                        "transition row ({}, {}) sums to {}, expected 1",
                        s, a, total
                    ));
                }
                let set = &self.successor_sets[s][a];
                if set.is_empty() {
                    problems.push(format!("successor set of ({}, {}) is empty", s, a));
                }
                if set.iter().any(|&next| next >= self.num_states) {
                    problems.push(format!(
                        "successor set of ({}, {}) references a state outside the model",
                        s, a
                    ));
                    continue;
                }
                for (next, &p) in row.iter().enumerate() {
                    if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&p) {
                        problems.push(format!(
                            "p({} | {}, {}) = {} outside [0, 1]",
                            next, s, a, p
                        ));
                    }
                    if p > 0.0 && set.binary_search(&next).is_err() {
                        problems.push(format!(
                            "p({} | {}, {}) = {} is positive but {} is not a declared successor",
                            next, s, a, p, next
                        ));
                    }
                }
            }
        }
        problems
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn reward(&self, t: usize, s: usize) -> f64 {
        self.rewards[t][s]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[s][a][next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    /// The most probable start state (smallest index on ties); the reference
    /// point for fixed-start-state value gaps.
    pub fn modal_start_state(&self) -> usize {
        let mut best = 0;
        for s in 1..self.num_states {
            if self.start_dist[s] > self.start_dist[best] {
                best = s;
            }
        }
        best
    }

    pub fn successors(&self, s: usize, a: usize) -> &[usize] {
        &self.successor_sets[s][a]
    }

    pub fn successor_sets(&self) -> &[Vec<Vec<usize>>] {
        &self.successor_sets
    }

    /// `C`: the largest declared successor-set size over all pairs.
    pub fn max_successors(&self) -> usize {
        self.skeleton().max_successors()
    }

    pub fn skeleton(&self) -> MdpSkeleton<'_> {
        MdpSkeleton {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            rewards: &self.rewards,
            successor_sets: &self.successor_sets,
        }
    }

    fn check_policy(&self, policy: &NonstationaryPolicy) -> Result<()> {
        if policy.horizon() != self.horizon || policy.num_states() != self.num_states {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, model needs {}x{}",
                policy.horizon(),
                policy.num_states(),
                self.horizon,
                self.num_states
            )));
        }
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                if policy.action(t, s) >= self.num_actions {
                    return Err(Error::DimensionMismatch(format!(
                        "policy action {} at (t={}, s={}) exceeds action count {}",
                        policy.action(t, s),
                        t,
                        s,
                        self.num_actions
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact policy evaluation by backward induction:
    /// `V_t(s) = r_t(s) + sum_{s'} p(s'|s, policy(t, s)) V_{t+1}(s')`.
    pub fn evaluate_policy(&self, policy: &NonstationaryPolicy) -> Result<ValueTable> {
        self.check_policy(policy)?;
        let mut table = ValueTable::zeroed(self.horizon, self.num_states);
        for t in (0..self.horizon).rev() {
            for s in 0..self.num_states {
                let a = policy.action(t, s);
                let continuation: f64 = self.successor_sets[s][a]
                    .iter()
                    .map(|&next| self.transitions[s][a][next] * table.values[t + 1][next])
                    .sum();
                table.values[t][s] = self.rewards[t][s] + continuation;
            }
        }
        Ok(table)
    }

    /// Optimal values and an optimal policy by backward induction. Argmax
    /// ties break toward the smallest action index for reproducibility.
    pub fn optimal_values(&self) -> (ValueTable, NonstationaryPolicy) {
        let mut table = ValueTable::zeroed(self.horizon, self.num_states);
        let mut policy = NonstationaryPolicy::constant(self.horizon, self.num_states, 0);
        for t in (0..self.horizon).rev() {
            for s in 0..self.num_states {
                let mut best_action = 0;
                let mut best_value = f64::NEG_INFINITY;
                for a in 0..self.num_actions {
                    let continuation: f64 = self.successor_sets[s][a]
                        .iter()
                        .map(|&next| self.transitions[s][a][next] * table.values[t + 1][next])
                        .sum();
                    if continuation > best_value {
                        best_value = continuation;
                        best_action = a;
                    }
                }
                table.values[t][s] = self.rewards[t][s] + best_value;
                policy.set_action(t, s, best_action);
            }
        }
        (table, policy)
    }

    /// Start-distribution-weighted value of a table: `sum_s p0(s) V_0(s)`.
    pub fn start_value(&self, table: &ValueTable) -> f64 {
        self.start_dist
            .iter()
            .zip(table.row(0))
            .map(|(&p, &v)| p * v)
            .sum()
    }

    /// Exact expected episode return of a policy.
    pub fn total_return(&self, policy: &NonstationaryPolicy) -> Result<f64> {
        Ok(self.start_value(&self.evaluate_policy(policy)?))
    }

    /// Samples one episode. The start state and every successor are drawn by
    /// inverse CDF in ascending state order over the declared successor set,
    /// so a fixed RNG stream reproduces the trajectory exactly.
    pub fn sample_episode<R: Rng + ?Sized>(
        &self,
        policy: &NonstationaryPolicy,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.check_policy(policy)?;
        let mut steps = Vec::with_capacity(self.horizon);
        let mut state = sample_index(&self.start_dist, rng);
        for t in 0..self.horizon {
            let action = policy.action(t, state);
            let successors = &self.successor_sets[state][action];
            let row = &self.transitions[state][action];
            let next_state = sample_from_successors(successors, row, rng);
            steps.push(Step {
                state,
                action,
                reward: self.rewards[t][state],
                next_state,
            });
            state = next_state;
        }
        Ok(Trajectory { steps })
    }

    /// Expected per-episode visit counts `w(s, a)`, computed by forward
    /// propagation of the state distribution. Sums to the horizon.
    pub fn occupancy_weights(&self, policy: &NonstationaryPolicy) -> Result<Vec<Vec<f64>>> {
        self.check_policy(policy)?;
        let mut weights = vec![vec![0.0; self.num_actions]; self.num_states];
        let mut dist = self.start_dist.clone();
        for t in 0..self.horizon {
            for s in 0..self.num_states {
                weights[s][policy.action(t, s)] += dist[s];
            }
            if t + 1 == self.horizon {
                break;
            }
            let mut next_dist = vec![0.0; self.num_states];
            for s in 0..self.num_states {
                if dist[s] == 0.0 {
                    continue;
                }
                let a = policy.action(t, s);
                for &next in &self.successor_sets[s][a] {
                    next_dist[next] += dist[s] * self.transitions[s][a][next];
                }
            }
            dist = next_dist;
        }
        Ok(weights)
    }

    /// Per-step variance of the next-state value:
    /// `sigma2[t][s][a] = Var_{s' ~ p(.|s,a)}[ V_{t+1}(s') ]`, zero at the
    /// final step. `values` must be the evaluation of the same policy.
    pub fn local_variance(
        &self,
        policy: &NonstationaryPolicy,
        values: &ValueTable,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_policy(policy)?;
        if values.horizon() != self.horizon || values.num_states() != self.num_states {
            return Err(Error::DimensionMismatch(
                "value table does not match the model dimensions".to_string(),
            ));
        }
        let mut sigma2 = vec![vec![vec![0.0; self.num_actions]; self.num_states]; self.horizon];
        for t in 0..self.horizon.saturating_sub(1) {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let successors = &self.successor_sets[s][a];
                    let row = &self.transitions[s][a];
                    let mean: f64 = successors
                        .iter()
                        .map(|&next| row[next] * values.value(t + 1, next))
                        .sum();
                    sigma2[t][s][a] = successors
                        .iter()
                        .map(|&next| {
                            let dev = values.value(t + 1, next) - mean;
                            row[next] * dev * dev
                        })
                        .sum();
                }
            }
        }
        Ok(sigma2)
    }

    /// Total return variance of a policy. Satisfies the backward recursion
    /// `Var_t(s) = sum_{s'} p(s'|s, a) Var_{t+1}(s') + sigma2_t(s, a)` with
    /// `a = policy(t, s)`, so it is bounded by `horizon^2` for unit rewards.
    pub fn value_variance(&self, policy: &NonstationaryPolicy) -> Result<Vec<Vec<f64>>> {
        let values = self.evaluate_policy(policy)?;
        let sigma2 = self.local_variance(policy, &values)?;
        let mut variance = vec![vec![0.0; self.num_states]; self.horizon];
        for t in (0..self.horizon.saturating_sub(1)).rev() {
            for s in 0..self.num_states {
                let a = policy.action(t, s);
                let continuation: f64 = self.successor_sets[s][a]
                    .iter()
                    .map(|&next| self.transitions[s][a][next] * variance[t + 1][next])
                    .sum();
                variance[t][s] = continuation + sigma2[t][s][a];
            }
        }
        Ok(variance)
    }
}

fn derive_support(transitions: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<usize>>> {
    transitions
        .iter()
        .map(|per_action| {
            per_action
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(next, _)| next)
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Inverse-CDF draw over a dense distribution, ascending index order.
fn sample_index<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding pushed the cumulative sum slightly below one; take the last
    // state with positive mass.
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Inverse-CDF draw restricted to a declared successor set.
fn sample_from_successors<R: Rng + ?Sized>(
    successors: &[usize],
    row: &[f64],
    rng: &mut R,
) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &next in successors {
        acc += row[next];
        if u < acc {
            return next;
        }
    }
    *successors
        .iter()
        .rfind(|&&next| row[next] > 0.0)
        .unwrap_or(successors.last().expect("successor sets are non-empty"))
}

/// Uniformly random dense model for tests and synthetic experiments. Each
/// pair draws between one and `max_successors` distinct successors with
/// normalized positive weights; the last entry absorbs rounding so every row
/// sums to one exactly.
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    max_successors: usize,
    rng: &mut R,
) -> FixedHorizonMdp {
    assert!(num_states > 0 && num_actions > 0 && horizon > 0);
    let cap = max_successors.clamp(1, num_states);
    let rewards = (0..horizon)
        .map(|_| (0..num_states).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut transitions = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
    for s in 0..num_states {
        for a in 0..num_actions {
            let count = rng.random_range(1..=cap);
            let mut chosen: Vec<usize> = (0..num_states).collect();
            for i in 0..count {
                let j = rng.random_range(i..num_states);
                chosen.swap(i, j);
            }
            let mut chosen = chosen[..count].to_vec();
            chosen.sort_unstable();
            let weights: Vec<f64> = (0..count).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            for (i, &next) in chosen.iter().enumerate() {
                let p = if i + 1 == count {
                    1.0 - acc
                } else {
                    weights[i] / total
                };
                transitions[s][a][next] = p;
                acc += p;
            }
        }
    }
    let raw: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let mut start_dist: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = start_dist[..num_states - 1].iter().sum();
    start_dist[num_states - 1] = 1.0 - head;

    FixedHorizonMdp::from_dense(
        num_states,
        num_actions,
        horizon,
        rewards,
        transitions,
        start_dist,
    )
    .expect("randomly generated model is structurally valid")
}
