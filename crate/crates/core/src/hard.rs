//! Hard-to-learn instance family: parallel two-outcome bandits embedded in a
//! fixed-horizon MDP.
//!
//! The start state fans out uniformly into `n` bandit states regardless of
//! the action. Each bandit state transitions to an absorbing good state `+`
//! (reward one forever) or an absorbing bad state `-` (reward zero), with a
//! per-action bias on the good outcome: the first action always carries bias
//! `eps_prime / 2`, and a hidden per-bandit optimal action carries bias
//! `eps_prime`. Every other action is unbiased. Episodes therefore earn
//! reward on exactly `horizon - 2` steps, and learning the instance reduces
//! to identifying the hidden best arm in a large enough fraction of bandits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{FixedHorizonMdp, NonstationaryPolicy};

/// Hypothesis-indexed instance description.
///
/// `hypotheses[i]` selects bandit `i`'s hidden optimal action: value `j >= 1`
/// gives action `j` bias `eps_prime`, and value `0` means no hidden arm, so
/// the always-biased first action is optimal there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub num_bandits: usize,
    pub num_actions: usize,
    pub eps_prime: f64,
    pub horizon: usize,
    pub hypotheses: Vec<usize>,
}

impl HardInstanceSpec {
    pub fn num_states(&self) -> usize {
        self.num_bandits + 3
    }

    /// Index of the absorbing reward state.
    pub fn good_state(&self) -> usize {
        self.num_bandits + 1
    }

    /// Index of the absorbing zero-reward state.
    pub fn bad_state(&self) -> usize {
        self.num_bandits + 2
    }

    /// The optimal action at bandit `i` (0-based bandit index).
    pub fn optimal_action(&self, bandit: usize) -> usize {
        let h = self.hypotheses[bandit];
        if h >= 1 {
            h
        } else {
            0
        }
    }

    /// Bias toward the good state of `action` at bandit `i`.
    pub fn bias(&self, bandit: usize, action: usize) -> f64 {
        if action == 0 {
            self.eps_prime / 2.0
        } else if self.hypotheses[bandit] >= 1 && action == self.hypotheses[bandit] {
            self.eps_prime
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_bandits == 0 {
            problems.push("the instance needs at least one bandit state".to_string());
        }
        if self.num_actions < 2 {
            problems.push("the instance needs at least two actions".to_string());
        }
        if !(self.eps_prime > 0.0 && self.eps_prime <= 0.25) {
            problems.push(format!(
                "bias parameter {} outside (0, 1/4]",
                self.eps_prime
            ));
        }
        if self.horizon < 3 {
            problems.push("horizon must be at least 3".to_string());
        }
        if self.hypotheses.len() != self.num_bandits {
            problems.push(format!(
                "{} hypotheses for {} bandits",
                self.hypotheses.len(),
                self.num_bandits
            ));
        }
        if self
            .hypotheses
            .iter()
            .any(|&h| h >= self.num_actions)
        {
            problems.push("every hypothesis must name an action index".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMdp(problems))
        }
    }
}

/// Samples a hypothesis array with independent uniform entries over
/// `{1, .., num_actions - 1}`, or `{0, .., num_actions - 1}` when
/// `include_zero` is set.
pub fn sample_hypothesis<R: Rng + ?Sized>(
    num_bandits: usize,
    num_actions: usize,
    include_zero: bool,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if num_actions < 2 {
        return Err(Error::InvalidArgument(
            "hypotheses need at least two actions".to_string(),
        ));
    }
    let lo = usize::from(!include_zero);
    Ok((0..num_bandits)
        .map(|_| rng.random_range(lo..num_actions))
        .collect())
}

/// The bias parameter that makes a target accuracy hard at a given horizon,
/// mirroring the substitution used in the lower-bound argument:
/// `16 * accuracy * e^4 / ((horizon - 2) * eta)` with `eta = 1/10` by default.
pub fn eps_prime_for_accuracy(accuracy: f64, horizon: usize, eta: f64) -> f64 {
    16.0 * accuracy * 4.0f64.exp() / ((horizon as f64 - 2.0) * eta)
}

/// Builds the instance as a standard tabular model.
///
/// State layout: `0` is the start, `1..=n` the bandits, then `+` and `-`.
/// Rewards are one at `+` for every step and zero elsewhere; the start
/// distribution is a point mass on state `0`.
pub fn make_hard_mdp(spec: &HardInstanceSpec) -> Result<FixedHorizonMdp> {
    spec.validate()?;
    let n = spec.num_bandits;
    let num_states = spec.num_states();
    let num_actions = spec.num_actions;
    let good = spec.good_state();
    let bad = spec.bad_state();

    let mut transitions = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
    let mut successor_sets = vec![vec![Vec::new(); num_actions]; num_states];
    for a in 0..num_actions {
        // uniform fan-out; the last bandit absorbs rounding so the row sums
        // to one exactly
        let share = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 1..=n {
            let p = if i == n { 1.0 - acc } else { share };
            transitions[0][a][i] = p;
            acc += p;
        }
        successor_sets[0][a] = (1..=n).collect();

        for bandit in 0..n {
            let state = bandit + 1;
            let bias = spec.bias(bandit, a);
            transitions[state][a][good] = 0.5 + bias;
            transitions[state][a][bad] = 0.5 - bias;
            successor_sets[state][a] = vec![good, bad];
        }
        transitions[good][a][good] = 1.0;
        transitions[bad][a][bad] = 1.0;
        successor_sets[good][a] = vec![good];
        successor_sets[bad][a] = vec![bad];
    }

    let mut rewards = vec![vec![0.0; num_states]; spec.horizon];
    for row in &mut rewards {
        row[good] = 1.0;
    }
    let mut start_dist = vec![0.0; num_states];
    start_dist[0] = 1.0;

    let mdp = FixedHorizonMdp::with_declared_successors(
        num_states,
        num_actions,
        spec.horizon,
        rewards,
        transitions,
        start_dist,
        successor_sets,
    )?;
    Ok(mdp.with_name(format!(
        "hard-n{}-a{}-h{}-eps{}",
        n, num_actions, spec.horizon, spec.eps_prime
    )))
}

/// How well a policy solves the embedded bandits, plus the induced gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditAccuracy {
    /// Fraction of bandits where the policy picks the hidden optimal action
    /// at the bandit time step.
    pub solved_fraction: f64,
    /// Lower bound on the suboptimality gap implied by the unsolved
    /// fraction: `(horizon - 2) * (1 - solved_fraction) * eps_prime / 2`.
    pub gap_lower_bound: f64,
    /// Exact gap from the per-bandit bias shortfalls:
    /// `(horizon - 2) * mean_i (optimal bias - chosen bias)`.
    pub exact_gap: f64,
}

/// Scores a policy against the hidden hypotheses. Only the action taken at
/// the bandit time step (the second step of an episode) matters.
pub fn policy_bandit_accuracy(
    spec: &HardInstanceSpec,
    policy: &NonstationaryPolicy,
) -> Result<BanditAccuracy> {
    spec.validate()?;
    if policy.horizon() != spec.horizon || policy.num_states() != spec.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, instance needs {}x{}",
            policy.horizon(),
            policy.num_states(),
            spec.horizon,
            spec.num_states()
        )));
    }
    let mut solved = 0usize;
    let mut shortfall_sum = 0.0;
    for bandit in 0..spec.num_bandits {
        let state = bandit + 1;
        let chosen = policy.action(1, state);
        if chosen == spec.optimal_action(bandit) {
            solved += 1;
        }
        let best_bias = spec.bias(bandit, spec.optimal_action(bandit));
        shortfall_sum += best_bias - spec.bias(bandit, chosen);
    }
    let n = spec.num_bandits as f64;
    let steps = (spec.horizon - 2) as f64;
    let solved_fraction = solved as f64 / n;
    Ok(BanditAccuracy {
        solved_fraction,
        gap_lower_bound: steps * (1.0 - solved_fraction) * spec.eps_prime / 2.0,
        exact_gap: steps * shortfall_sum / n,
    })
}
