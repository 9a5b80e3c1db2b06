//! Visit statistics split into committed and pending counters.
//!
//! The learning loop plans only from committed counts; observations accrue in
//! pending counters until a pair is explicitly absorbed. Counters are laid
//! out over the declared successor sets of the model skeleton.

use crate::error::{Error, Result};
use crate::mdp::MdpSkeleton;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStats {
    /// Committed totals `n(s, a)`.
    committed: Vec<Vec<u64>>,
    /// Pending totals `v(s, a)` since the pair's last commit.
    pending: Vec<Vec<u64>>,
    /// Committed per-successor counts, indexed like the declared sets.
    committed_succ: Vec<Vec<Vec<u64>>>,
    /// Pending per-successor counts.
    pending_succ: Vec<Vec<Vec<u64>>>,
    /// Sorted successor sets, cloned from the skeleton for index resolution.
    successor_sets: Vec<Vec<Vec<usize>>>,
    /// Bumps on every commit; plans record the version they were built from.
    version: u64,
}

impl ModelStats {
    pub fn new(skeleton: &MdpSkeleton) -> Self {
        let committed = vec![vec![0; skeleton.num_actions]; skeleton.num_states];
        let pending = committed.clone();
        let committed_succ: Vec<Vec<Vec<u64>>> = skeleton
            .successor_sets
            .iter()
            .map(|per_action| per_action.iter().map(|set| vec![0; set.len()]).collect())
            .collect();
        let pending_succ = committed_succ.clone();
        Self {
            committed,
            pending,
            committed_succ,
            pending_succ,
            successor_sets: skeleton.successor_sets.to_vec(),
            version: 0,
        }
    }

    pub fn num_states(&self) -> usize {
        self.committed.len()
    }

    pub fn num_actions(&self) -> usize {
        self.committed.first().map_or(0, Vec::len)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn committed(&self, s: usize, a: usize) -> u64 {
        self.committed[s][a]
    }

    pub fn pending(&self, s: usize, a: usize) -> u64 {
        self.pending[s][a]
    }

    pub fn committed_by_successor(&self, s: usize, a: usize) -> &[u64] {
        &self.committed_succ[s][a]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[usize] {
        &self.successor_sets[s][a]
    }

    /// Snapshot of the committed `n(s, a)` table.
    pub fn committed_table(&self) -> Vec<Vec<u64>> {
        self.committed.clone()
    }

    /// Records one observed transition into the pending counters.
    pub fn record(&mut self, s: usize, a: usize, next: usize) -> Result<()> {
        let idx = self.successor_sets[s][a]
            .binary_search(&next)
            .map_err(|_| {
                Error::Contract(format!(
                    "observed successor {} of ({}, {}) is not declared",
                    next, s, a
                ))
            })?;
        self.pending[s][a] += 1;
        self.pending_succ[s][a][idx] += 1;
        Ok(())
    }

    /// Empirical successor distribution from committed counts, or `None`
    /// before the pair's first commit.
    pub fn empirical(&self, s: usize, a: usize) -> Option<Vec<f64>> {
        let n = self.committed[s][a];
        if n == 0 {
            return None;
        }
        Some(
            self.committed_succ[s][a]
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect(),
        )
    }

    /// Folds the pending counters of one pair into its committed counters and
    /// resets them. Returns the new committed total. Callers enforcing an
    /// update trigger should validate it before calling.
    pub fn absorb_pending(&mut self, s: usize, a: usize) -> u64 {
        self.committed[s][a] += self.pending[s][a];
        self.pending[s][a] = 0;
        for (committed, pending) in self.committed_succ[s][a]
            .iter_mut()
            .zip(self.pending_succ[s][a].iter_mut())
        {
            *committed += *pending;
            *pending = 0;
        }
        self.version += 1;
        self.committed[s][a]
    }

    /// Internal consistency: totals equal the sum of per-successor counts.
    pub fn check_consistency(&self) -> Result<()> {
        for s in 0..self.num_states() {
            for a in 0..self.num_actions() {
                let n_sum: u64 = self.committed_succ[s][a].iter().sum();
                let v_sum: u64 = self.pending_succ[s][a].iter().sum();
                if n_sum != self.committed[s][a] || v_sum != self.pending[s][a] {
                    return Err(Error::Contract(format!(
                        "counter mismatch at ({}, {}): n={} vs {}, v={} vs {}",
                        s, a, self.committed[s][a], n_sum, self.pending[s][a], v_sum
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn record_and_absorb_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(3, 2, 3, 3, &mut rng);
        let skeleton = mdp.skeleton();
        let mut stats = ModelStats::new(&skeleton);

        let succ = skeleton.successors(0, 0).to_vec();
        stats.record(0, 0, succ[0]).unwrap();
        stats.record(0, 0, succ[0]).unwrap();
        if succ.len() > 1 {
            stats.record(0, 0, succ[1]).unwrap();
        }
        let recorded = stats.pending(0, 0);
        assert_eq!(stats.committed(0, 0), 0);
        let new_n = stats.absorb_pending(0, 0);
        assert_eq!(new_n, recorded);
        assert_eq!(stats.pending(0, 0), 0);
        assert_eq!(stats.committed(0, 0), recorded);
        stats.check_consistency().unwrap();
    }

    #[test]
    fn undeclared_successor_is_rejected() {
        let mdp = crate::hard::make_hard_mdp(&crate::hard::HardInstanceSpec {
            num_bandits: 2,
            num_actions: 2,
            eps_prime: 0.1,
            horizon: 4,
            hypotheses: vec![1, 1],
        })
        .unwrap();
        let skeleton = mdp.skeleton();
        let mut stats = ModelStats::new(&skeleton);
        // state 0 can only reach the bandit states
        assert!(stats.record(0, 0, 0).is_err());
    }

    #[test]
    fn totals_stay_consistent_under_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mdp = random_mdp(4, 3, 3, 4, &mut rng);
        let skeleton = mdp.skeleton();
        let mut stats = ModelStats::new(&skeleton);
        let mut committed_before = vec![vec![0u64; 3]; 4];
        for _ in 0..10_000 {
            let s = rng.random_range(0..4);
            let a = rng.random_range(0..3);
            if rng.random::<f64>() < 0.9 {
                let succ = skeleton.successors(s, a);
                let next = succ[rng.random_range(0..succ.len())];
                stats.record(s, a, next).unwrap();
            } else {
                let n = stats.absorb_pending(s, a);
                // committed counts never decrease
                assert!(n >= committed_before[s][a]);
                committed_before[s][a] = n;
            }
        }
        stats.check_consistency().unwrap();
    }

    #[test]
    fn empirical_distribution_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(3, 2, 3, 3, &mut rng);
        let skeleton = mdp.skeleton();
        let mut stats = ModelStats::new(&skeleton);
        assert!(stats.empirical(0, 0).is_none());
        let succ = skeleton.successors(0, 0).to_vec();
        for i in 0..10 {
            stats.record(0, 0, succ[i % succ.len()]).unwrap();
        }
        stats.absorb_pending(0, 0);
        let p = stats.empirical(0, 0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
