//! Per-transition-probability confidence sets.
//!
//! For an observed empirical probability `p_hat` out of `n` draws, the set of
//! plausible true probabilities `p'` is the intersection of three conditions:
//!
//! * a Hoeffding band `|p' - p_hat| <= sqrt(ln(6/delta1) / (2n))`,
//! * a Bernstein band
//!   `|p' - p_hat| <= sqrt(2 p_hat (1-p_hat) ln(6/delta1) / n) + 7 ln(6/delta1) / (3(n-1))`,
//! * a standard-deviation band
//!   `|sqrt(p'(1-p')) - sqrt(p_hat(1-p_hat))| <= sqrt(2 ln(6/delta1) / (n-1))`.
//!
//! The first two share the absolute-distance form (the tighter one wins); the
//! third constrains the Bernoulli standard deviation itself and is what keeps
//! the eventual sample-complexity dependence on the successor-set size linear.
//! Terms with an `n - 1` denominator are vacuous at `n = 1`, and with no data
//! at all the set is the whole unit interval.
//!
//! The standard-deviation band is non-convex in `p'`: its upper edge can carve
//! out an interval around one half, so the exact set is represented as at most
//! two disjoint closed intervals. Planning uses only the convex hull.

use crate::error::{Error, Result};

/// A closed subinterval of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// The exact confidence set for one transition probability, plus its hull.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySet {
    p_hat: f64,
    n: u64,
    delta1: f64,
    intervals: Vec<Interval>,
}

impl ProbabilitySet {
    /// Builds the set for an empirical probability `p_hat` observed over `n`
    /// draws at per-set failure probability `delta1`.
    pub fn new(p_hat: f64, n: u64, delta1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_hat) || !p_hat.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "empirical probability {} outside [0, 1]",
                p_hat
            )));
        }
        if !(delta1 > 0.0 && delta1 <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "failure parameter {} outside (0, 1]",
                delta1
            )));
        }
        let intervals = build_intervals(p_hat, n, delta1);
        debug_assert!(!intervals.is_empty() && intervals.len() <= 2);
        Ok(Self {
            p_hat,
            n,
            delta1,
            intervals,
        })
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    /// The exact set as sorted disjoint closed intervals (one or two).
    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Exact membership test.
    pub fn contains(&self, p: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(p))
    }

    /// Convex hull `[min set, max set]`; both endpoints are attained.
    pub fn hull(&self) -> Interval {
        Interval {
            lo: self.intervals[0].lo,
            hi: self.intervals[self.intervals.len() - 1].hi,
        }
    }
}

/// Half-width of the absolute band around `p_hat`: the tighter of the
/// Hoeffding and Bernstein radii. The Bernstein term needs `n > 1`.
fn absolute_radius(p_hat: f64, n: u64, log_term: f64) -> f64 {
    let nf = n as f64;
    let hoeffding = (log_term / (2.0 * nf)).sqrt();
    if n > 1 {
        let bernstein = (2.0 * p_hat * (1.0 - p_hat) * log_term / nf).sqrt()
            + 7.0 * log_term / (3.0 * (nf - 1.0));
        hoeffding.min(bernstein)
    } else {
        hoeffding
    }
}

fn build_intervals(p_hat: f64, n: u64, delta1: f64) -> Vec<Interval> {
    if n == 0 {
        return vec![Interval { lo: 0.0, hi: 1.0 }];
    }
    let log_term = (6.0 / delta1).ln();
    let radius = absolute_radius(p_hat, n, log_term);
    let band = Interval {
        lo: (p_hat - radius).max(0.0),
        hi: (p_hat + radius).min(1.0),
    };
    if n <= 1 {
        return vec![band];
    }

    // Solve the std-band constraints analytically. With s_hat the empirical
    // standard deviation and r the band radius, p'(1-p') must lie between
    // max(0, s_hat - r)^2 and (s_hat + r)^2. The quadratic p'(1-p') = b^2 has
    // roots 1/2 -+ sqrt(1/4 - b^2); discriminants are clamped at zero.
    let std_radius = (2.0 * log_term / (n as f64 - 1.0)).sqrt();
    let s_hat = (p_hat * (1.0 - p_hat)).sqrt();

    let lower_edge = (s_hat - std_radius).max(0.0);
    let keep = if lower_edge > 0.0 {
        let spread = (0.25 - lower_edge * lower_edge).max(0.0).sqrt();
        Interval {
            lo: 0.5 - spread,
            hi: 0.5 + spread,
        }
    } else {
        Interval { lo: 0.0, hi: 1.0 }
    };
    let clipped = Interval {
        lo: band.lo.max(keep.lo),
        hi: band.hi.min(keep.hi),
    };

    let upper_edge = s_hat + std_radius;
    if upper_edge < 0.5 {
        let spread = (0.25 - upper_edge * upper_edge).max(0.0).sqrt();
        let pieces = remove_open_middle(clipped, 0.5 - spread, 0.5 + spread);
        if pieces.is_empty() {
            // p_hat satisfies every condition at distance zero, so the cut
            // can never swallow the whole interval.
            debug_assert!(false, "confidence set became empty");
            return vec![clipped];
        }
        pieces
    } else {
        vec![clipped]
    }
}

/// Subtracts the open interval `(cut_lo, cut_hi)` from a closed interval,
/// yielding the surviving closed pieces in order.
fn remove_open_middle(iv: Interval, cut_lo: f64, cut_hi: f64) -> Vec<Interval> {
    let mut out = Vec::with_capacity(2);
    if iv.lo <= cut_lo {
        out.push(Interval {
            lo: iv.lo,
            hi: iv.hi.min(cut_lo),
        });
    }
    if cut_hi <= iv.hi {
        out.push(Interval {
            lo: iv.lo.max(cut_hi),
            hi: iv.hi,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the defining inequalities, used as the oracle for
    /// the analytic interval construction.
    pub(crate) fn predicate(p_hat: f64, n: u64, delta1: f64, p: f64) -> bool {
        if !(0.0..=1.0).contains(&p) {
            return false;
        }
        if n == 0 {
            return true;
        }
        let log_term = (6.0 / delta1).ln();
        if (p - p_hat).abs() > absolute_radius(p_hat, n, log_term) {
            return false;
        }
        if n > 1 {
            let std_radius = (2.0 * log_term / (n as f64 - 1.0)).sqrt();
            let s = (p * (1.0 - p)).sqrt();
            let s_hat = (p_hat * (1.0 - p_hat)).sqrt();
            if (s - s_hat).abs() > std_radius {
                return false;
            }
        }
        true
    }

    fn structural_ok(set: &ProbabilitySet) {
        let ivs = set.intervals();
        assert!(!ivs.is_empty() && ivs.len() <= 2);
        for iv in ivs {
            assert!(iv.lo >= -1e-15 && iv.hi <= 1.0 + 1e-15 && iv.lo <= iv.hi);
        }
        if ivs.len() == 2 {
            assert!(ivs[0].hi < ivs[1].lo, "intervals must be disjoint and sorted");
        }
        let hull = set.hull();
        assert_eq!(hull.lo, ivs[0].lo);
        assert_eq!(hull.hi, ivs[ivs.len() - 1].hi);
    }

    #[test]
    fn no_data_gives_unit_interval() {
        let set = ProbabilitySet::new(0.0, 0, 0.1).unwrap();
        assert_eq!(set.intervals(), &[Interval { lo: 0.0, hi: 1.0 }]);
        assert_eq!(set.hull(), Interval { lo: 0.0, hi: 1.0 });
        assert!(set.contains(0.37));
    }

    #[test]
    fn grid_agreement_on_reference_parameters() {
        let set = ProbabilitySet::new(0.5, 100, 0.1).unwrap();
        structural_ok(&set);
        for i in 0..=2000u32 {
            let p = f64::from(i) / 2000.0;
            let expected = predicate(0.5, 100, 0.1, p);
            let got = set.contains(p);
            if expected != got {
                let near_edge = set
                    .intervals()
                    .iter()
                    .any(|iv| (p - iv.lo).abs() < 1e-9 || (p - iv.hi).abs() < 1e-9);
                assert!(near_edge, "mismatch away from boundary at p={}", p);
            }
        }
    }

    #[test]
    fn extreme_counts_pin_the_hull() {
        let delta1 = 0.05;
        let n = 1_000_000u64;
        let set = ProbabilitySet::new(0.0, n, delta1).unwrap();
        let hoeffding = ((6.0f64 / delta1).ln() / (2.0 * n as f64)).sqrt();
        let hull = set.hull();
        assert_eq!(hull.lo, 0.0);
        assert!(hull.hi <= hoeffding + 1e-15, "hi={} hoeff={}", hull.hi, hoeffding);

        let tight = ProbabilitySet::new(0.5, 1_000_000_000, 0.1).unwrap();
        assert!(tight.hull().width() <= 1e-3);
    }

    #[test]
    fn empirical_probability_is_always_a_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let n = *[1u64, 2, 3, 10, 100, 10_000].iter().nth(rng.random_range(0..6)).unwrap();
            let p_hat = (rng.random_range(0..=n) as f64) / n as f64;
            let delta1 = rng.random::<f64>().max(1e-6);
            let set = ProbabilitySet::new(p_hat, n, delta1).unwrap();
            structural_ok(&set);
            assert!(set.contains(p_hat), "p_hat={} n={} d={}", p_hat, n, delta1);
        }
    }

    #[test]
    fn membership_agrees_with_predicate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut checked = 0u32;
        while checked < 10_000 {
            let n = [0u64, 1, 2, 5, 20, 200, 5000][rng.random_range(0..7)];
            let p_hat = if n == 0 {
                0.0
            } else {
                (rng.random_range(0..=n) as f64) / n as f64
            };
            let delta1 = [0.5, 0.1, 0.01, 1e-4][rng.random_range(0..4)];
            let set = ProbabilitySet::new(p_hat, n, delta1).unwrap();
            let p: f64 = rng.random();
            let expected = predicate(p_hat, n, delta1, p);
            let got = set.contains(p);
            if expected != got {
                let near_edge = set
                    .intervals()
                    .iter()
                    .any(|iv| (p - iv.lo).abs() < 1e-9 || (p - iv.hi).abs() < 1e-9);
                assert!(near_edge, "p_hat={} n={} d={} p={}", p_hat, n, delta1, p);
            }
            checked += 1;
        }
    }

    #[test]
    fn hull_width_shrinks_with_more_data() {
        for &p_hat in &[0.0, 0.15, 0.5, 0.85, 1.0] {
            for &delta1 in &[0.3, 0.05, 0.001] {
                let mut prev = f64::INFINITY;
                let mut n = 2u64;
                while n <= 1 << 20 {
                    let width = ProbabilitySet::new(p_hat, n, delta1).unwrap().hull().width();
                    assert!(
                        width <= prev + 1e-15,
                        "width grew at n={} for p_hat={} delta1={}",
                        n,
                        p_hat,
                        delta1
                    );
                    prev = width;
                    n *= 2;
                }
            }
        }
    }

    #[test]
    fn middle_removal_splits_intervals() {
        let iv = Interval { lo: 0.1, hi: 0.9 };
        let parts = remove_open_middle(iv, 0.4, 0.6);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], Interval { lo: 0.1, hi: 0.4 });
        assert_eq!(parts[1], Interval { lo: 0.6, hi: 0.9 });

        // cut entirely below / above leaves one piece
        let right = remove_open_middle(Interval { lo: 0.7, hi: 0.9 }, 0.4, 0.6);
        assert_eq!(right, vec![Interval { lo: 0.7, hi: 0.9 }]);
        let left = remove_open_middle(Interval { lo: 0.1, hi: 0.3 }, 0.4, 0.6);
        assert_eq!(left, vec![Interval { lo: 0.1, hi: 0.3 }]);

        // cut clipping one side shortens the interval
        let clipped = remove_open_middle(Interval { lo: 0.5, hi: 0.9 }, 0.4, 0.6);
        assert_eq!(clipped, vec![Interval { lo: 0.6, hi: 0.9 }]);

        // cut swallowing everything leaves nothing
        assert!(remove_open_middle(Interval { lo: 0.45, hi: 0.55 }, 0.4, 0.6).is_empty());
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(ProbabilitySet::new(-0.1, 5, 0.1).is_err());
        assert!(ProbabilitySet::new(1.1, 5, 0.1).is_err());
        assert!(ProbabilitySet::new(0.5, 5, 0.0).is_err());
        assert!(ProbabilitySet::new(0.5, 5, 1.5).is_err());
    }

    #[test]
    fn coverage_of_true_probability() {
        // Binomial sampling without the coverage criterion's full grid; the
        // acceptance suite runs the complete sweep.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (p, n, delta1) = (0.3f64, 50u64, 0.1f64);
        let trials = 2000u32;
        let mut covered = 0u32;
        for _ in 0..trials {
            let k = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
            let set = ProbabilitySet::new(k as f64 / n as f64, n, delta1).unwrap();
            if set.contains(p) {
                covered += 1;
            }
        }
        let rate = f64::from(covered) / f64::from(trials);
        assert!(rate >= 1.0 - delta1, "coverage {}", rate);
    }

    proptest! {
        #[test]
        fn intervals_are_sorted_disjoint_and_contain_p_hat(
            num in 0u64..2000,
            den in 1u64..2000,
            delta_mill in 1u32..1000,
            n_exp in 0u32..16,
        ) {
            let n = if n_exp == 0 { 0 } else { 1u64 << n_exp };
            let p_hat = if n == 0 { 0.0 } else { (num.min(den) as f64) / den as f64 };
            let delta1 = f64::from(delta_mill) / 1000.0;
            let set = ProbabilitySet::new(p_hat, n, delta1).unwrap();
            let ivs = set.intervals();
            prop_assert!(!ivs.is_empty() && ivs.len() <= 2);
            for iv in ivs {
                prop_assert!(iv.lo >= 0.0 && iv.hi <= 1.0 && iv.lo <= iv.hi);
            }
            if ivs.len() == 2 {
                prop_assert!(ivs[0].hi < ivs[1].lo);
            }
            if n > 0 {
                prop_assert!(set.contains(p_hat));
            }
        }
    }
}
