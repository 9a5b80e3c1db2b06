//! Episodic fixed-horizon reinforcement learning toolkit.
//!
//! The crate provides:
//!
//! * [`mdp`] — tabular fixed-horizon MDPs with exact backward-induction
//!   evaluation, optimal planning, seeded episode sampling, occupancy
//!   weights, and return-variance computations;
//! * [`confidence`] — per-transition confidence sets combining Hoeffding,
//!   Bernstein, and empirical-standard-deviation conditions;
//! * [`evi`] — fixed-horizon extended value iteration over the convex hulls
//!   of those sets, with the greedy probability-mass redistribution backup;
//! * [`ucfh`] — the upper-confidence fixed-horizon learning loop: derived
//!   constants, phases, the visit-count update trigger, and full runs;
//! * [`hard`] — a generator for hard-to-learn instances built from parallel
//!   two-outcome bandits with hidden optimal arms;
//! * [`harness`] utilities — baselines ([`baseline`]), knownness/importance
//!   diagnostics ([`category`]), experiment orchestration and sweeps
//!   ([`experiment`]), records ([`record`]), and file formats ([`io`]).

pub mod baseline;
pub mod category;
pub mod confidence;
pub mod error;
pub mod evi;
pub mod experiment;
pub mod hard;
pub mod io;
pub mod mdp;
pub mod record;
pub mod stats;
pub mod ucfh;

pub use confidence::{Interval, ProbabilitySet};
pub use error::{Error, Result};
pub use evi::{fixed_horizon_evi, greedy_redistribute, HullTable, OptimisticPlan};
pub use hard::{make_hard_mdp, policy_bandit_accuracy, sample_hypothesis, HardInstanceSpec};
pub use mdp::{random_mdp, FixedHorizonMdp, NonstationaryPolicy, Trajectory, ValueTable};
pub use record::{count_mistakes, EpisodeRow, ExperimentRecord, PhaseRow, RunSummary};
pub use stats::ModelStats;
pub use ucfh::{derive_constants, UcfhConfig, UcfhConstants};
