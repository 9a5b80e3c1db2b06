//! Experiment orchestration: multi-seed runs, parameter sweeps over hard
//! instances, offline re-evaluation of stored artifacts, and persistent run
//! directories.
//!
//! Seeds and sweep cells execute concurrently. Every unit of work owns its
//! seeded RNG and output directory, so results are independent of the thread
//! count; `FHRL_THREADS` caps the parallelism.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{run_certainty_equivalence, run_random_baseline};
use crate::category::categorize_counts;
use crate::error::{Error, Result};
use crate::hard::{make_hard_mdp, HardInstanceSpec};
use crate::io;
use crate::mdp::{FixedHorizonMdp, NonstationaryPolicy};
use crate::record::{EpisodeRow, ExperimentRecord, PhaseRow, RunSummary};
use crate::ucfh::{self, UcfhConfig};

/// Which agent to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentSpec {
    Ucfh {
        failure_prob: f64,
        visit_target_override: Option<f64>,
    },
    Random,
    CertaintyEquivalence,
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::Ucfh { .. } => "ucfh",
            AgentSpec::Random => "random",
            AgentSpec::CertaintyEquivalence => "certainty_equivalence",
        }
    }
}

/// Where the environment comes from.
#[derive(Debug, Clone)]
pub enum MdpSource {
    File(PathBuf),
    HardInstance(HardInstanceSpec),
    Inline(FixedHorizonMdp),
}

/// How densely to persist episode rows. Exact per-policy evaluation always
/// happens at phase boundaries; this only controls JSONL volume. Rows with
/// update events and the final row are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalCadence {
    EveryPhase,
    EveryEpisodes(u64),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub agent: AgentSpec,
    /// The mistake threshold.
    pub accuracy: f64,
    pub episode_budget: u64,
    pub cadence: EvalCadence,
    pub seeds: Vec<u64>,
    /// When set, artifacts land in `<out_dir>/seed_<seed>/`.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".to_string()));
        }
        if !(self.accuracy > 0.0 && self.accuracy <= 1.0) {
            return Err(Error::Config(format!(
                "accuracy {} outside (0, 1]",
                self.accuracy
            )));
        }
        if let EvalCadence::EveryEpisodes(0) = self.cadence {
            return Err(Error::Config("episode cadence must be positive".to_string()));
        }
        if let AgentSpec::Ucfh { failure_prob, .. } = self.agent {
            if !(failure_prob > 0.0 && failure_prob <= 1.0) {
                return Err(Error::Config(format!(
                    "failure probability {} outside (0, 1]",
                    failure_prob
                )));
            }
        }
        Ok(())
    }
}

/// One seed's result.
#[derive(Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub record: ExperimentRecord,
}

/// Materializes the environment, plus the hidden hypothesis spec when the
/// source is a hard instance.
pub fn resolve_mdp(source: &MdpSource) -> Result<(FixedHorizonMdp, Option<HardInstanceSpec>)> {
    match source {
        MdpSource::File(path) => Ok((io::load_mdp(path)?, None)),
        MdpSource::HardInstance(spec) => Ok((make_hard_mdp(spec)?, Some(spec.clone()))),
        MdpSource::Inline(mdp) => Ok((mdp.clone(), None)),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("FHRL_THREADS") {
        let threads: usize = raw.parse().map_err(|_| {
            Error::Config(format!("FHRL_THREADS must be a positive integer, got {:?}", raw))
        })?;
        builder = builder.num_threads(threads.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {}", e)))
}

fn run_agent(
    mdp: &FixedHorizonMdp,
    agent: &AgentSpec,
    accuracy: f64,
    episode_budget: u64,
    seed: u64,
) -> Result<ExperimentRecord> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    match agent {
        AgentSpec::Ucfh {
            failure_prob,
            visit_target_override,
        } => ucfh::run(
            mdp,
            &UcfhConfig {
                accuracy,
                failure_prob: *failure_prob,
                visit_target_override: *visit_target_override,
                episode_budget,
            },
            seed,
            &mut rng,
        ),
        AgentSpec::Random => run_random_baseline(mdp, accuracy, episode_budget, seed, &mut rng),
        AgentSpec::CertaintyEquivalence => {
            run_certainty_equivalence(mdp, accuracy, episode_budget, seed, &mut rng)
        }
    }
}

/// Rows to persist under a cadence: every k-th episode plus every row that
/// carries an update event, plus the final row.
pub fn subsample_rows(rows: &[EpisodeRow], cadence: EvalCadence) -> Vec<EpisodeRow> {
    match cadence {
        EvalCadence::EveryPhase => rows.to_vec(),
        EvalCadence::EveryEpisodes(k) => rows
            .iter()
            .enumerate()
            .filter(|(i, row)| {
                (*i as u64) % k == 0 || row.update.is_some() || *i + 1 == rows.len()
            })
            .map(|(_, row)| row.clone())
            .collect(),
    }
}

/// Runs every seed of the configuration, in parallel, writing artifacts when
/// an output directory is configured. Outcomes come back in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    let (mdp, hard_spec) = resolve_mdp(&config.mdp)?;
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        io::save_mdp(&dir.join("mdp.json"), &mdp)?;
        if let Some(spec) = &hard_spec {
            io::save_sidecar(&dir.join("hypothesis.json"), spec)?;
        }
    }
    let pool = thread_pool()?;
    let outcomes: Result<Vec<SeedOutcome>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let record =
                    run_agent(&mdp, &config.agent, config.accuracy, config.episode_budget, seed)?;
                if let Some(dir) = &config.out_dir {
                    let rows = subsample_rows(&record.rows, config.cadence);
                    io::write_run(&dir.join(format!("seed_{}", seed)), &record, &rows)?;
                }
                Ok(SeedOutcome { seed, record })
            })
            .collect()
    });
    outcomes
}

/// Which hard-instance parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Horizon,
    EpsPrime,
}

impl SweepParam {
    pub fn label(&self) -> &'static str {
        match self {
            SweepParam::Horizon => "horizon",
            SweepParam::EpsPrime => "eps_prime",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Base instance; the swept field is overwritten per cell, the hidden
    /// hypotheses stay fixed so cells are comparable.
    pub base: HardInstanceSpec,
    pub agent: AgentSpec,
    pub accuracy: f64,
    pub episode_budget: u64,
    pub cadence: EvalCadence,
    pub seeds: Vec<u64>,
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// For horizon sweeps with an explicit visit target: scale the target by
    /// `(horizon / base_horizon)^2`.
    pub scale_visit_target_quadratically: bool,
    pub out_dir: Option<PathBuf>,
}

/// Per-seed figures inside one sweep cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSeedSummary {
    pub seed: u64,
    pub episodes: u64,
    pub total_mistakes: u64,
    pub final_gap: f64,
    /// First episode after which the policy stayed within the accuracy for
    /// the rest of the run.
    pub episodes_to_sustained: Option<u64>,
}

/// One sweep cell: a parameter value crossed with every seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub param: String,
    pub value: f64,
    pub horizon: usize,
    pub eps_prime: f64,
    pub visit_target_override: Option<f64>,
    pub per_seed: Vec<CellSeedSummary>,
    /// Median over seeds; runs that never sustain count as budget + 1.
    pub median_episodes_to_sustained: u64,
    pub all_seeds_sustained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub accuracy: f64,
    pub episode_budget: u64,
    pub cells: Vec<CellSummary>,
}

impl SweepReport {
    /// Fixed-width text table for terminal output.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>10} {:>8} {:>10} {:>12} {:>22} {:>10}\n",
            self.param, "horizon", "eps_prime", "m_override", "median_ep_to_sustain", "sustained"
        ));
        for cell in &self.cells {
            out.push_str(&format!(
                "{:>10} {:>8} {:>10} {:>12} {:>22} {:>10}\n",
                cell.value,
                cell.horizon,
                cell.eps_prime,
                cell.visit_target_override
                    .map_or("-".to_string(), |m| format!("{:.0}", m)),
                cell.median_episodes_to_sustained,
                if cell.all_seeds_sustained { "all" } else { "some" }
            ));
        }
        out
    }

    /// CSV rendering, one line per (cell, seed).
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "param,value,horizon,eps_prime,seed,episodes,total_mistakes,final_gap,episodes_to_sustained\n",
        );
        for cell in &self.cells {
            for seed in &cell.per_seed {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    self.param,
                    cell.value,
                    cell.horizon,
                    cell.eps_prime,
                    seed.seed,
                    seed.episodes,
                    seed.total_mistakes,
                    seed.final_gap,
                    seed.episodes_to_sustained
                        .map_or(String::from("-"), |e| e.to_string()),
                ));
            }
        }
        out
    }
}

fn cell_spec(config: &SweepConfig, value: f64) -> Result<(HardInstanceSpec, AgentSpec)> {
    let mut spec = config.base.clone();
    match config.param {
        SweepParam::Horizon => {
            if value < 3.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!(
                    "horizon sweep values must be integers >= 3, got {}",
                    value
                )));
            }
            spec.horizon = value as usize;
        }
        SweepParam::EpsPrime => {
            spec.eps_prime = value;
        }
    }
    let mut agent = config.agent.clone();
    if config.scale_visit_target_quadratically {
        if let (
            SweepParam::Horizon,
            AgentSpec::Ucfh {
                visit_target_override: Some(base_target),
                failure_prob,
            },
        ) = (config.param, &agent)
        {
            let scale = (spec.horizon as f64 / config.base.horizon as f64).powi(2);
            agent = AgentSpec::Ucfh {
                failure_prob: *failure_prob,
                visit_target_override: Some((base_target * scale).max(1.0)),
            };
        }
    }
    Ok((spec, agent))
}

/// Runs the full cross product of sweep values and seeds. Each cell is
/// reproducible in isolation: rerunning it with the same seed regenerates
/// its artifacts bit for bit.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    if config.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".to_string()));
    }
    if config.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".to_string()));
    }
    let mut units = Vec::new();
    for &value in &config.values {
        let (spec, agent) = cell_spec(config, value)?;
        // validate the instance eagerly so errors surface before spawning
        let mdp = make_hard_mdp(&spec)?;
        if let Some(dir) = &config.out_dir {
            let cell_dir = dir.join(format!("cell_{}_{}", config.param.label(), value));
            std::fs::create_dir_all(&cell_dir)?;
            io::save_mdp(&cell_dir.join("mdp.json"), &mdp)?;
            io::save_sidecar(&cell_dir.join("hypothesis.json"), &spec)?;
        }
        for &seed in &config.seeds {
            units.push((value, spec.clone(), agent.clone(), seed));
        }
    }

    let pool = thread_pool()?;
    let results: Result<Vec<(f64, u64, HardInstanceSpec, AgentSpec, ExperimentRecord)>> =
        pool.install(|| {
            units
                .par_iter()
                .map(|(value, spec, agent, seed)| {
                    let mdp = make_hard_mdp(spec)?;
                    let record =
                        run_agent(&mdp, agent, config.accuracy, config.episode_budget, *seed)?;
                    if let Some(dir) = &config.out_dir {
                        let run_dir = dir
                            .join(format!("cell_{}_{}", config.param.label(), value))
                            .join(format!("seed_{}", seed));
                        let rows = subsample_rows(&record.rows, config.cadence);
                        io::write_run(&run_dir, &record, &rows)?;
                    }
                    Ok((*value, *seed, spec.clone(), agent.clone(), record))
                })
                .collect()
        });
    let results = results?;

    let mut cells = Vec::new();
    for &value in &config.values {
        let mut per_seed = Vec::new();
        let mut cell_horizon = config.base.horizon;
        let mut cell_eps = config.base.eps_prime;
        let mut cell_target = None;
        for (cell_value, seed, spec, agent, record) in &results {
            if cell_value != &value {
                continue;
            }
            cell_horizon = spec.horizon;
            cell_eps = spec.eps_prime;
            if let AgentSpec::Ucfh {
                visit_target_override,
                ..
            } = agent
            {
                cell_target = *visit_target_override;
            }
            per_seed.push(CellSeedSummary {
                seed: *seed,
                episodes: record.summary.episodes,
                total_mistakes: record.summary.total_mistakes,
                final_gap: record.summary.final_gap,
                episodes_to_sustained: record.episodes_to_sustained_accuracy(config.accuracy),
            });
        }
        let mut sustained: Vec<u64> = per_seed
            .iter()
            .map(|s| s.episodes_to_sustained.unwrap_or(config.episode_budget + 1))
            .collect();
        sustained.sort_unstable();
        let median = sustained[sustained.len() / 2];
        let all = per_seed.iter().all(|s| s.episodes_to_sustained.is_some());
        cells.push(CellSummary {
            param: config.param.label().to_string(),
            value,
            horizon: cell_horizon,
            eps_prime: cell_eps,
            visit_target_override: cell_target,
            per_seed,
            median_episodes_to_sustained: median,
            all_seeds_sustained: all,
        });
    }
    let report = SweepReport {
        param: config.param.label().to_string(),
        accuracy: config.accuracy,
        episode_budget: config.episode_budget,
        cells,
    };
    if let Some(dir) = &config.out_dir {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(dir.join("sweep_summary.json"), text)?;
        std::fs::write(dir.join("sweep_summary.csv"), report.csv())?;
    }
    Ok(report)
}

/// Consistency report for stored run artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub episodes: u64,
    pub rows_stored: u64,
    pub summary_mistakes: u64,
    /// Recount from episode rows when complete, otherwise from phase spans.
    pub recounted_mistakes: u64,
    pub recount_source: String,
    /// Largest absolute difference between stored phase gaps and gaps
    /// recomputed from the stored policies by exact evaluation.
    pub max_gap_error: f64,
    /// Rows whose mistake flag disagrees with the recomputed gap.
    pub mistake_flag_errors: u64,
    /// Per-phase balance flags of the knownness/importance categorization,
    /// present when the run carried planner constants.
    pub balanced_phases: Option<Vec<bool>>,
    pub consistent: bool,
}

/// Recomputes gaps, mistakes, and categorizations from a run directory's
/// artifacts and cross-checks them against the stored summary.
pub fn evaluate_run(
    mdp: &FixedHorizonMdp,
    rows: &[EpisodeRow],
    phases: &[PhaseRow],
    summary: &RunSummary,
) -> Result<EvaluationReport> {
    let (optimal_table, _) = mdp.optimal_values();
    let optimal_return = mdp.start_value(&optimal_table);

    let mut max_gap_error = 0.0f64;
    let mut phase_gap: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    let mut balanced = Vec::new();
    for phase in phases {
        let policy = NonstationaryPolicy::new(phase.policy.clone());
        let value = mdp.total_return(&policy)?;
        let gap = optimal_return - value;
        max_gap_error = max_gap_error.max((gap - phase.gap).abs());
        phase_gap.insert(phase.phase, gap);
        if let (Some(counts), Some(constants)) = (&phase.committed_counts, &summary.constants) {
            let table = categorize_counts(mdp, &policy, counts, constants)?;
            balanced.push(table.balanced());
        }
    }

    let mut mistake_flag_errors = 0u64;
    for row in rows {
        if let Some(&gap) = phase_gap.get(&row.phase) {
            let expected = gap > summary.accuracy;
            if expected != row.mistake || (gap - row.gap).abs() > 1e-9 {
                mistake_flag_errors += 1;
            }
        } else {
            mistake_flag_errors += 1;
        }
    }

    let rows_complete = rows.len() as u64 == summary.episodes;
    let (recounted, source) = if rows_complete {
        (crate::record::count_mistakes(rows, summary.accuracy), "episode_rows")
    } else {
        let from_phases: u64 = phases
            .iter()
            .filter(|phase| phase_gap[&phase.phase] > summary.accuracy)
            .map(|phase| phase.episodes)
            .sum();
        (from_phases, "phase_spans")
    };

    let consistent = recounted == summary.total_mistakes
        && mistake_flag_errors == 0
        && max_gap_error <= 1e-9;
    Ok(EvaluationReport {
        episodes: summary.episodes,
        rows_stored: rows.len() as u64,
        summary_mistakes: summary.total_mistakes,
        recounted_mistakes: recounted,
        recount_source: source.to_string(),
        max_gap_error,
        mistake_flag_errors,
        balanced_phases: if balanced.is_empty() { None } else { Some(balanced) },
        consistent,
    })
}

/// Loads a run directory (as written by `run_experiment`) and evaluates it.
pub fn evaluate_run_dir(dir: &Path, mdp_path: Option<&Path>) -> Result<EvaluationReport> {
    let mdp_file = match mdp_path {
        Some(path) => path.to_path_buf(),
        None => {
            // run dirs sit one level under the experiment dir holding mdp.json
            let sibling = dir.join("../mdp.json");
            if sibling.exists() {
                sibling
            } else {
                dir.join("mdp.json")
            }
        }
    };
    let mdp = io::load_mdp(&mdp_file)?;
    let rows = io::read_episode_rows(&dir.join(io::EPISODES_FILE))?;
    let phases = io::read_phase_rows(&dir.join(io::PHASES_FILE))?;
    let summary = io::read_summary(&dir.join(io::SUMMARY_FILE))?;
    evaluate_run(&mdp, &rows, &phases, &summary)
}
