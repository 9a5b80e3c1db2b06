//! On-disk formats: model files, hypothesis sidecars, episode JSONL, phase
//! JSONL, and run summaries. See `docs/formats.md` for the schemas.
//!
//! Models are written in the sparse successor-list form, which preserves
//! declared-but-currently-impossible successors across round trips. The
//! loader accepts a dense probability cube as well.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard::HardInstanceSpec;
use crate::mdp::FixedHorizonMdp;
use crate::record::{EpisodeRow, ExperimentRecord, PhaseRow, RunSummary};

/// Serialized model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// `rewards[t][s]`.
    pub rewards: Vec<Vec<f64>>,
    pub transitions: TransitionsField,
    pub start_dist: Vec<f64>,
}

/// Either a dense `[s][a][s']` probability cube or a sparse successor list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransitionsField {
    Dense(Vec<Vec<Vec<f64>>>),
    Sparse(Vec<SparseRow>),
}

/// One `(s, a)` row in sparse form; entries with zero probability declare a
/// successor without giving it mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseRow {
    pub s: usize,
    pub a: usize,
    pub successors: Vec<SparseEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseEntry {
    #[serde(rename = "s")]
    pub next: usize,
    pub p: f64,
}

impl MdpFile {
    pub fn from_mdp(mdp: &FixedHorizonMdp) -> Self {
        let sparse = (0..mdp.num_states())
            .flat_map(|s| {
                (0..mdp.num_actions()).map(move |a| (s, a))
            })
            .map(|(s, a)| SparseRow {
                s,
                a,
                successors: mdp
                    .successors(s, a)
                    .iter()
                    .map(|&next| SparseEntry {
                        next,
                        p: mdp.transition(s, a, next),
                    })
                    .collect(),
            })
            .collect();
        Self {
            name: mdp.name().map(str::to_string),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            horizon: mdp.horizon(),
            rewards: (0..mdp.horizon())
                .map(|t| (0..mdp.num_states()).map(|s| mdp.reward(t, s)).collect())
                .collect(),
            transitions: TransitionsField::Sparse(sparse),
            start_dist: mdp.start_dist().to_vec(),
        }
    }

    /// Validates and builds the in-memory model. Structural problems are
    /// collected into a single line-item report.
    pub fn into_mdp(self) -> Result<FixedHorizonMdp> {
        let mdp = match self.transitions {
            TransitionsField::Dense(transitions) => FixedHorizonMdp::from_dense(
                self.num_states,
                self.num_actions,
                self.horizon,
                self.rewards,
                transitions,
                self.start_dist,
            )?,
            TransitionsField::Sparse(rows) => {
                let mut problems = Vec::new();
                let mut transitions =
                    vec![vec![vec![0.0; self.num_states]; self.num_actions]; self.num_states];
                let mut successor_sets =
                    vec![vec![Vec::new(); self.num_actions]; self.num_states];
                let mut seen = vec![vec![false; self.num_actions]; self.num_states];
                for row in rows {
                    if row.s >= self.num_states || row.a >= self.num_actions {
                        problems.push(format!(
                            "sparse row ({}, {}) is outside the state-action space",
                            row.s, row.a
                        ));
                        continue;
                    }
                    if seen[row.s][row.a] {
                        problems.push(format!("duplicate sparse row ({}, {})", row.s, row.a));
                        continue;
                    }
                    seen[row.s][row.a] = true;
                    for entry in &row.successors {
                        if entry.next >= self.num_states {
                            problems.push(format!(
                                "successor {} of ({}, {}) is outside the state space",
                                entry.next, row.s, row.a
                            ));
                            continue;
                        }
                        transitions[row.s][row.a][entry.next] = entry.p;
                        successor_sets[row.s][row.a].push(entry.next);
                    }
                }
                for s in 0..self.num_states {
                    for a in 0..self.num_actions {
                        if !seen[s][a] {
                            problems.push(format!("missing sparse row for ({}, {})", s, a));
                        }
                    }
                }
                if !problems.is_empty() {
                    return Err(Error::InvalidMdp(problems));
                }
                FixedHorizonMdp::with_declared_successors(
                    self.num_states,
                    self.num_actions,
                    self.horizon,
                    self.rewards,
                    transitions,
                    self.start_dist,
                    successor_sets,
                )?
            }
        };
        Ok(match self.name {
            Some(name) => mdp.with_name(name),
            None => mdp,
        })
    }
}

pub fn save_mdp(path: &Path, mdp: &FixedHorizonMdp) -> Result<()> {
    let file = MdpFile::from_mdp(mdp);
    let mut out = serde_json::to_string_pretty(&file)?;
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<FixedHorizonMdp> {
    let text = fs::read_to_string(path)?;
    let file: MdpFile = serde_json::from_str(&text)?;
    file.into_mdp()
}

/// Sidecar revealing a hard instance's hidden hypotheses. For evaluation
/// only; never fed to agents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisSidecar {
    pub num_bandits: usize,
    pub num_actions: usize,
    pub eps_prime: f64,
    pub horizon: usize,
    pub hypotheses: Vec<usize>,
    /// The optimal action at each bandit state, for convenience.
    pub optimal_actions: Vec<usize>,
}

impl HypothesisSidecar {
    pub fn from_spec(spec: &HardInstanceSpec) -> Self {
        Self {
            num_bandits: spec.num_bandits,
            num_actions: spec.num_actions,
            eps_prime: spec.eps_prime,
            horizon: spec.horizon,
            hypotheses: spec.hypotheses.clone(),
            optimal_actions: (0..spec.num_bandits).map(|i| spec.optimal_action(i)).collect(),
        }
    }

    pub fn into_spec(self) -> HardInstanceSpec {
        HardInstanceSpec {
            num_bandits: self.num_bandits,
            num_actions: self.num_actions,
            eps_prime: self.eps_prime,
            horizon: self.horizon,
            hypotheses: self.hypotheses,
        }
    }
}

pub fn save_sidecar(path: &Path, spec: &HardInstanceSpec) -> Result<()> {
    let mut out = serde_json::to_string_pretty(&HypothesisSidecar::from_spec(spec))?;
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<HardInstanceSpec> {
    let text = fs::read_to_string(path)?;
    let sidecar: HypothesisSidecar = serde_json::from_str(&text)?;
    Ok(sidecar.into_spec())
}

/// File names of one run's artifacts inside its directory.
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const PHASES_FILE: &str = "phases.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes a run's artifacts into `dir`, creating it if needed. Episode rows
/// may be subsampled by the caller; phases and the summary are always
/// complete.
pub fn write_run(dir: &Path, record: &ExperimentRecord, episode_rows: &[EpisodeRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(EPISODES_FILE), episode_rows)?;
    write_jsonl(&dir.join(PHASES_FILE), &record.phases)?;
    let mut out = serde_json::to_string_pretty(&record.summary)?;
    out.push('\n');
    fs::write(dir.join(SUMMARY_FILE), out)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_episode_rows(path: &Path) -> Result<Vec<EpisodeRow>> {
    read_jsonl(path)
}

pub fn read_phase_rows(path: &Path) -> Result<Vec<PhaseRow>> {
    read_jsonl(path)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line)?);
    }
    Ok(rows)
}
