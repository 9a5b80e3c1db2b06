//! `fhrl` — generate instances, run agents, evaluate artifacts, sweep
//! parameters.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fhrl_core::error::Error;
use fhrl_core::experiment::{
    evaluate_run_dir, run_experiment, run_sweep, AgentSpec, EvalCadence, ExperimentConfig,
    MdpSource, SweepConfig, SweepParam,
};
use fhrl_core::hard::{make_hard_mdp, sample_hypothesis, HardInstanceSpec};
use fhrl_core::{io, mdp::random_mdp};

#[derive(Parser)]
#[command(
    name = "fhrl",
    version,
    about = "Episodic fixed-horizon reinforcement learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an environment file (plus a hypothesis sidecar for hard instances).
    #[command(subcommand)]
    Generate(GenerateKind),
    /// Run an agent over one or more seeds and record the results.
    Run(RunArgs),
    /// Recompute gaps, mistakes, and categorizations from stored artifacts.
    Evaluate(EvaluateArgs),
    /// Cross-product experiment over horizon or bias values of hard instances.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Parallel-bandit hard instance with hidden optimal arms.
    Hard(HardArgs),
    /// Uniformly random dense instance.
    Random(RandomArgs),
}

#[derive(Args)]
struct HardArgs {
    /// Number of bandit states.
    #[arg(long)]
    bandits: usize,
    /// Number of actions (at least 2).
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    horizon: usize,
    /// Bias of the hidden optimal arm, in (0, 1/4].
    #[arg(long = "eps-prime")]
    eps_prime: f64,
    /// Explicit hypotheses (one per bandit); mutually exclusive with --seed.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    hypotheses: Option<Vec<usize>>,
    /// Sample the hypotheses with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Allow hypothesis 0 (no hidden arm) when sampling.
    #[arg(long)]
    include_zero: bool,
    /// Output directory; receives mdp.json and hypothesis.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RandomArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long)]
    horizon: usize,
    /// Cap on successor-set sizes (defaults to the state count).
    #[arg(long = "max-successors")]
    max_successors: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Output directory; receives mdp.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Environment file.
    #[arg(long)]
    mdp: PathBuf,
    /// ucfh | random | certainty_equivalence (alias: ce).
    #[arg(long, default_value = "ucfh")]
    agent: String,
    /// Accuracy: an episode counts as a mistake when the executed policy's
    /// exact value falls more than this below optimal.
    #[arg(long)]
    eps: f64,
    /// Failure-probability budget of the learner.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Replaces the theoretical per-weight visit target, which is
    /// astronomically large outside toy scales.
    #[arg(long = "m-override")]
    m_override: Option<f64>,
    /// Episode budget per seed.
    #[arg(long)]
    budget: u64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Output directory; per-seed artifacts land in seed_<n>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Persist every k-th episode row instead of all of them (update rows
    /// and the final row are always kept; summaries stay exact).
    #[arg(long = "eval-every")]
    eval_every: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// A run directory holding episodes.jsonl, phases.jsonl, summary.json.
    #[arg(long)]
    run: PathBuf,
    /// Environment file; defaults to the mdp.json next to the run directory.
    #[arg(long)]
    mdp: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    bandits: usize,
    #[arg(long)]
    actions: usize,
    /// Base horizon (replaced per cell when sweeping the horizon).
    #[arg(long)]
    horizon: usize,
    #[arg(long = "eps-prime")]
    eps_prime: f64,
    #[arg(long, value_delimiter = ',', conflicts_with = "hypothesis_seed")]
    hypotheses: Option<Vec<usize>>,
    #[arg(long = "hypothesis-seed")]
    hypothesis_seed: Option<u64>,
    #[arg(long, default_value = "ucfh")]
    agent: String,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long = "m-override")]
    m_override: Option<f64>,
    #[arg(long)]
    budget: u64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// horizon | eps-prime.
    #[arg(long = "sweep-param")]
    sweep_param: String,
    #[arg(long = "sweep-values", value_delimiter = ',')]
    sweep_values: Vec<f64>,
    /// Scale --m-override by (horizon / base horizon)^2 across cells.
    #[arg(long = "scale-m-h2")]
    scale_m_h2: bool,
    #[arg(long = "eval-every")]
    eval_every: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            match err {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(GenerateKind::Hard(args)) => generate_hard(args),
        Command::Generate(GenerateKind::Random(args)) => generate_random(args),
        Command::Run(args) => run_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
    }
}

fn parse_agent(name: &str, delta: f64, m_override: Option<f64>) -> Result<AgentSpec, Error> {
    match name {
        "ucfh" => Ok(AgentSpec::Ucfh {
            failure_prob: delta,
            visit_target_override: m_override,
        }),
        "random" => Ok(AgentSpec::Random),
        "certainty_equivalence" | "ce" => Ok(AgentSpec::CertaintyEquivalence),
        other => Err(Error::Config(format!(
            "unknown agent {:?}; expected ucfh, random, or certainty_equivalence",
            other
        ))),
    }
}

fn cadence_of(eval_every: Option<u64>) -> EvalCadence {
    match eval_every {
        Some(k) => EvalCadence::EveryEpisodes(k),
        None => EvalCadence::EveryPhase,
    }
}

fn hard_spec_from(
    bandits: usize,
    actions: usize,
    horizon: usize,
    eps_prime: f64,
    hypotheses: Option<Vec<usize>>,
    seed: Option<u64>,
    include_zero: bool,
) -> Result<HardInstanceSpec, Error> {
    let hypotheses = match (hypotheses, seed) {
        (Some(list), _) => list,
        (None, Some(seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_hypothesis(bandits, actions, include_zero, &mut rng)?
        }
        (None, None) => {
            return Err(Error::Config(
                "provide either --hypotheses or --seed to fix the hidden arms".to_string(),
            ))
        }
    };
    Ok(HardInstanceSpec {
        num_bandits: bandits,
        num_actions: actions,
        eps_prime,
        horizon,
        hypotheses,
    })
}

fn generate_hard(args: HardArgs) -> Result<(), Error> {
    let spec = hard_spec_from(
        args.bandits,
        args.actions,
        args.horizon,
        args.eps_prime,
        args.hypotheses,
        args.seed,
        args.include_zero,
    )?;
    let mdp = make_hard_mdp(&spec)?;
    std::fs::create_dir_all(&args.out)?;
    let mdp_path = args.out.join("mdp.json");
    let sidecar_path = args.out.join("hypothesis.json");
    io::save_mdp(&mdp_path, &mdp)?;
    io::save_sidecar(&sidecar_path, &spec)?;
    println!("wrote {}", mdp_path.display());
    println!(
        "wrote {} (hidden hypotheses; do not feed to agents)",
        sidecar_path.display()
    );
    Ok(())
}

fn generate_random(args: RandomArgs) -> Result<(), Error> {
    if args.states == 0 || args.actions == 0 || args.horizon == 0 {
        return Err(Error::Config(
            "states, actions, and horizon must be positive".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cap = args.max_successors.unwrap_or(args.states);
    let mdp = random_mdp(args.states, args.actions, args.horizon, cap, &mut rng).with_name(
        format!(
            "random-s{}-a{}-h{}-seed{}",
            args.states, args.actions, args.horizon, args.seed
        ),
    );
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("mdp.json");
    io::save_mdp(&path, &mdp)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), Error> {
    let config = ExperimentConfig {
        mdp: MdpSource::File(args.mdp),
        agent: parse_agent(&args.agent, args.delta, args.m_override)?,
        accuracy: args.eps,
        episode_budget: args.budget,
        cadence: cadence_of(args.eval_every),
        seeds: args.seeds,
        out_dir: args.out.clone(),
    };
    let outcomes = run_experiment(&config)?;
    for outcome in &outcomes {
        let summary = &outcome.record.summary;
        println!(
            "seed {}: episodes={} phases={} mistakes={} updates={} final_gap={:.6}",
            outcome.seed,
            summary.episodes,
            summary.phases,
            summary.total_mistakes,
            summary.total_updates,
            summary.final_gap
        );
    }
    if let Some(dir) = &args.out {
        println!("artifacts under {}", dir.display());
    }
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<(), Error> {
    let report = evaluate_run_dir(&args.run, args.mdp.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.consistent {
        Ok(())
    } else {
        Err(Error::Config(
            "stored artifacts are inconsistent with exact recomputation".to_string(),
        ))
    }
}

fn sweep_cmd(args: SweepArgs) -> Result<(), Error> {
    let param = match args.sweep_param.as_str() {
        "horizon" | "h" => SweepParam::Horizon,
        "eps-prime" | "eps_prime" => SweepParam::EpsPrime,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {:?}; expected horizon or eps-prime",
                other
            )))
        }
    };
    let base = hard_spec_from(
        args.bandits,
        args.actions,
        args.horizon,
        args.eps_prime,
        args.hypotheses,
        args.hypothesis_seed,
        false,
    )?;
    let config = SweepConfig {
        base,
        agent: parse_agent(&args.agent, args.delta, args.m_override)?,
        accuracy: args.eps,
        episode_budget: args.budget,
        cadence: cadence_of(args.eval_every),
        seeds: args.seeds,
        param,
        values: args.sweep_values,
        scale_visit_target_quadratically: args.scale_m_h2,
        out_dir: args.out.clone(),
    };
    let report = run_sweep(&config)?;
    print!("{}", report.table());
    if let Some(dir) = &args.out {
        println!("sweep artifacts under {}", dir.display());
    }
    Ok(())
}
