//! `wta`: simulation, training and evaluation harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wta_core::engagement::{save_trace, EngagementOptions};
use wta_core::eval::{
    compare, compare_csv, evaluate, oracle_check, scale_csv, scale_row, Decider, EvalOptions, Policy, ReportRow, Summary,
    SCALE_PRESETS,
};
use wta_core::net::NetArch;
use wta_core::ppo::{self, TrainConfig};
use wta_core::rng::{episode_seed, stream, Purpose};
use wta_core::scenario::{make_case, sample_episode, ScenarioConfig};
use wta_core::{plot, Error, PolicyValueNet};

const DEFAULT_EPISODES: u64 = 5000;
const FULL_EPISODES: u64 = 30000;
const COMPARE_CASES: [&str; 6] = ["Nominal", "Threat Model 1", "Threat Model 2", "Sensor Noise", "Threat Targeting", "25km Range"];

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_MISSING_WEIGHTS: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser)]
#[command(name = "wta", version, about = "Weapon-target assignment for multi-vehicle strike: simulate, train, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML); overrides --case.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in case name, e.g. "Nominal" or "threat-model-1".
    #[arg(long, default_value = "Nominal")]
    case: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "heuristic")]
    policy: PolicyName,
    /// Policy weights for `--policy rl`.
    #[arg(long, default_value = "weights/nominal-20x12.bin")]
    weights: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyName {
    Rl,
    Bnb,
    Greedy,
    Heuristic,
    Fallback,
    Random,
}

impl From<PolicyName> for Policy {
    fn from(p: PolicyName) -> Self {
        match p {
            PolicyName::Rl => Policy::Rl,
            PolicyName::Bnb => Policy::Bnb,
            PolicyName::Greedy => Policy::Greedy,
            PolicyName::Heuristic => Policy::Heuristic,
            PolicyName::Fallback => Policy::Fallback,
            PolicyName::Random => Policy::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    LearningCurve,
    Engagement,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trajectory trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Episode index under the root seed.
        #[arg(long, default_value_t = 0)]
        episode: u64,
        /// Disable the threat process.
        #[arg(long)]
        no_threats: bool,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// Train the policy with PPO.
    Train {
        /// Training configuration (TOML); defaults to the nominal 20x12 setup.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the small 8x5 configuration.
        #[arg(long)]
        smoke: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Train one run per seed and keep the best on held-out episodes.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Episodes per rollout.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        policy_lr: Option<f64>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Evaluate one policy on one case.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        episodes: Option<u64>,
        /// 30000 episodes.
        #[arg(long)]
        full: bool,
        /// Leave latency columns empty so reports are reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare policies across cases with common random numbers.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Cases to run (default: the six comparison cases).
        #[arg(long = "cases", value_delimiter = ',')]
        cases: Vec<String>,
        #[arg(long = "policies", value_enum, value_delimiter = ',', default_value = "bnb,rl,heuristic")]
        policies: Vec<PolicyName>,
        #[arg(long, default_value = "weights/nominal-20x12.bin")]
        weights: PathBuf,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        full: bool,
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scalability presets: value and latency of rl and heuristic.
    Scale {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, default_value_t = 200)]
        episodes: u64,
        /// Directory holding `nominal-<m>x<n>.bin` weights per preset.
        #[arg(long, default_value = "weights")]
        weights_dir: PathBuf,
        /// Use freshly initialized networks where trained weights are absent
        /// (latency only; values are not meaningful).
        #[arg(long)]
        init_missing: bool,
        /// Presets to run, e.g. `20x12,40x24`.
        #[arg(long, value_delimiter = ',')]
        presets: Vec<String>,
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a learning curve or an engagement trace as SVG.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check branch and bound and greedy search against enumeration.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in case as TOML.
    Config {
        #[arg(long, default_value = "Nominal")]
        case: String,
    },
}

fn scenario(common: &Common) -> Result<ScenarioConfig> {
    let cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path).with_context(|| format!("reading scenario {}", path.display()))?,
        None => make_case(&common.case)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_net(path: &Path) -> Result<Arc<PolicyValueNet>> {
    let (net, _) = PolicyValueNet::load(path, None)?;
    Ok(Arc::new(net))
}

fn decider(policy: &PolicyArgs) -> Result<Decider> {
    let policy_kind: Policy = policy.policy.into();
    let net = match policy_kind {
        Policy::Rl => Some(load_net(&policy.weights)?),
        _ => None,
    };
    Ok(Decider::new(policy_kind, net)?)
}

fn episodes(explicit: Option<u64>, full: bool) -> u64 {
    explicit.unwrap_or(if full { FULL_EPISODES } else { DEFAULT_EPISODES })
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_preset(s: &str) -> Result<(usize, usize)> {
    let (m, n) = s.split_once('x').with_context(|| format!("preset `{s}` is not of the form MxN"))?;
    let preset = (m.trim().parse()?, n.trim().parse()?);
    if !SCALE_PRESETS.contains(&preset) {
        bail!(Error::InvalidConfig(format!("unknown preset `{s}` (expected 20x12, 40x24 or 60x36)")));
    }
    Ok(preset)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, policy, episode, no_threats, out } => {
            let cfg = scenario(&common)?;
            let d = decider(&policy)?;
            let init = sample_episode(&cfg, episode_seed(common.seed, episode))?;
            let (assignment, _) = d.decide(&init)?;
            let mut opts = if no_threats { EngagementOptions::without_threats() } else { EngagementOptions::default() };
            opts.record_trace = true;
            let result = wta_core::engagement::run_episode(&init, &assignment, &opts)?;
            save_trace(result.trace.as_deref().unwrap_or_default(), &out)?;
            println!(
                "{} weapons, {} targets; destroyed value {} of {}; intercepted {:.0}%; duration {:.1} s; trace {}",
                init.m(),
                init.n(),
                result.destroyed_value,
                init.total_true_value(),
                100.0 * result.intercept_fraction,
                result.duration,
                out.display()
            );
        }
        Command::Train { config, smoke, seed, seeds, iterations, episodes, policy_lr, resume, out, jobs } => {
            let mut cfg = match (&config, smoke) {
                (Some(path), _) => TrainConfig::from_toml(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
                (None, true) => TrainConfig::smoke(),
                (None, false) => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = iterations {
                cfg.max_iterations = n;
            }
            if let Some(n) = episodes {
                cfg.episodes_per_rollout = n;
            }
            if let Some(lr) = policy_lr {
                cfg.policy_lr = lr;
            }
            cfg.validate()?;
            let report = |row: &ppo::CurveRow| {
                eprintln!(
                    "iter {:>4}  episodes {:>8}  reward mean {:>8.2} min {:>7.1} max {:>7.1}  value loss {:>10.2}  kl {:.5}  clip {:.3}",
                    row.iteration, row.episodes, row.mean_reward, row.min_reward, row.max_reward, row.value_loss, row.kl, row.clip_fraction
                )
            };
            if seeds.len() > 1 {
                let (best, score) = ppo::train_best_of(&cfg, &seeds, &out, jobs, |s, row| {
                    eprint!("seed {s}: ");
                    report(row)
                })?;
                println!("best seed {best}: held-out median destroyed value {:.2}; weights {}", score.median, out.join(ppo::WEIGHTS_FILE).display());
            } else {
                if let Some(&s) = seeds.first() {
                    cfg.seed = s;
                }
                let outcome = ppo::train(&cfg, &out, resume, jobs, report)?;
                let score = ppo::heldout_score(Arc::new(outcome.net), &cfg, jobs)?;
                println!(
                    "trained {} iterations; held-out median destroyed value {:.2}; weights {}",
                    outcome.curve.last().map(|r| r.iteration).unwrap_or(0),
                    score.median,
                    outcome.weights_path.display()
                );
            }
        }
        Command::Eval { common, policy, episodes: n, full, no_timing, out } => {
            let cfg = scenario(&common)?;
            let d = decider(&policy)?;
            let opts = EvalOptions::new(episodes(n, full), common.seed, common.jobs);
            let summary = Summary::from_records(&evaluate(&cfg, &d, &opts)?);
            let row = ReportRow { case: cfg.case_label.clone(), policy: d.policy, summary, pct_of_benchmark: None };
            emit(&compare_csv(&[row], !no_timing), out.as_deref())?;
        }
        Command::Compare { common, cases, policies, weights, episodes: n, full, no_timing, out } => {
            let configs: Vec<ScenarioConfig> = if let Some(path) = &common.config {
                vec![ScenarioConfig::load(path)?]
            } else if cases.is_empty() {
                COMPARE_CASES.iter().map(|c| make_case(c)).collect::<wta_core::Result<_>>()?
            } else {
                cases.iter().map(|c| make_case(c)).collect::<wta_core::Result<_>>()?
            };
            let policies: Vec<Policy> = policies.into_iter().map(Policy::from).collect();
            let net = if policies.contains(&Policy::Rl) { Some(load_net(&weights)?) } else { None };
            let opts = EvalOptions::new(episodes(n, full), common.seed, common.jobs);
            let rows = compare(&configs, &policies, net, &opts)?;
            emit(&compare_csv(&rows, !no_timing), out.as_deref())?;
        }
        Command::Scale { seed, jobs, episodes: n, weights_dir, init_missing, presets, no_timing, out } => {
            let presets: Vec<(usize, usize)> =
                if presets.is_empty() { SCALE_PRESETS.to_vec() } else { presets.iter().map(|p| parse_preset(p)).collect::<Result<_>>()? };
            let mut rows = Vec::new();
            for (m, n_max) in presets {
                let label = format!("Scale {m}x{n_max}");
                let cfg = make_case(&label)?;
                let path = weights_dir.join(format!("nominal-{m}x{n_max}.bin"));
                let net = if path.exists() || !init_missing {
                    let (net, _) = PolicyValueNet::load(&path, Some(NetArch::new(m, n_max)?))?;
                    net
                } else {
                    eprintln!("{label}: no weights at {}, using an initialized network", path.display());
                    PolicyValueNet::new(NetArch::new(m, n_max)?, &mut stream(seed, Purpose::Training, 2))
                };
                let net = Arc::new(net);
                let opts = EvalOptions::new(n, seed, jobs);
                for policy in [Policy::Rl, Policy::Heuristic] {
                    let d = Decider::new(policy, (policy == Policy::Rl).then(|| net.clone()))?;
                    rows.push(scale_row(m, n_max, policy, &evaluate(&cfg, &d, &opts)?));
                }
            }
            emit(&scale_csv(&rows, !no_timing), out.as_deref())?;
        }
        Command::Plot { kind, input, out } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let svg = match kind {
                PlotKind::LearningCurve => plot::learning_curve_svg(&ppo::parse_curve(&text)?),
                PlotKind::Engagement => plot::engagement_svg(&wta_core::engagement::parse_trace(&text)?),
            };
            emit(&svg, Some(&out))?;
        }
        Command::OracleCheck { instances, seed, out } => {
            let report = oracle_check(instances, seed)?;
            println!(
                "branch and bound matches enumeration: {}/{} (max error {:.3e})",
                report.bnb_matches, report.instances, report.max_bnb_error
            );
            println!(
                "greedy local search within 1%: {}/{} (max gap {:.4}%)",
                report.greedy_within_1pct,
                report.instances,
                100.0 * report.max_greedy_gap
            );
            if let Some(path) = &out {
                emit(&serde_json::to_string_pretty(&report)?, Some(path))?;
            }
            if !report.passed() {
                if let Some(inst) = &report.first_mismatch {
                    eprintln!("first mismatching instance:\n{}", inst.to_json()?);
                }
                return Err(OracleFailure.into());
            }
        }
        Command::Config { case } => print!("{}", make_case(&case)?.to_toml()?),
    }
    Ok(())
}

#[derive(Debug)]
struct OracleFailure;

impl std::fmt::Display for OracleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("oracle check failed")
    }
}

impl std::error::Error for OracleFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<OracleFailure>().is_some() {
        return EXIT_ORACLE;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::MissingWeights(_) => EXIT_MISSING_WEIGHTS,
                Error::InvalidConfig(_)
                | Error::UnknownCase { .. }
                | Error::SpacingUnsatisfiable { .. }
                | Error::TomlDe(_)
                | Error::Manifest { .. }
                | Error::ShapeMismatch(_) => EXIT_CONFIG,
                Error::Training { source, .. } if matches!(**source, Error::InvalidConfig(_)) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            };
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
