//! Monte Carlo evaluation of assignment policies with common random numbers.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::GuidanceConstants;
use crate::engagement::{build_engagement_tensor, run_episode, EngagementOptions, EngagementState, TensorNorms, ThreatRates};
use crate::error::{Error, Result};
use crate::net::PolicyValueNet;
use crate::rng::{self, episode_seed, Purpose};
use crate::scenario::{sample_episode, EpisodeInit, ScenarioConfig};
use crate::solvers::{
    instance_from_state, lowest_heading_error, objective, solve_bnb, solve_enumeration, solve_greedy_local, solve_heuristic,
    Assignment, CdfKind, WtaInstance, DEFAULT_NODE_BUDGET, INFEASIBLE_F,
};

/// Rates the assignment objective is built with, whatever the episode draw.
pub const EXPECTED_RATES: ThreatRates = ThreatRates { targeting: 0.25, intercept: 0.2 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Rl,
    Bnb,
    Greedy,
    Heuristic,
    Fallback,
    Random,
}

impl Policy {
    pub const ALL: [Policy; 6] = [Policy::Rl, Policy::Bnb, Policy::Greedy, Policy::Heuristic, Policy::Fallback, Policy::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Rl => "rl",
            Policy::Bnb => "bnb",
            Policy::Greedy => "greedy",
            Policy::Heuristic => "heuristic",
            Policy::Fallback => "fallback",
            Policy::Random => "random",
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy `{s}` (expected rl, bnb, greedy, heuristic, fallback or random)")))
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a policy needs to turn an initial state into an assignment.
#[derive(Debug, Clone)]
pub struct Decider {
    pub policy: Policy,
    pub net: Option<Arc<PolicyValueNet>>,
    pub node_budget: u64,
    pub expected_rates: ThreatRates,
    pub cdf: CdfKind,
    pub norms: TensorNorms,
    pub constants: GuidanceConstants,
}

impl Decider {
    pub fn new(policy: Policy, net: Option<Arc<PolicyValueNet>>) -> Result<Self> {
        if policy == Policy::Rl && net.is_none() {
            return Err(Error::InvalidConfig("the rl policy needs network weights".into()));
        }
        Ok(Self {
            policy,
            net,
            node_budget: DEFAULT_NODE_BUDGET,
            expected_rates: EXPECTED_RATES,
            cdf: CdfKind::Printed,
            norms: TensorNorms::default(),
            constants: GuidanceConstants::default(),
        })
    }

    /// Assignment for the initial state of `init`, and whether the solver
    /// stopped short of optimality. Randomness comes from the policy stream
    /// of the episode, never from the environment streams.
    pub fn decide(&self, init: &EpisodeInit) -> Result<(Assignment, bool)> {
        let state = EngagementState::new(init);
        let instance = || instance_from_state(&state, self.expected_rates, self.cdf, &self.constants);
        Ok(match self.policy {
            Policy::Rl => {
                let net = self.net.as_ref().expect("checked in Decider::new");
                let arch = net.arch();
                let e = build_engagement_tensor(&state, arch.m_max, arch.n_max, &self.norms, &self.constants)?;
                let greedy = net.policy_forward(&e)?.greedy(state.m());
                (clamp_to_targets(&greedy, &instance()), false)
            }
            Policy::Bnb => {
                let s = solve_bnb(&instance(), self.node_budget);
                (s.assignment, s.approximate)
            }
            Policy::Greedy => (solve_greedy_local(&instance()).assignment, false),
            Policy::Heuristic => (solve_heuristic(&instance()), false),
            Policy::Fallback => (lowest_heading_error(&instance()), false),
            Policy::Random => {
                let mut rng = rng::stream(init.seed, Purpose::Policy, 0);
                let targets = (0..state.m()).map(|_| rng.random_range(0..state.n())).collect();
                (Assignment::new(targets, state.n())?, false)
            }
        })
    }
}

/// Replace targets beyond the episode's `n` by the weapon's lowest heading
/// error target.
pub fn clamp_to_targets(a: &Assignment, inst: &WtaInstance) -> Assignment {
    let fallback = lowest_heading_error(inst);
    let targets = a
        .targets()
        .iter()
        .enumerate()
        .map(|(i, &j)| if j < inst.n { j } else { fallback.target(i) })
        .collect();
    Assignment::new(targets, inst.n).expect("clamped targets lie below n")
}

/// Outcome of one evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u64,
    pub m: usize,
    pub n: usize,
    pub destroyed_value: f64,
    pub reward: f64,
    pub intercepted: usize,
    /// Wall-clock of observation building plus solving, ms.
    pub latency_ms: f64,
    pub approximate: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub episodes: u64,
    pub seed: u64,
    pub jobs: usize,
    pub engagement: EngagementOptions,
}

impl EvalOptions {
    pub fn new(episodes: u64, seed: u64, jobs: usize) -> Self {
        Self { episodes, seed, jobs, engagement: EngagementOptions::default() }
    }
}

/// Run `f` on a dedicated pool of `jobs` threads (0 selects the rayon default).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Evaluate a policy over `opts.episodes` episodes; episode `k` uses seed
/// `episode_seed(opts.seed, k)` for every policy. Records are in episode order.
pub fn evaluate(config: &ScenarioConfig, decider: &Decider, opts: &EvalOptions) -> Result<Vec<EpisodeRecord>> {
    config.validate()?;
    if decider.policy == Policy::Rl {
        let arch = decider.net.as_ref().expect("checked in Decider::new").arch();
        if config.m_range.max > arch.m_max || config.n_range.max > arch.n_max {
            return Err(Error::ShapeMismatch(format!(
                "case `{}` draws up to {}x{} but the network is {}x{}",
                config.case_label, config.m_range.max, config.n_range.max, arch.m_max, arch.n_max
            )));
        }
        // warm-up call excluded from the statistics
        decider.decide(&sample_episode(config, episode_seed(opts.seed, 0))?)?;
    }
    with_pool(opts.jobs, || {
        (0..opts.episodes)
            .into_par_iter()
            .map(|k| run_one(config, decider, opts, k))
            .collect::<Result<Vec<_>>>()
    })?
}

fn run_one(config: &ScenarioConfig, decider: &Decider, opts: &EvalOptions, k: u64) -> Result<EpisodeRecord> {
    let init = sample_episode(config, episode_seed(opts.seed, k))?;
    let start = Instant::now();
    let (assignment, approximate) = decider.decide(&init)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    let result = run_episode(&init, &assignment, &opts.engagement)?;
    Ok(EpisodeRecord {
        index: k,
        m: init.m(),
        n: init.n(),
        destroyed_value: result.destroyed_value,
        reward: result.reward,
        intercepted: result.weapon_outcomes.iter().filter(|o| **o == crate::engagement::WeaponOutcome::Intercepted).count(),
        latency_ms,
        approximate,
    })
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = q.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate statistics of a set of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub mean: f64,
    pub lat_mean_ms: f64,
    pub lat_std_ms: f64,
    pub lat_max_ms: f64,
    /// Intercepted weapons over all weapons launched.
    pub intercept_frac: f64,
    pub approximate: usize,
}

impl Summary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let mut values: Vec<f64> = records.iter().map(|r| r.destroyed_value).collect();
        values.sort_by(f64::total_cmp);
        let lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
        let (lat_mean_ms, lat_std_ms) = mean_std(&lat);
        let weapons: usize = records.iter().map(|r| r.m).sum();
        let intercepted: usize = records.iter().map(|r| r.intercepted).sum();
        Self {
            episodes: records.len(),
            median: percentile(&values, 0.5),
            p25: percentile(&values, 0.25),
            p75: percentile(&values, 0.75),
            mean: mean_std(&values).0,
            lat_mean_ms,
            lat_std_ms,
            lat_max_ms: lat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            intercept_frac: if weapons == 0 { 0.0 } else { intercepted as f64 / weapons as f64 },
            approximate: records.iter().filter(|r| r.approximate).count(),
        }
    }
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub case: String,
    pub policy: Policy,
    pub summary: Summary,
    /// `100 × median / benchmark median`, when the benchmark ran.
    pub pct_of_benchmark: Option<f64>,
}

pub const COMPARE_HEADER: &str = "case,policy,median,p25,p75,pct_of_benchmark,lat_mean_ms,lat_std_ms,lat_max_ms,intercept_frac";

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.decimals$}"),
        _ => String::new(),
    }
}

/// Comparison table as CSV. With `timing` off the latency columns are left
/// empty so the file depends only on the arguments and seed.
pub fn compare_csv(rows: &[ReportRow], timing: bool) -> String {
    let mut out = String::new();
    writeln!(out, "{COMPARE_HEADER}").unwrap();
    for r in rows {
        let s = &r.summary;
        let lat = |v: f64| fmt_opt(timing.then_some(v), 4);
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{},{},{},{},{:.4}",
            r.case,
            r.policy,
            s.median,
            s.p25,
            s.p75,
            fmt_opt(r.pct_of_benchmark, 2),
            lat(s.lat_mean_ms),
            lat(s.lat_std_ms),
            lat(s.lat_max_ms),
            s.intercept_frac
        )
        .unwrap();
    }
    out
}

/// Every policy on every case with common random numbers; the benchmark
/// percentage is relative to `bnb` on the same case.
pub fn compare(
    cases: &[ScenarioConfig],
    policies: &[Policy],
    net: Option<Arc<PolicyValueNet>>,
    opts: &EvalOptions,
) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for case in cases {
        let mut case_rows: Vec<ReportRow> = Vec::new();
        for &policy in policies {
            let decider = Decider::new(policy, if policy == Policy::Rl { net.clone() } else { None })?;
            let summary = Summary::from_records(&evaluate(case, &decider, opts)?);
            case_rows.push(ReportRow { case: case.case_label.clone(), policy, summary, pct_of_benchmark: None });
        }
        if let Some(bench) = case_rows.iter().find(|r| r.policy == Policy::Bnb).map(|r| r.summary.median) {
            for r in &mut case_rows {
                r.pct_of_benchmark = (bench > 0.0).then(|| 100.0 * r.summary.median / bench);
            }
        }
        rows.extend(case_rows);
    }
    Ok(rows)
}

/// Scalability presets and their `m × n` ratio to the smallest.
pub const SCALE_PRESETS: [(usize, usize); 3] = [(20, 12), (40, 24), (60, 36)];

pub fn scale_ratio(m_max: usize, n_max: usize) -> usize {
    let (m0, n0) = SCALE_PRESETS[0];
    (m_max * n_max) / (m0 * n0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub m_max: usize,
    pub n_max: usize,
    pub ratio: usize,
    pub policy: Policy,
    pub summary: Summary,
    /// Coefficient of variation of the per-(m, n) mean latencies.
    pub latency_cv: f64,
    /// Correlation between sampled `m·n` and latency.
    pub latency_size_corr: f64,
}

pub const SCALE_HEADER: &str = "m_max,n_max,ratio,policy,median,lat_mean_ms,lat_std_ms,lat_max_ms,latency_cv,latency_size_corr";

/// Coefficient of variation across the mean latency of each sampled size.
pub fn latency_cv_by_size(records: &[EpisodeRecord]) -> f64 {
    let mut groups: std::collections::BTreeMap<(usize, usize), Vec<f64>> = Default::default();
    for r in records {
        groups.entry((r.m, r.n)).or_default().push(r.latency_ms);
    }
    let means: Vec<f64> = groups.values().map(|v| mean_std(v).0).collect();
    let (mean, std) = mean_std(&means);
    if mean > 0.0 {
        std / mean
    } else {
        0.0
    }
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, sx) = mean_std(xs);
    let (my, sy) = mean_std(ys);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 * sx * sy)
}

pub fn scale_row(m_max: usize, n_max: usize, policy: Policy, records: &[EpisodeRecord]) -> ScaleRow {
    let sizes: Vec<f64> = records.iter().map(|r| (r.m * r.n) as f64).collect();
    let lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    ScaleRow {
        m_max,
        n_max,
        ratio: scale_ratio(m_max, n_max),
        policy,
        summary: Summary::from_records(records),
        latency_cv: latency_cv_by_size(records),
        latency_size_corr: correlation(&sizes, &lat),
    }
}

pub fn scale_csv(rows: &[ScaleRow], timing: bool) -> String {
    let mut out = String::new();
    writeln!(out, "{SCALE_HEADER}").unwrap();
    for r in rows {
        let s = &r.summary;
        let t = |v: f64| fmt_opt(timing.then_some(v), 4);
        writeln!(
            out,
            "{},{},{},{},{:.4},{},{},{},{},{}",
            r.m_max,
            r.n_max,
            r.ratio,
            r.policy,
            s.median,
            t(s.lat_mean_ms),
            t(s.lat_std_ms),
            t(s.lat_max_ms),
            t(r.latency_cv),
            t(r.latency_size_corr)
        )
        .unwrap();
    }
    out
}

/// Result of comparing the solvers against exhaustive enumeration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub instances: usize,
    pub bnb_matches: usize,
    pub greedy_within_1pct: usize,
    /// Largest relative shortfall of greedy local search.
    pub max_greedy_gap: f64,
    pub max_bnb_error: f64,
    /// First instance where branch and bound disagreed with enumeration.
    pub first_mismatch: Option<WtaInstance>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.bnb_matches == self.instances && self.greedy_within_1pct as f64 >= 0.95 * self.instances as f64
    }
}

/// Random instance with `m ≤ 6`, `n ≤ 4` and roughly 20% infeasible pairs.
pub fn random_oracle_instance(seed: u64, index: u64) -> WtaInstance {
    let mut rng = rng::stream(seed, Purpose::Instance, index);
    let m = rng.random_range(1..=6);
    let n = rng.random_range(1..=4);
    let values = (0..n).map(|_| rng.random_range(1..=15) as f64).collect();
    let f = (0..m)
        .map(|_| {
            (0..n)
                .map(|_| if rng.random::<f64>() < 0.2 { INFEASIBLE_F } else { rng.random_range(0.05..0.95) })
                .collect()
        })
        .collect();
    WtaInstance::from_matrix(values, f).expect("generated instance is valid")
}

pub fn oracle_check(instances: usize, seed: u64) -> Result<OracleReport> {
    let mut report = OracleReport {
        instances,
        bnb_matches: 0,
        greedy_within_1pct: 0,
        max_greedy_gap: 0.0,
        max_bnb_error: 0.0,
        first_mismatch: None,
    };
    for k in 0..instances {
        let inst = random_oracle_instance(seed, k as u64);
        let exact = solve_enumeration(&inst)?.value;
        let bnb = solve_bnb(&inst, u64::MAX);
        let bnb_error = (bnb.value - exact).abs();
        report.max_bnb_error = report.max_bnb_error.max(bnb_error);
        if bnb_error <= 1e-9 && (objective(&inst, &bnb.assignment) - exact).abs() <= 1e-9 {
            report.bnb_matches += 1;
        } else if report.first_mismatch.is_none() {
            report.first_mismatch = Some(inst.clone());
        }
        let greedy = solve_greedy_local(&inst).value;
        let gap = if exact > 0.0 { (exact - greedy) / exact } else { 0.0 };
        report.max_greedy_gap = report.max_greedy_gap.max(gap);
        if gap <= 0.01 {
            report.greedy_within_1pct += 1;
        }
    }
    Ok(report)
}
