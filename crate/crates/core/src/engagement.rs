//! Episode execution: threat and sensor processes, closest-approach
//! detection, destruction bookkeeping, reward, and the engagement tensor.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    closing_speed, draw_jink, heading_error, integrate_step, pn_command, step_for_range, target_step,
    GuidanceConstants, TargetState, WeaponState, FINE_RANGE, GUIDANCE_DT,
};
use crate::error::{Error, Result};
use crate::net::EngagementTensor;
use crate::rng::{self, Purpose, StreamRng};
use crate::scenario::EpisodeInit;
use crate::solvers::Assignment;
use crate::Vec3;

/// Replace `true_value` by its lower or upper neighbouring class, each with
/// probability `shift_prob / 2`. At the lowest (highest) class the downward
/// (upward) shift leaves the value unchanged. Consumes exactly one uniform.
pub fn sensor_observe<R: Rng + ?Sized>(true_value: f64, classes: &[f64], shift_prob: f64, rng: &mut R) -> Result<f64> {
    let idx = classes
        .iter()
        .position(|c| *c == true_value)
        .ok_or(Error::UnknownValueClass(true_value))?;
    let u: f64 = rng.random();
    let shifted = if u < 0.5 * shift_prob {
        idx.checked_sub(1)
    } else if u < shift_prob {
        Some(idx + 1).filter(|k| *k < classes.len())
    } else {
        None
    };
    Ok(classes[shifted.unwrap_or(idx)])
}

/// Per-second threat rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreatRates {
    pub targeting: f64,
    pub intercept: f64,
}

/// One navigation period of the two-stage threat process. Always consumes
/// two uniforms so the stream stays aligned across policies. A weapon
/// targeted in this step can be intercepted from the next step on.
pub fn threat_step<R: Rng + ?Sized>(weapon: &WeaponState, rates: ThreatRates, dt: f64, rng: &mut R) -> WeaponState {
    let u_target: f64 = rng.random();
    let u_intercept: f64 = rng.random();
    let mut next = weapon.clone();
    if !weapon.alive {
        return next;
    }
    if !weapon.targeted {
        if u_target < (rates.targeting * dt).clamp(0.0, 1.0) {
            next.targeted = true;
        }
    } else if u_intercept < (rates.intercept * dt).clamp(0.0, 1.0) {
        next.intercepted = true;
        next.alive = false;
    }
    next
}

/// Normalization constants of the engagement tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorNorms {
    /// Time-to-go normalization, s.
    pub t_norm: f64,
    pub v_norm: f64,
}

impl Default for TensorNorms {
    fn default() -> Self {
        Self { t_norm: 20.0, v_norm: 15.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngagementOptions {
    pub constants: GuidanceConstants,
    /// Closest approach below which the target is destroyed, m.
    pub kill_radius: f64,
    /// Safety cap on episode duration, s.
    pub max_time: f64,
    pub reward_alpha: f64,
    /// Overrides the episode's sampled threat rates when set.
    pub rates_override: Option<ThreatRates>,
    pub record_trace: bool,
}

impl Default for EngagementOptions {
    fn default() -> Self {
        Self {
            constants: GuidanceConstants::default(),
            kill_radius: 5.0,
            max_time: 60.0,
            reward_alpha: 10.0,
            rates_override: None,
            record_trace: false,
        }
    }
}

impl EngagementOptions {
    pub fn without_threats() -> Self {
        Self {
            rates_override: Some(ThreatRates { targeting: 0.0, intercept: 0.0 }),
            ..Self::default()
        }
    }
}

/// Ground truth of an engagement in progress.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngagementState {
    pub weapons: Vec<WeaponState>,
    pub targets: Vec<TargetState>,
    pub time: f64,
    pub rates: ThreatRates,
    pub value_classes: Vec<f64>,
    pub value_scaled_targeting: bool,
}

impl EngagementState {
    /// Initial state. Jink directions are drawn from each target's stream.
    pub fn new(init: &EpisodeInit) -> Self {
        let (state, _) = Self::with_streams(init);
        state
    }

    fn with_streams(init: &EpisodeInit) -> (Self, Vec<StreamRng>) {
        let mut rngs = Vec::with_capacity(init.n());
        let targets = init
            .targets
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let mut rng = rng::stream(init.seed, Purpose::Target, j as u64);
                let (jink_accel, jink_timer) = draw_jink(t.accel_magnitude, &mut rng);
                rngs.push(rng);
                TargetState {
                    position: t.position,
                    velocity: t.velocity,
                    jink_accel,
                    jink_magnitude: t.accel_magnitude,
                    jink_timer,
                    true_value: t.true_value,
                    observed_value: t.observed_value,
                    destroyed: false,
                }
            })
            .collect();
        let weapons = init
            .weapons
            .iter()
            .map(|w| WeaponState::new(w.position, w.velocity, 0))
            .collect();
        let state = Self {
            weapons,
            targets,
            time: 0.0,
            rates: ThreatRates {
                targeting: init.targeting_rate,
                intercept: init.intercept_rate,
            },
            value_classes: init.value_classes.clone(),
            value_scaled_targeting: init.value_scaled_targeting,
        };
        (state, rngs)
    }

    pub fn m(&self) -> usize {
        self.weapons.len()
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn pair(&self, i: usize, j: usize, k: &GuidanceConstants) -> PairGeometry {
        PairGeometry::between(&self.weapons[i], &self.targets[j], k)
    }
}

/// Geometry of one (weapon, target) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    pub range: f64,
    /// Heading error in degrees (180 for degenerate geometry).
    pub heading_error: f64,
    pub closing_speed: f64,
    /// Heading error under the threshold and positive closure.
    pub feasible: bool,
}

impl PairGeometry {
    pub fn between(w: &WeaponState, t: &TargetState, k: &GuidanceConstants) -> Self {
        let r_tm = t.position - w.position;
        let range = r_tm.norm();
        let heading_error = heading_error(&w.position, &w.velocity, &t.position).unwrap_or(180.0);
        let closing_speed = if range > 0.0 {
            closing_speed(&r_tm, &(t.velocity - w.velocity))
        } else {
            0.0
        };
        Self {
            range,
            heading_error,
            closing_speed,
            feasible: heading_error < k.feasibility_he_deg && closing_speed > 0.0,
        }
    }

    pub fn time_to_go(&self) -> f64 {
        self.range / self.closing_speed
    }
}

/// Observation tensor of `state`: channel 0 feasibility (+1), channel 1
/// normalized and clipped time-to-go, channel 2 normalized observed value.
/// Padding rows/columns, dead weapons, destroyed targets and infeasible pairs
/// are −1 in all channels.
pub fn build_engagement_tensor(
    state: &EngagementState,
    m_max: usize,
    n_max: usize,
    norms: &TensorNorms,
    k: &GuidanceConstants,
) -> Result<EngagementTensor> {
    if state.m() > m_max || state.n() > n_max {
        return Err(Error::ShapeMismatch(format!(
            "engagement {}x{} exceeds tensor {}x{}",
            state.m(),
            state.n(),
            m_max,
            n_max
        )));
    }
    let mut e = EngagementTensor::masked(m_max, n_max);
    for (i, w) in state.weapons.iter().enumerate() {
        if !w.alive {
            continue;
        }
        for (j, t) in state.targets.iter().enumerate() {
            if t.destroyed {
                continue;
            }
            let g = PairGeometry::between(w, t, k);
            if !g.feasible {
                continue;
            }
            e.set(i, j, 0, 1.0);
            e.set(i, j, 1, (g.time_to_go() / norms.t_norm).clamp(0.0, 1.0));
            e.set(i, j, 2, t.observed_value / norms.v_norm);
        }
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeaponOutcome {
    Intercepted,
    Hit,
    Miss,
    /// Still flying when the time cap elapsed.
    Timeout,
}

/// One sampled state of an entity for trajectory plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub entity: Entity,
    pub id: usize,
    pub position: Vec3,
    pub status: Status,
    /// True value for targets.
    pub value: Option<f64>,
    /// Assigned target for weapons.
    pub assigned: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Entity {
    Weapon,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Active,
    Intercepted,
    Terminal,
    Destroyed,
}

impl Entity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Entity::Weapon => "weapon",
            Entity::Target => "target",
        }
    }
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Active => "active",
            Status::Intercepted => "intercepted",
            Status::Terminal => "terminal",
            Status::Destroyed => "destroyed",
        }
    }
}

pub const TRACE_HEADER: &str = "time,entity,id,x,y,z,status,value,assigned";

pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.2},{},{},{:.3},{:.3},{:.3},{},{},{}",
            r.time,
            r.entity.as_str(),
            r.id,
            r.position.x,
            r.position.y,
            r.position.z,
            r.status.as_str(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.assigned.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

pub fn save_trace(rows: &[TraceRow], path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace(rows, f)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if idx == 0 {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Parse { line: 1, msg: format!("expected header `{TRACE_HEADER}`") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(err(format!("expected 9 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(format!("bad {what} `{s}`")));
        let entity = match f[1] {
            "weapon" => Entity::Weapon,
            "target" => Entity::Target,
            other => return Err(err(format!("unknown entity `{other}`"))),
        };
        let status = match f[6] {
            "active" => Status::Active,
            "intercepted" => Status::Intercepted,
            "terminal" => Status::Terminal,
            "destroyed" => Status::Destroyed,
            other => return Err(err(format!("unknown status `{other}`"))),
        };
        rows.push(TraceRow {
            time: num(f[0], "time")?,
            entity,
            id: f[2].parse().map_err(|_| err(format!("bad id `{}`", f[2])))?,
            position: Vec3::new(num(f[3], "x")?, num(f[4], "y")?, num(f[5], "z")?),
            status,
            value: if f[7].is_empty() { None } else { Some(num(f[7], "value")?) },
            assigned: if f[8].is_empty() {
                None
            } else {
                Some(f[8].parse().map_err(|_| err(format!("bad assigned `{}`", f[8])))?)
            },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Sum of true values of destroyed targets.
    pub destroyed_value: f64,
    /// `alpha * destroyed_value`.
    pub reward: f64,
    pub weapon_outcomes: Vec<WeaponOutcome>,
    pub target_destroyed: Vec<bool>,
    pub miss_distances: Vec<Option<f64>>,
    /// Fraction of weapons intercepted.
    pub intercept_fraction: f64,
    /// Simulated time at the end of the episode, s.
    pub duration: f64,
    pub trace: Option<Vec<TraceRow>>,
}

/// Sliding window of squared-range samples used to locate closest approach.
#[derive(Debug, Clone)]
struct ApproachTracker {
    samples: Vec<(f64, f64)>,
    min_r2: f64,
}

impl ApproachTracker {
    fn new(t: f64, r2: f64) -> Self {
        Self { samples: vec![(t, r2)], min_r2: r2 }
    }

    /// Record a sample; returns the miss distance once range starts growing.
    fn push(&mut self, t: f64, r2: f64) -> Option<f64> {
        let prev = self.samples.last().map(|s| s.1).unwrap_or(f64::INFINITY);
        if self.samples.len() == 3 {
            self.samples.remove(0);
        }
        self.samples.push((t, r2));
        self.min_r2 = self.min_r2.min(r2);
        if r2 > prev {
            Some(self.closest_approach())
        } else {
            None
        }
    }

    /// Minimum of the parabola through the last three squared-range samples
    /// (exact for unaccelerated relative motion).
    fn closest_approach(&self) -> f64 {
        let mut best = self.min_r2;
        if let [(t0, y0), (t1, y1), (t2, y2)] = self.samples[..] {
            let d01 = (y1 - y0) / (t1 - t0);
            let d12 = (y2 - y1) / (t2 - t1);
            let a = (d12 - d01) / (t2 - t0);
            if a > 0.0 {
                let b = d01 - a * (t0 + t1);
                let ts = (-b / (2.0 * a)).clamp(t0, t2);
                let y = y0 + d01 * (ts - t0) + a * (ts - t0) * (ts - t1);
                best = best.min(y);
            }
        }
        best.max(0.0).sqrt()
    }

    fn min_range(&self) -> f64 {
        self.min_r2.sqrt()
    }
}

/// Fly one navigation period with the PN command held. Returns the miss
/// distance if closest approach occurred during the period.
fn fly_period(w: &mut WeaponState, tracker: &mut ApproachTracker, target: &TargetState, t0: f64, k: &GuidanceConstants) {
    let cmd = pn_command(&w.position, &w.velocity, &target.position, &target.velocity, k).unwrap_or_else(|_| Vec3::zeros());
    let dt = step_for_range((target.position - w.position).norm());
    let substeps = (GUIDANCE_DT / dt).round() as usize;
    for s in 1..=substeps {
        *w = integrate_step(w, &cmd, dt, k);
        let tau = s as f64 * dt;
        let r2 = (target.position_after(tau) - w.position).norm_squared();
        if let Some(miss) = tracker.push(t0 + tau, r2) {
            w.terminal = true;
            w.miss_distance = Some(miss);
            return;
        }
        if w.position.z < -FINE_RANGE {
            w.terminal = true;
            w.miss_distance = Some(tracker.min_range());
            return;
        }
    }
}

fn trace_rows(state: &EngagementState, rows: &mut Vec<TraceRow>) {
    for (i, w) in state.weapons.iter().enumerate() {
        rows.push(TraceRow {
            time: state.time,
            entity: Entity::Weapon,
            id: i,
            position: w.position,
            status: if w.intercepted {
                Status::Intercepted
            } else if w.terminal {
                Status::Terminal
            } else {
                Status::Active
            },
            value: None,
            assigned: Some(w.assigned_target),
        });
    }
    for (j, t) in state.targets.iter().enumerate() {
        rows.push(TraceRow {
            time: state.time,
            entity: Entity::Target,
            id: j,
            position: t.position,
            status: if t.destroyed { Status::Destroyed } else { Status::Active },
            value: Some(t.true_value),
            assigned: None,
        });
    }
}

/// Run an episode to completion under a static assignment.
///
/// Stochastic processes use per-weapon and per-target streams derived from
/// the episode seed, so every assignment sees the same threat draws.
pub fn run_episode(init: &EpisodeInit, assignment: &Assignment, opts: &EngagementOptions) -> Result<EpisodeResult> {
    let (m, n) = (init.m(), init.n());
    if assignment.len() != m {
        return Err(Error::InvalidAssignment(format!(
            "assignment covers {} weapons, episode has {m}",
            assignment.len()
        )));
    }
    if let Some(j) = assignment.targets().iter().find(|j| **j >= n) {
        return Err(Error::InvalidAssignment(format!("target index {j} out of range for {n} targets")));
    }
    let k = &opts.constants;
    let (mut state, mut target_rngs) = EngagementState::with_streams(init);
    if let Some(r) = opts.rates_override {
        state.rates = r;
    }
    for (w, &j) in state.weapons.iter_mut().zip(assignment.targets()) {
        w.assigned_target = j;
    }
    let mut weapon_rngs: Vec<StreamRng> = (0..m).map(|i| rng::stream(init.seed, Purpose::Weapon, i as u64)).collect();
    let mut trackers: Vec<ApproachTracker> = state
        .weapons
        .iter()
        .map(|w| ApproachTracker::new(0.0, (state.targets[w.assigned_target].position - w.position).norm_squared()))
        .collect();
    let mean_class = state.value_classes.iter().sum::<f64>() / state.value_classes.len().max(1) as f64;

    let mut trace = opts.record_trace.then(Vec::new);
    if let Some(rows) = trace.as_mut() {
        trace_rows(&state, rows);
    }
    let mut steps = 0usize;
    let max_steps = (opts.max_time / GUIDANCE_DT).round() as usize;
    while steps < max_steps && state.weapons.iter().any(WeaponState::active) {
        for (w, rng) in state.weapons.iter_mut().zip(weapon_rngs.iter_mut()) {
            let mut rates = state.rates;
            if state.value_scaled_targeting && mean_class > 0.0 {
                rates.targeting *= state.targets[w.assigned_target].true_value / mean_class;
            }
            if w.active() {
                *w = threat_step(w, rates, GUIDANCE_DT, rng);
            } else {
                // keep the stream aligned with weapons that are still flying
                let _: (f64, f64) = (rng.random(), rng.random());
            }
        }
        for (w, tracker) in state.weapons.iter_mut().zip(trackers.iter_mut()) {
            if !w.active() {
                continue;
            }
            let target = &state.targets[w.assigned_target];
            fly_period(w, tracker, target, state.time, k);
            if w.terminal && w.miss_distance.is_some_and(|d| d < opts.kill_radius) {
                state.targets[w.assigned_target].destroyed = true;
            }
        }
        for (t, rng) in state.targets.iter_mut().zip(target_rngs.iter_mut()) {
            *t = target_step(t, GUIDANCE_DT, rng);
        }
        steps += 1;
        state.time = steps as f64 * GUIDANCE_DT;
        if let Some(rows) = trace.as_mut() {
            trace_rows(&state, rows);
        }
    }

    let weapon_outcomes: Vec<WeaponOutcome> = state
        .weapons
        .iter()
        .map(|w| {
            if w.intercepted {
                WeaponOutcome::Intercepted
            } else if !w.terminal {
                WeaponOutcome::Timeout
            } else if w.miss_distance.is_some_and(|d| d < opts.kill_radius) {
                WeaponOutcome::Hit
            } else {
                WeaponOutcome::Miss
            }
        })
        .collect();
    let destroyed_value: f64 = state.targets.iter().filter(|t| t.destroyed).map(|t| t.true_value).fold(0.0, |acc, v| acc + v);
    let intercepted = weapon_outcomes.iter().filter(|o| **o == WeaponOutcome::Intercepted).count();
    Ok(EpisodeResult {
        destroyed_value,
        reward: opts.reward_alpha * destroyed_value,
        target_destroyed: state.targets.iter().map(|t| t.destroyed).collect(),
        miss_distances: state.weapons.iter().map(|w| w.miss_distance).collect(),
        weapon_outcomes,
        intercept_fraction: if m == 0 { 0.0 } else { intercepted as f64 / m as f64 },
        duration: state.time,
        trace,
    })
}
