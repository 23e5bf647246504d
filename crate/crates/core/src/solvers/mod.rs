//! The probabilistic weapon-target assignment objective and its solvers.

mod bnb;
mod enumerate;
mod greedy;
mod heuristic;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bnb::{root_bound, solve_bnb, DEFAULT_NODE_BUDGET};
pub use enumerate::{solve_enumeration, MAX_ENUMERATION};
pub use greedy::{solve_greedy, solve_greedy_local};
pub use heuristic::{lowest_heading_error, solve_heuristic};

use crate::dynamics::GuidanceConstants;
use crate::engagement::{EngagementState, ThreatRates};
use crate::error::{Error, Result};
use crate::scenario::EpisodeInit;
use crate::Vec3;

/// Interception probability assigned to infeasible pairs.
pub const INFEASIBLE_F: f64 = 0.9999;

/// Improvement threshold shared by the search procedures.
pub(crate) const EPS: f64 = 1e-12;

/// Target index of every weapon.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    targets: Vec<usize>,
}

impl Assignment {
    /// Checks every entry is below `n`.
    pub fn new(targets: Vec<usize>, n: usize) -> Result<Self> {
        if let Some((i, j)) = targets.iter().enumerate().find(|(_, j)| **j >= n) {
            return Err(Error::InvalidAssignment(format!("weapon {i} assigned to target {j}, only {n} targets")));
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target(&self, weapon: usize) -> usize {
        self.targets[weapon]
    }

    /// Number of weapons on each of `n` targets.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut k = vec![0; n];
        for &j in &self.targets {
            k[j] += 1;
        }
        k
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: Assignment,
    pub value: f64,
    /// Search stopped before proving optimality.
    pub approximate: bool,
}

/// Which survival model turns time of flight into interception probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CdfKind {
    /// `1 − e^{−λ1 t} − λ2 t e^{−λ2 t}`.
    #[default]
    Printed,
    /// Exact CDF of the sum of the two exponential stages.
    Hypoexponential,
}

impl CdfKind {
    pub fn eval(&self, t: f64, rates: ThreatRates) -> f64 {
        match self {
            CdfKind::Printed => intercept_cdf(t, rates.targeting, rates.intercept),
            CdfKind::Hypoexponential => hypoexponential_cdf(t, rates.targeting, rates.intercept),
        }
    }
}

/// Single-target assignment problem data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtaInstance {
    pub m: usize,
    pub n: usize,
    /// Observed target values.
    pub values: Vec<f64>,
    /// Interception probabilities, row-major `m × n`.
    pub f: Vec<f64>,
    pub feasible: Vec<bool>,
    /// Heading errors in degrees, row-major `m × n`.
    pub heading_errors: Vec<f64>,
}

impl WtaInstance {
    pub fn new(values: Vec<f64>, f: Vec<Vec<f64>>, feasible: Vec<Vec<bool>>, heading_errors: Vec<Vec<f64>>) -> Result<Self> {
        let m = f.len();
        let n = values.len();
        let inst = Self {
            m,
            n,
            values,
            f: f.into_iter().flatten().collect(),
            feasible: feasible.into_iter().flatten().collect(),
            heading_errors: heading_errors.into_iter().flatten().collect(),
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance with every pair feasible and zero heading error.
    pub fn from_matrix(values: Vec<f64>, f: Vec<Vec<f64>>) -> Result<Self> {
        let m = f.len();
        let n = values.len();
        Self::new(values, f, vec![vec![true; n]; m], vec![vec![0.0; n]; m])
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.m * self.n;
        if self.values.len() != self.n || self.f.len() != cells || self.feasible.len() != cells || self.heading_errors.len() != cells {
            return Err(Error::ShapeMismatch(format!("instance data does not match {}x{}", self.m, self.n)));
        }
        if let Some(p) = self.f.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!("interception probability {p} outside [0, 1]")));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("target value {v} is not finite")));
        }
        Ok(())
    }

    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.n + j]
    }

    pub fn feasible(&self, i: usize, j: usize) -> bool {
        self.feasible[i * self.n + j]
    }

    pub fn heading_error(&self, i: usize, j: usize) -> f64 {
        self.heading_errors[i * self.n + j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Time of flight along the initial line of sight at the closing speed
/// projected from the weapon velocity.
pub fn time_of_flight(r_tm0: &Vec3, v0: &Vec3) -> Result<f64> {
    let range = r_tm0.norm();
    if range == 0.0 {
        return Err(Error::DegenerateGeometry("zero range"));
    }
    let v_c0 = v0.dot(r_tm0) / range;
    if v_c0 <= 0.0 {
        return Err(Error::NoClosure);
    }
    Ok(range / v_c0)
}

/// Two-stage interception probability by time `t`:
/// `1 − e^{−λ1 t} − λ2 t e^{−λ2 t}`, clamped to `[0, 1]`.
pub fn intercept_cdf(t: f64, lambda1: f64, lambda2: f64) -> f64 {
    (1.0 - (-lambda1 * t).exp() - lambda2 * t * (-lambda2 * t).exp()).clamp(0.0, 1.0)
}

/// CDF of the sum of exponential stages with rates `lambda1` and `lambda2`.
pub fn hypoexponential_cdf(t: f64, lambda1: f64, lambda2: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let p = if ((lambda2 - lambda1) / lambda1.max(lambda2)).abs() < 1e-9 {
        let l = 0.5 * (lambda1 + lambda2);
        1.0 - (-l * t).exp() * (1.0 + l * t)
    } else {
        1.0 - (lambda2 * (-lambda1 * t).exp() - lambda1 * (-lambda2 * t).exp()) / (lambda2 - lambda1)
    };
    p.clamp(0.0, 1.0)
}

/// Instance for the current state: destroyed targets and dead weapons are
/// infeasible for every pair.
pub fn instance_from_state(state: &EngagementState, rates: ThreatRates, cdf: CdfKind, k: &GuidanceConstants) -> WtaInstance {
    let (m, n) = (state.m(), state.n());
    let mut f = Vec::with_capacity(m * n);
    let mut feasible = Vec::with_capacity(m * n);
    let mut heading_errors = Vec::with_capacity(m * n);
    for (i, w) in state.weapons.iter().enumerate() {
        for (j, t) in state.targets.iter().enumerate() {
            let g = state.pair(i, j, k);
            let tof = time_of_flight(&(t.position - w.position), &w.velocity);
            let ok = g.feasible && w.alive && !t.destroyed && tof.is_ok();
            feasible.push(ok);
            heading_errors.push(g.heading_error);
            f.push(match tof {
                Ok(tof) if ok => cdf.eval(tof, rates),
                _ => INFEASIBLE_F,
            });
        }
    }
    WtaInstance {
        m,
        n,
        values: state.targets.iter().map(|t| t.observed_value).collect(),
        f,
        feasible,
        heading_errors,
    }
}

/// Instance at episode start using the expected threat rates.
pub fn build_instance(init: &EpisodeInit, expected_rates: ThreatRates, cdf: CdfKind, k: &GuidanceConstants) -> WtaInstance {
    instance_from_state(&EngagementState::new(init), expected_rates, cdf, k)
}

/// Expected destroyed observed value `Σ_j c_j (1 − Π_{i: a_i = j} F_ij)`.
pub fn objective(inst: &WtaInstance, a: &Assignment) -> f64 {
    let mut survive = vec![1.0; inst.n];
    for (i, &j) in a.targets().iter().enumerate() {
        survive[j] *= inst.f(i, j);
    }
    inst.values.iter().zip(&survive).map(|(c, p)| c * (1.0 - p)).sum()
}
