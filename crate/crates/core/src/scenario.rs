//! Randomized episode generation and the named evaluation cases.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engagement::sensor_observe;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::Vec3;

/// Attempts at drawing weapon positions before the spacing constraint is
/// declared unsatisfiable.
pub const MAX_SPACING_ATTEMPTS: usize = 1000;

/// Closed interval `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub min: T,
    pub max: T,
}

impl<T> Interval<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

impl<T: Copy> Interval<T> {
    pub const fn fixed(value: T) -> Self {
        Self { min: value, max: value }
    }
}

impl Interval<f64> {
    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    fn scaled(self, k: f64) -> Self {
        Self::new(self.min * k, self.max * k)
    }
}

impl Interval<usize> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl Interval<u32> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

/// Every randomization bound of an episode distribution.
///
/// Angles are in degrees, distances in meters, speeds in m/s and rates in s⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case_label: String,
    pub seed: u64,
    pub m_max: usize,
    pub n_max: usize,
    pub m_range: Interval<usize>,
    pub n_range: Interval<usize>,
    pub r_expected_range: Interval<f64>,
    pub distance_d: f64,
    pub azimuth_range: Interval<f64>,
    pub elevation_range: Interval<f64>,
    pub weapon_speed_range: Interval<f64>,
    pub min_weapon_spacing: f64,
    pub r_gt_range: Interval<f64>,
    pub d_shift_range: Interval<f64>,
    pub target_speed_range: Interval<f64>,
    pub target_accel_range: Interval<f64>,
    pub value_count_range: Interval<usize>,
    pub value_min: u32,
    pub value_max_range: Interval<u32>,
    pub targeting_rate_range: Interval<f64>,
    pub intercept_rate_range: Interval<f64>,
    /// Total probability that the observed value is shifted by one class.
    pub sensor_shift_prob: f64,
    /// Scale each weapon's targeting rate by the value of its assigned target.
    #[serde(default)]
    pub value_scaled_targeting: bool,
}

/// Built-in case names accepted by [`make_case`].
pub const CASE_LABELS: [&str; 9] = [
    "Nominal",
    "Threat Model 1",
    "Threat Model 2",
    "Sensor Noise",
    "Threat Targeting",
    "25km Range",
    "Scale 20x12",
    "Scale 40x24",
    "Scale 60x36",
];

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

impl ScenarioConfig {
    pub fn nominal() -> Self {
        Self {
            case_label: "Nominal".into(),
            seed: 0,
            m_max: 20,
            n_max: 12,
            m_range: Interval::new(10, 20),
            n_range: Interval::new(4, 12),
            r_expected_range: Interval::new(6000.0, 12000.0),
            distance_d: 30000.0,
            azimuth_range: Interval::new(-45.0, 45.0),
            elevation_range: Interval::new(45.0, 90.0),
            weapon_speed_range: Interval::new(2500.0, 3500.0),
            min_weapon_spacing: 2000.0,
            r_gt_range: Interval::new(6000.0, 12000.0),
            d_shift_range: Interval::new(1000.0, 3000.0),
            target_speed_range: Interval::new(0.0, 30.0),
            target_accel_range: Interval::new(0.0, 1.0),
            value_count_range: Interval::new(3, 5),
            value_min: 1,
            value_max_range: Interval::new(10, 15),
            targeting_rate_range: Interval::new(0.2, 0.3),
            intercept_rate_range: Interval::new(0.1, 0.3),
            sensor_shift_prob: 0.1,
            value_scaled_targeting: false,
        }
    }

    /// Same distribution with `(m, n)` pinned to `(m_max, n_max)`.
    pub fn with_fixed_size(mut self) -> Self {
        self.m_range = Interval::fixed(self.m_max);
        self.n_range = Interval::fixed(self.n_max);
        self
    }

    /// Resize to a `(m_max, n_max)` architecture, scaling the expected and
    /// actual target region radii linearly with `m_max / 20`.
    pub fn scaled_to(mut self, m_max: usize, n_max: usize) -> Self {
        let k = m_max as f64 / 20.0;
        self.m_max = m_max;
        self.n_max = n_max;
        self.m_range = Interval::new(m_max / 2, m_max);
        self.n_range = Interval::new(n_max / 3, n_max);
        self.r_expected_range = self.r_expected_range.scaled(k);
        self.r_gt_range = self.r_gt_range.scaled(k);
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(msg: String) -> Result<()> {
            Err(Error::InvalidConfig(msg))
        }
        let float_intervals = [
            ("r_expected_range", self.r_expected_range),
            ("azimuth_range", self.azimuth_range),
            ("elevation_range", self.elevation_range),
            ("weapon_speed_range", self.weapon_speed_range),
            ("r_gt_range", self.r_gt_range),
            ("d_shift_range", self.d_shift_range),
            ("target_speed_range", self.target_speed_range),
            ("target_accel_range", self.target_accel_range),
            ("targeting_rate_range", self.targeting_rate_range),
            ("intercept_rate_range", self.intercept_rate_range),
        ];
        for (name, iv) in float_intervals {
            if !(iv.min.is_finite() && iv.max.is_finite() && iv.min <= iv.max) {
                return bad(format!("{name}: need finite min <= max, got [{}, {}]", iv.min, iv.max));
            }
        }
        for (name, iv) in [
            ("r_expected_range", self.r_expected_range),
            ("weapon_speed_range", self.weapon_speed_range),
            ("r_gt_range", self.r_gt_range),
            ("d_shift_range", self.d_shift_range),
            ("target_speed_range", self.target_speed_range),
            ("target_accel_range", self.target_accel_range),
            ("targeting_rate_range", self.targeting_rate_range),
            ("intercept_rate_range", self.intercept_rate_range),
        ] {
            if iv.min < 0.0 {
                return bad(format!("{name}: must be non-negative"));
            }
        }
        if self.weapon_speed_range.min <= 0.0 {
            return bad("weapon_speed_range: speeds must be positive".into());
        }
        if !(self.distance_d > 0.0 && self.distance_d.is_finite()) {
            return bad("distance_d must be positive".into());
        }
        if self.min_weapon_spacing.is_nan() || self.min_weapon_spacing < 0.0 {
            return bad("min_weapon_spacing must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.sensor_shift_prob) {
            return bad("sensor_shift_prob must lie in [0, 1]".into());
        }
        if self.m_max == 0 || self.n_max == 0 {
            return bad("m_max and n_max must be at least 1".into());
        }
        if self.m_range.min == 0 || self.m_range.min > self.m_range.max || self.m_range.max > self.m_max {
            return bad(format!("m_range must lie within [1, {}]", self.m_max));
        }
        if self.n_range.min == 0 || self.n_range.min > self.n_range.max || self.n_range.max > self.n_max {
            return bad(format!("n_range must lie within [1, {}]", self.n_max));
        }
        if self.value_min == 0 {
            return bad("value_min must be a positive integer".into());
        }
        if self.value_max_range.min > self.value_max_range.max || self.value_max_range.min < self.value_min {
            return bad("value_max_range must satisfy value_min <= min <= max".into());
        }
        let vc = self.value_count_range;
        if vc.min == 0 || vc.min > vc.max {
            return bad("value_count_range must satisfy 1 <= min <= max".into());
        }
        let smallest_pool = (self.value_max_range.min - self.value_min + 1) as usize;
        if vc.max > smallest_pool {
            return bad(format!(
                "value_count_range max {} exceeds the {smallest_pool} distinct values available",
                vc.max
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

fn normalize_label(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Look up a built-in case. Matching ignores case, spaces and punctuation,
/// so `threat-model-1` selects "Threat Model 1".
pub fn make_case(label: &str) -> Result<ScenarioConfig> {
    let key = normalize_label(label);
    let canonical = CASE_LABELS
        .iter()
        .find(|l| normalize_label(l) == key)
        .ok_or_else(|| Error::UnknownCase {
            label: label.to_string(),
            valid: CASE_LABELS.join(", "),
        })?;
    let mut cfg = ScenarioConfig::nominal();
    match *canonical {
        "Nominal" | "Scale 20x12" => {}
        "Threat Model 1" => {
            cfg.targeting_rate_range = Interval::new(0.0, 0.25);
            cfg.intercept_rate_range = Interval::new(0.0, 0.25);
        }
        "Threat Model 2" => {
            cfg.targeting_rate_range = Interval::new(0.15, 0.25);
            cfg.intercept_rate_range = Interval::new(0.15, 0.25);
        }
        "Sensor Noise" => cfg.sensor_shift_prob = 0.2,
        "Threat Targeting" => cfg.value_scaled_targeting = true,
        "25km Range" => cfg.distance_d = 25000.0,
        "Scale 40x24" => cfg = cfg.scaled_to(40, 24),
        "Scale 60x36" => cfg = cfg.scaled_to(60, 36),
        _ => unreachable!("every CASE_LABELS entry is handled"),
    }
    cfg.case_label = canonical.to_string();
    Ok(cfg)
}

/// Initial conditions of one weapon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeaponInit {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Point the weapon was aimed at when placed.
    pub reference_point: Vec3,
}

/// Initial conditions of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInit {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Jinking acceleration magnitude for the whole episode (m/s²).
    pub accel_magnitude: f64,
    pub true_value: f64,
    pub observed_value: f64,
}

/// One sampled episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeInit {
    /// Seed the episode was drawn from; in-episode stochastic processes are
    /// derived from it.
    pub seed: u64,
    pub weapons: Vec<WeaponInit>,
    pub targets: Vec<TargetInit>,
    pub value_classes: Vec<f64>,
    pub targeting_rate: f64,
    pub intercept_rate: f64,
    pub value_scaled_targeting: bool,
}

impl EpisodeInit {
    pub fn m(&self) -> usize {
        self.weapons.len()
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn total_true_value(&self) -> f64 {
        self.targets.iter().map(|t| t.true_value).sum()
    }

    /// Smallest pairwise distance between weapons (infinite for one weapon).
    pub fn min_weapon_spacing(&self) -> f64 {
        min_spacing(self.weapons.iter().map(|w| w.position))
    }
}

fn min_spacing(points: impl Iterator<Item = Vec3> + Clone) -> f64 {
    let pts: Vec<Vec3> = points.collect();
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.min((pts[i] - pts[j]).norm());
        }
    }
    best
}

fn uniform_in_disc<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec3 {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Vec3::new(r * theta.cos(), r * theta.sin(), 0.0)
}

fn planar_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Vec3::new(theta.cos(), theta.sin(), 0.0)
}

/// Unit vector from a reference point towards a weapon placed at the given
/// azimuth (about +x, horizontal plane) and elevation above the horizontal.
pub fn placement_direction(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Probability of each value class: proportional to `1 / value`.
pub fn class_probabilities(classes: &[f64]) -> Result<Vec<f64>> {
    if classes.is_empty() {
        return Err(Error::InvalidConfig("value classes must be nonempty".into()));
    }
    if let Some(v) = classes.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig(format!("value class {v} is not strictly positive")));
    }
    if classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("value classes must be strictly increasing".into()));
    }
    let total: f64 = classes.iter().map(|v| 1.0 / v).sum();
    Ok(classes.iter().map(|v| (1.0 / v) / total).collect())
}

/// `n` independent draws from `classes` with weights inversely proportional
/// to the value.
pub fn sample_target_values<R: Rng + ?Sized>(classes: &[f64], n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let probs = class_probabilities(classes)?;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, p) in classes.iter().zip(&probs) {
                acc += p;
                if u < acc {
                    return *v;
                }
            }
            *classes.last().unwrap()
        })
        .collect())
}

/// `count` distinct integers from `[min, max]`, sorted ascending.
pub fn sample_value_classes<R: Rng + ?Sized>(min: u32, max: u32, count: usize, rng: &mut R) -> Vec<f64> {
    let pool = (max - min + 1) as usize;
    let mut picked: Vec<f64> = rand::seq::index::sample(rng, pool, count.min(pool))
        .into_iter()
        .map(|k| (min as usize + k) as f64)
        .collect();
    picked.sort_by(f64::total_cmp);
    picked
}

/// Draw one episode from `config`. Deterministic in `(config, episode_seed)`.
pub fn sample_episode(config: &ScenarioConfig, episode_seed: u64) -> Result<EpisodeInit> {
    config.validate()?;
    let mut rng = rng::stream(episode_seed, Purpose::Scenario, 0);
    let m = config.m_range.sample(&mut rng);
    let n = config.n_range.sample(&mut rng);
    let r_expected = config.r_expected_range.sample(&mut rng);

    let mut weapons = Vec::with_capacity(m);
    let mut placed = false;
    for _ in 0..MAX_SPACING_ATTEMPTS {
        weapons.clear();
        for _ in 0..m {
            let reference_point = uniform_in_disc(&mut rng, r_expected);
            let az = config.azimuth_range.sample(&mut rng);
            let el = config.elevation_range.sample(&mut rng);
            let speed = config.weapon_speed_range.sample(&mut rng);
            let dir = placement_direction(az, el);
            weapons.push(WeaponInit {
                position: reference_point + config.distance_d * dir,
                velocity: -speed * dir,
                reference_point,
            });
        }
        if min_spacing(weapons.iter().map(|w| w.position)) >= config.min_weapon_spacing {
            placed = true;
            break;
        }
    }
    if !placed {
        return Err(Error::SpacingUnsatisfiable {
            seed: episode_seed,
            attempts: MAX_SPACING_ATTEMPTS,
        });
    }

    let r_gt = config.r_gt_range.sample(&mut rng);
    let mut kinematics = Vec::with_capacity(n);
    for _ in 0..n {
        let base = uniform_in_disc(&mut rng, r_gt);
        let shift = config.d_shift_range.sample(&mut rng) * planar_direction(&mut rng);
        let velocity = config.target_speed_range.sample(&mut rng) * planar_direction(&mut rng);
        let accel = config.target_accel_range.sample(&mut rng);
        kinematics.push((base + shift, velocity, accel));
    }

    let value_count = config.value_count_range.sample(&mut rng);
    let value_max = config.value_max_range.sample(&mut rng);
    let classes = sample_value_classes(config.value_min, value_max, value_count, &mut rng);
    let true_values = sample_target_values(&classes, n, &mut rng)?;
    let mut targets = Vec::with_capacity(n);
    for ((position, velocity, accel_magnitude), true_value) in kinematics.into_iter().zip(true_values) {
        let observed_value = sensor_observe(true_value, &classes, config.sensor_shift_prob, &mut rng)?;
        targets.push(TargetInit {
            position,
            velocity,
            accel_magnitude,
            true_value,
            observed_value,
        });
    }

    let targeting_rate = config.targeting_rate_range.sample(&mut rng);
    let intercept_rate = config.intercept_rate_range.sample(&mut rng);
    Ok(EpisodeInit {
        seed: episode_seed,
        weapons,
        targets,
        value_classes: classes,
        targeting_rate,
        intercept_rate,
        value_scaled_targeting: config.value_scaled_targeting,
    })
}
