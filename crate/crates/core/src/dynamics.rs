//! Proportional navigation, the heading-error feasibility proxy and
//! drag-adjusted point-mass motion.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

pub const GRAVITY: f64 = 9.81;
/// Guidance (navigation) period, s.
pub const GUIDANCE_DT: f64 = 0.1;
/// Integration step inside [`FINE_RANGE`], s.
pub const FINE_DT: f64 = 0.01;
/// Range below which the fine integration step is used, m.
pub const FINE_RANGE: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConstants {
    pub nav_gain: f64,
    /// Acceleration limit, m/s².
    pub max_accel: f64,
    /// Heading error below which an assignment is considered feasible, degrees.
    pub feasibility_he_deg: f64,
    pub mass: f64,
    pub cd0: f64,
    /// Induced-drag coefficient on commanded acceleration.
    pub k_m: f64,
    /// Sea-level density, kg/m³.
    pub rho0: f64,
    /// Density scale height, m.
    pub scale_height: f64,
}

impl Default for GuidanceConstants {
    fn default() -> Self {
        Self {
            nav_gain: 5.0,
            max_accel: 40.0 * GRAVITY,
            feasibility_he_deg: 15.0,
            mass: 450.0,
            cd0: 0.1,
            k_m: 0.1,
            rho0: 1.225,
            scale_height: 8500.0,
        }
    }
}

impl GuidanceConstants {
    /// Drag-free variant, handy for analytic checks.
    pub fn vacuum() -> Self {
        Self { rho0: 0.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeaponState {
    pub position: Vec3,
    /// Drag-adjusted velocity; its norm equals `speed`.
    pub velocity: Vec3,
    pub speed: f64,
    pub alive: bool,
    pub targeted: bool,
    pub intercepted: bool,
    pub terminal: bool,
    pub assigned_target: usize,
    /// Closest approach to the assigned target, set when terminal.
    pub miss_distance: Option<f64>,
}

impl WeaponState {
    pub fn new(position: Vec3, velocity: Vec3, assigned_target: usize) -> Self {
        Self {
            position,
            velocity,
            speed: velocity.norm(),
            alive: true,
            targeted: false,
            intercepted: false,
            terminal: false,
            assigned_target,
            miss_distance: None,
        }
    }

    /// Still flying toward its target.
    pub fn active(&self) -> bool {
        self.alive && !self.terminal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub jink_accel: Vec3,
    pub jink_magnitude: f64,
    /// Time until the jink direction is re-drawn, s.
    pub jink_timer: f64,
    pub true_value: f64,
    pub observed_value: f64,
    pub destroyed: bool,
}

impl TargetState {
    /// Position `tau` seconds ahead under the current (constant) jink
    /// acceleration.
    pub fn position_after(&self, tau: f64) -> Vec3 {
        self.position + self.velocity * tau + 0.5 * self.jink_accel * tau * tau
    }
}

/// Angle between `velocity` and the line of sight from `position` to
/// `target_pos`, in degrees within `[0, 180]`.
pub fn heading_error(position: &Vec3, velocity: &Vec3, target_pos: &Vec3) -> Result<f64> {
    let los = target_pos - position;
    let (l, v) = (los.norm(), velocity.norm());
    if l == 0.0 {
        return Err(Error::DegenerateGeometry("zero-length line of sight"));
    }
    if v == 0.0 {
        return Err(Error::DegenerateGeometry("zero velocity"));
    }
    let c = (los.dot(velocity) / (l * v)).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Closing speed `-(r_TM · v_TM) / |r_TM|`, positive when range shrinks.
pub fn closing_speed(r_tm: &Vec3, v_tm: &Vec3) -> f64 {
    -r_tm.dot(v_tm) / r_tm.norm()
}

/// Proportional navigation acceleration command, magnitude-limited to
/// `k.max_accel`.
///
/// `Ω = (r_TM × v_TM) / (r_TM · r_TM)`, `a = -N v_c (r̂_TM × Ω)`.
pub fn pn_command(
    weapon_pos: &Vec3,
    weapon_vel: &Vec3,
    target_pos: &Vec3,
    target_vel: &Vec3,
    k: &GuidanceConstants,
) -> Result<Vec3> {
    let r_tm = target_pos - weapon_pos;
    let v_tm = target_vel - weapon_vel;
    let r2 = r_tm.norm_squared();
    if r2 == 0.0 {
        return Err(Error::DegenerateGeometry("coincident weapon and target"));
    }
    let r = r2.sqrt();
    let omega = r_tm.cross(&v_tm) / r2;
    let vc = -r_tm.dot(&v_tm) / r;
    let a_com = -k.nav_gain * vc * (r_tm / r).cross(&omega);
    let mag = a_com.norm();
    if mag == 0.0 || !mag.is_finite() {
        return Ok(Vec3::zeros());
    }
    Ok(a_com * (mag.min(k.max_accel) / mag))
}

/// Exponential atmosphere; negative altitudes are clamped to sea level.
pub fn atmosphere_density(h: f64, k: &GuidanceConstants) -> f64 {
    k.rho0 * (-h.max(0.0) / k.scale_height).exp()
}

/// Time derivative of the integrated weapon state `(r, ṽ, V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivative {
    pub position: Vec3,
    pub heading: Vec3,
    pub speed: f64,
}

/// `ṙ = V ṽ/|ṽ|`, `d ṽ/dt = a_M |ṽ|/V`, `V̇ = -ρ(h) V² cd0 / (2m) - k_M |a_M|`.
///
/// With `|ṽ| = V` the heading rate is exactly `a_M`. The `|ṽ|/V` factor
/// makes the turn rate independent of the magnitude of `ṽ`, so renormalizing
/// after each step does not disturb the integration order.
pub fn derivatives(position: &Vec3, heading: &Vec3, speed: f64, a_m: &Vec3, k: &GuidanceConstants) -> Derivative {
    let rho = atmosphere_density(position.z, k);
    Derivative {
        position: heading.normalize() * speed,
        heading: a_m * (heading.norm() / speed),
        speed: -rho * speed * speed * k.cd0 / (2.0 * k.mass) - k.k_m * a_m.norm(),
    }
}

/// One RK4 step with the acceleration command held. The velocity is
/// renormalized to the integrated speed afterwards.
pub fn integrate_step(weapon: &WeaponState, a_m: &Vec3, dt: f64, k: &GuidanceConstants) -> WeaponState {
    let (r0, h0, s0) = (weapon.position, weapon.velocity, weapon.speed);
    let k1 = derivatives(&r0, &h0, s0, a_m, k);
    let k2 = derivatives(&(r0 + 0.5 * dt * k1.position), &(h0 + 0.5 * dt * k1.heading), s0 + 0.5 * dt * k1.speed, a_m, k);
    let k3 = derivatives(&(r0 + 0.5 * dt * k2.position), &(h0 + 0.5 * dt * k2.heading), s0 + 0.5 * dt * k2.speed, a_m, k);
    let k4 = derivatives(&(r0 + dt * k3.position), &(h0 + dt * k3.heading), s0 + dt * k3.speed, a_m, k);
    let w = dt / 6.0;
    let position = r0 + w * (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position);
    let heading = h0 + w * (k1.heading + 2.0 * k2.heading + 2.0 * k3.heading + k4.heading);
    // Drag cannot reverse the vehicle.
    let speed = (s0 + w * (k1.speed + 2.0 * k2.speed + 2.0 * k3.speed + k4.speed)).max(1e-3);
    WeaponState {
        position,
        velocity: heading.normalize() * speed,
        speed,
        ..weapon.clone()
    }
}

/// Integration step for a given range to the target.
pub fn step_for_range(range: f64) -> f64 {
    if range > FINE_RANGE {
        GUIDANCE_DT
    } else {
        FINE_DT
    }
}

/// Planar constant-acceleration update; the jink direction is re-drawn each
/// time the timer runs out, and the timer re-armed uniformly in `[1, 3]` s.
pub fn target_step<R: Rng + ?Sized>(target: &TargetState, dt: f64, rng: &mut R) -> TargetState {
    let mut next = target.clone();
    next.position = target.position_after(dt);
    next.velocity = target.velocity + target.jink_accel * dt;
    next.jink_timer -= dt;
    if next.jink_timer <= 0.0 {
        let (accel, timer) = draw_jink(target.jink_magnitude, rng);
        next.jink_accel = accel;
        next.jink_timer = timer;
    }
    next
}

/// Fresh jink acceleration and timer.
pub fn draw_jink<R: Rng + ?Sized>(magnitude: f64, rng: &mut R) -> (Vec3, f64) {
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    let timer = 1.0 + 2.0 * rng.random::<f64>();
    (magnitude * Vec3::new(theta.cos(), theta.sin(), 0.0), timer)
}
