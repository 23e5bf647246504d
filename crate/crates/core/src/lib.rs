//! Terminal-phase strike engagement simulation and weapon-target assignment.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: randomized episode generation and the named evaluation cases.
//! - [`dynamics`]: proportional navigation, the heading-error feasibility proxy,
//!   drag-adjusted point-mass motion and RK4 integration.
//! - [`engagement`]: the episode executor (threats, sensor noise, destruction
//!   bookkeeping, reward) and the engagement tensor observation.
//! - [`solvers`]: the probabilistic assignment objective and the assignment
//!   policies (enumeration, branch-and-bound, greedy + local search, the value
//!   spreading heuristic and the lowest-heading-error fallback).
//! - [`net`]: the convolutional policy/value networks with analytic gradients.
//! - [`ppo`]: PPO training of the policy as a contextual bandit.
//! - [`eval`]: Monte Carlo comparison harness with common random numbers.
//! - [`plot`]: SVG rendering of learning curves and engagement traces.

pub mod dynamics;
pub mod engagement;
pub mod error;
pub mod eval;
pub mod net;
pub mod plot;
pub mod ppo;
pub mod rng;
pub mod scenario;
pub mod solvers;

pub use dynamics::{GuidanceConstants, TargetState, WeaponState};
pub use engagement::{EngagementOptions, EngagementState, EpisodeResult};
pub use error::{Error, Result};
pub use net::{ActionDistribution, EngagementTensor, NetArch, Network, PolicyValueNet};
pub use scenario::{EpisodeInit, Interval, ScenarioConfig};
pub use solvers::{Assignment, Solution, WtaInstance};

/// Three-vector used for positions (m), velocities (m/s) and accelerations (m/s²).
pub type Vec3 = nalgebra::Vector3<f64>;
