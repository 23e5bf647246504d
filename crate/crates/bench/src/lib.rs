//! Fixtures shared by the benchmarks: a fixed-size engagement, its assignment
//! instance and observation, and an initialized network.

use wta_core::engagement::{build_engagement_tensor, TensorNorms};
use wta_core::eval::EXPECTED_RATES;
use wta_core::rng::{episode_seed, stream, Purpose};
use wta_core::scenario::sample_episode;
use wta_core::solvers::{build_instance, CdfKind};
use wta_core::{EngagementState, EngagementTensor, EpisodeInit, GuidanceConstants, NetArch, PolicyValueNet, ScenarioConfig, WtaInstance};

pub const SEED: u64 = 7;

/// A Nominal episode drawn at exactly `m` weapons and `n` targets.
pub fn episode(m: usize, n: usize) -> EpisodeInit {
    let cfg = ScenarioConfig::nominal().scaled_to(m, n).with_fixed_size();
    sample_episode(&cfg, episode_seed(SEED, 0)).expect("fixture episode samples")
}

pub fn instance(init: &EpisodeInit) -> WtaInstance {
    build_instance(init, EXPECTED_RATES, CdfKind::Printed, &GuidanceConstants::default())
}

pub fn observation(init: &EpisodeInit, arch: NetArch) -> EngagementTensor {
    build_engagement_tensor(&EngagementState::new(init), arch.m_max, arch.n_max, &TensorNorms::default(), &GuidanceConstants::default())
        .expect("fixture observation builds")
}

pub fn network(m: usize, n: usize) -> PolicyValueNet {
    PolicyValueNet::new(NetArch::new(m, n).expect("valid architecture"), &mut stream(SEED, Purpose::Training, 2))
}
