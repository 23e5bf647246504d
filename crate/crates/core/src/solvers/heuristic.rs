use super::{Assignment, WtaInstance};

/// Spread weapons over feasible targets while favouring value: each weapon
/// in turn takes the feasible target maximizing `c_j / (1 + k_j)`, where
/// `k_j` counts weapons already on target `j`. Weapons without a feasible
/// target take their lowest heading error target. Never reads `F`.
pub fn solve_heuristic(inst: &WtaInstance) -> Assignment {
    let mut counts = vec![0usize; inst.n];
    let fallback = lowest_heading_error(inst);
    let targets = (0..inst.m)
        .map(|i| {
            let mut best: Option<(f64, usize)> = None;
            for j in (0..inst.n).filter(|j| inst.feasible(i, *j)) {
                let score = inst.values[j] / (1 + counts[j]) as f64;
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, j));
                }
            }
            let j = best.map(|b| b.1).unwrap_or_else(|| fallback.target(i));
            counts[j] += 1;
            j
        })
        .collect();
    Assignment { targets }
}

/// Each weapon on its lowest heading error target, ties to the lowest index.
pub fn lowest_heading_error(inst: &WtaInstance) -> Assignment {
    let targets = (0..inst.m)
        .map(|i| {
            let mut best = 0;
            for j in 1..inst.n {
                if inst.heading_error(i, j) < inst.heading_error(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect();
    Assignment { targets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::GuidanceConstants;
    use crate::engagement::ThreatRates;
    use crate::rng::episode_seed;
    use crate::scenario::{sample_episode, ScenarioConfig};
    use crate::solvers::{build_instance, CdfKind};
    use proptest::prelude::*;

    fn all_feasible(values: Vec<f64>, m: usize) -> WtaInstance {
        let n = values.len();
        WtaInstance::from_matrix(values, vec![vec![0.5; n]; m]).unwrap()
    }

    #[test]
    fn dominant_value_takes_everything() {
        assert_eq!(solve_heuristic(&all_feasible(vec![10.0, 1.0], 3)).targets(), &[0, 0, 0]);
    }

    #[test]
    fn close_values_spread() {
        assert_eq!(solve_heuristic(&all_feasible(vec![10.0, 6.0], 3)).targets(), &[0, 1, 0]);
    }

    #[test]
    fn single_feasible_target_collects_all() {
        let mut inst = all_feasible(vec![2.0, 9.0, 4.0], 4);
        for i in 0..4 {
            inst.feasible[i * 3] = false;
            inst.feasible[i * 3 + 1] = false;
        }
        assert_eq!(solve_heuristic(&inst).targets(), &[2, 2, 2, 2]);
    }

    #[test]
    fn infeasible_weapon_falls_back_to_heading() {
        let mut inst = all_feasible(vec![2.0, 9.0], 1);
        inst.feasible = vec![false, false];
        inst.heading_errors = vec![40.0, 20.0];
        assert_eq!(solve_heuristic(&inst).targets(), &[1]);
    }

    #[test]
    fn heading_argmin_and_ties() {
        let mut inst = all_feasible(vec![1.0; 4], 2);
        inst.heading_errors = vec![9.0, 3.0, 7.0, 0.0, 5.0, 5.0, 5.0, 8.0];
        assert_eq!(lowest_heading_error(&inst).targets(), &[3, 0]);
    }

    proptest! {
        #[test]
        fn heuristic_ignores_interception_probabilities(seed in 0u64..5000, scale in 0.0f64..1.0) {
            let cfg = ScenarioConfig::nominal();
            let init = sample_episode(&cfg, episode_seed(seed, 0)).unwrap();
            let rates = ThreatRates { targeting: 0.25, intercept: 0.2 };
            let inst = build_instance(&init, rates, CdfKind::Printed, &GuidanceConstants::default());
            let mut perturbed = inst.clone();
            for p in perturbed.f.iter_mut() {
                *p *= scale;
            }
            prop_assert_eq!(solve_heuristic(&inst), solve_heuristic(&perturbed));
        }

        #[test]
        fn heading_fallback_prefers_feasible(seed in 0u64..5000) {
            let cfg = ScenarioConfig::nominal();
            let init = sample_episode(&cfg, episode_seed(seed, 1)).unwrap();
            let rates = ThreatRates { targeting: 0.25, intercept: 0.2 };
            let inst = build_instance(&init, rates, CdfKind::Printed, &GuidanceConstants::default());
            let a = lowest_heading_error(&inst);
            for i in 0..inst.m {
                if (0..inst.n).any(|j| inst.feasible(i, j)) {
                    prop_assert!(inst.feasible(i, a.target(i)));
                }
            }
        }
    }
}
