use super::{lowest_heading_error, objective, solve_greedy_local, Assignment, Solution, WtaInstance, EPS};

pub const DEFAULT_NODE_BUDGET: u64 = 200_000;

/// Upper bound on the optimum: the sum over weapons of their best
/// single-weapon gain.
pub fn root_bound(inst: &WtaInstance) -> f64 {
    let survive = vec![1.0; inst.n];
    remaining_bound(inst, &survive, 0)
}

/// Marginal gains only shrink as more weapons join a target, so the best
/// gain of each remaining weapon against the current survival products
/// bounds what it can still add.
fn remaining_bound(inst: &WtaInstance, survive: &[f64], from: usize) -> f64 {
    (from..inst.m)
        .map(|i| {
            (0..inst.n)
                .map(|j| inst.values[j] * survive[j] * (1.0 - inst.f(i, j)))
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Depth-first branch and bound over weapons in index order, warm-started
/// from the greedy local-search solution. When the node budget runs out the
/// incumbent is returned flagged approximate. Instances with non-finite data
/// fall back to the lowest heading error assignment.
pub fn solve_bnb(inst: &WtaInstance, node_budget: u64) -> Solution {
    let finite = inst.values.iter().chain(&inst.f).all(|x| x.is_finite());
    if !finite || inst.n == 0 {
        let assignment = lowest_heading_error(inst);
        let value = objective(inst, &assignment);
        return Solution { assignment, value, approximate: true };
    }
    let warm = solve_greedy_local(inst);
    let mut search = Search {
        inst,
        survive: vec![1.0; inst.n],
        current: vec![0; inst.m],
        best: warm.assignment.targets().to_vec(),
        best_value: warm.value,
        nodes: 0,
        budget: node_budget,
        exhausted: false,
    };
    search.visit(0, 0.0);
    Solution {
        assignment: Assignment { targets: search.best },
        value: search.best_value,
        approximate: search.exhausted,
    }
}

struct Search<'a> {
    inst: &'a WtaInstance,
    survive: Vec<f64>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Search<'_> {
    fn visit(&mut self, i: usize, value: f64) {
        let inst = self.inst;
        if i == inst.m {
            if value > self.best_value + EPS {
                self.best_value = value;
                self.best.copy_from_slice(&self.current);
            }
            return;
        }
        if self.nodes >= self.budget {
            self.exhausted = true;
            return;
        }
        self.nodes += 1;
        if value + remaining_bound(inst, &self.survive, i) <= self.best_value + EPS {
            return;
        }
        let mut order: Vec<(f64, usize)> = (0..inst.n)
            .map(|j| (inst.values[j] * self.survive[j] * (1.0 - inst.f(i, j)), j))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (gain, j) in order {
            let saved = self.survive[j];
            self.survive[j] *= inst.f(i, j);
            self.current[i] = j;
            self.visit(i + 1, value + gain);
            self.survive[j] = saved;
            if self.exhausted {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_enumeration;
    use crate::solvers::tests::random_instance;

    #[test]
    fn matches_enumeration_on_oracle_instances() {
        for seed in 0..200u64 {
            let m = 1 + (seed as usize % 7);
            let n = 1 + (seed as usize / 7 % 5);
            let inst = random_instance(500 + seed, m, n);
            let e = solve_enumeration(&inst).unwrap();
            let b = solve_bnb(&inst, u64::MAX);
            assert!(!b.approximate);
            assert!((b.value - e.value).abs() < 1e-9, "seed {seed}: {} vs {}", b.value, e.value);
            assert!((objective(&inst, &b.assignment) - b.value).abs() < 1e-9);
            assert!(root_bound(&inst) >= e.value - 1e-9);
        }
    }

    #[test]
    fn identical_rows_permutation_invariant() {
        let row = vec![0.3, 0.6, 0.45];
        let inst = WtaInstance::from_matrix(vec![5.0, 9.0, 7.0], vec![row; 4]).unwrap();
        let v = solve_bnb(&inst, u64::MAX).value;
        let e = solve_enumeration(&inst).unwrap().value;
        assert!((v - e).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let inst = random_instance(3, 20, 12);
        let s = solve_bnb(&inst, 10);
        assert!(s.approximate);
        assert!(s.value >= solve_greedy_local(&inst).value - 1e-12);
    }

    #[test]
    fn non_finite_instance_falls_back() {
        let mut inst = random_instance(4, 3, 3);
        inst.heading_errors = vec![5.0, 1.0, 9.0, 2.0, 8.0, 7.0, 9.0, 9.0, 0.5];
        inst.values[1] = f64::NAN;
        let s = solve_bnb(&inst, 1000);
        assert!(s.approximate);
        assert_eq!(s.assignment.targets(), &[1, 0, 2]);
    }
}
