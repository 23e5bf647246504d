use super::{Assignment, Solution, WtaInstance, EPS};
use crate::error::{Error, Result};

/// Largest `n^m` accepted by [`solve_enumeration`].
pub const MAX_ENUMERATION: u64 = 10_000_000;

/// Exhaustive maximum of the objective. Assignments are visited in
/// lexicographic order and only strict improvements replace the incumbent,
/// so ties resolve to the lexicographically smallest optimum.
pub fn solve_enumeration(inst: &WtaInstance) -> Result<Solution> {
    let (m, n) = (inst.m, inst.n);
    let too_large = || Error::InstanceTooLarge { m, n };
    if n == 0 && m > 0 {
        return Err(too_large());
    }
    let mut count: u64 = 1;
    for _ in 0..m {
        count = count.checked_mul(n as u64).filter(|c| *c <= MAX_ENUMERATION).ok_or_else(too_large)?;
    }
    let mut search = Search {
        inst,
        survive: vec![1.0; n],
        current: vec![0; m],
        best: Vec::new(),
        best_value: f64::NEG_INFINITY,
    };
    search.visit(0);
    Ok(Solution {
        assignment: Assignment::new(search.best, n)?,
        value: search.best_value,
        approximate: false,
    })
}

struct Search<'a> {
    inst: &'a WtaInstance,
    survive: Vec<f64>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_value: f64,
}

impl Search<'_> {
    fn visit(&mut self, i: usize) {
        if i == self.inst.m {
            let value: f64 = self.inst.values.iter().zip(&self.survive).map(|(c, p)| c * (1.0 - p)).sum();
            if self.best.is_empty() || value > self.best_value + EPS {
                self.best_value = value;
                self.best = self.current.clone();
            }
            return;
        }
        for j in 0..self.inst.n {
            let saved = self.survive[j];
            self.survive[j] *= self.inst.f(i, j);
            self.current[i] = j;
            self.visit(i + 1);
            self.survive[j] = saved;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::objective;
    use crate::solvers::tests::random_instance;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    #[test]
    fn single_weapon_takes_best_target() {
        let inst = WtaInstance::from_matrix(vec![4.0, 10.0, 6.0], vec![vec![0.2, 0.7, 0.3]]).unwrap();
        let s = solve_enumeration(&inst).unwrap();
        // 4·0.8 = 3.2, 10·0.3 = 3, 6·0.7 = 4.2
        assert_eq!(s.assignment.targets(), &[2]);
        assert!((s.value - 4.2).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_splits() {
        let inst = WtaInstance::from_matrix(vec![10.0, 8.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let s = solve_enumeration(&inst).unwrap();
        assert_eq!(s.assignment.targets(), &[0, 1]);
        assert!((s.value - 9.0).abs() < 1e-12);
        assert!((objective(&inst, &Assignment::new(vec![0, 0], 2).unwrap()) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let inst = WtaInstance::from_matrix(vec![5.0, 5.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(solve_enumeration(&inst).unwrap().assignment.targets(), &[0, 1]);
    }

    #[test]
    fn beats_random_assignments() {
        for seed in 0..20 {
            let inst = random_instance(seed, 5, 4);
            let best = solve_enumeration(&inst).unwrap().value;
            let mut rng = stream(seed, Purpose::Instance, 9);
            for _ in 0..1000 {
                let a = Assignment::new((0..5).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
                assert!(objective(&inst, &a) <= best + 1e-12);
            }
        }
    }

    #[test]
    fn size_limit_enforced() {
        let inst = random_instance(1, 8, 8); // 8^8 ≈ 1.7e7
        assert!(matches!(solve_enumeration(&inst), Err(Error::InstanceTooLarge { m: 8, n: 8 })));
        assert!(solve_enumeration(&random_instance(1, 7, 10)).is_ok());
    }
}
