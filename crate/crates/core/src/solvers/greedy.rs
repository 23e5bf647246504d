use super::{objective, Assignment, Solution, WtaInstance, EPS};

/// Greedy maximum marginal return: repeatedly commit the unassigned weapon
/// and target with the largest gain in objective.
pub fn solve_greedy(inst: &WtaInstance) -> Solution {
    let (m, n) = (inst.m, inst.n);
    let mut survive = vec![1.0; n];
    let mut targets: Vec<Option<usize>> = vec![None; m];
    for _ in 0..m {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..m).filter(|i| targets[*i].is_none()) {
            for (j, s) in survive.iter().enumerate() {
                let gain = inst.values[j] * s * (1.0 - inst.f(i, j));
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        targets[i] = Some(j);
        survive[j] *= inst.f(i, j);
    }
    finish(inst, targets.into_iter().map(|t| t.unwrap_or(0)).collect())
}

/// Greedy start followed by best-improvement local search over single
/// reassignments and pairwise swaps.
pub fn solve_greedy_local(inst: &WtaInstance) -> Solution {
    let start = solve_greedy(inst);
    let mut a = start.assignment.targets().to_vec();
    if inst.n > 0 {
        local_search(inst, &mut a);
    }
    let improved = finish(inst, a);
    if improved.value + EPS < start.value {
        start
    } else {
        improved
    }
}

fn finish(inst: &WtaInstance, targets: Vec<usize>) -> Solution {
    let assignment = Assignment { targets };
    let value = objective(inst, &assignment);
    Solution { assignment, value, approximate: true }
}

/// Survival product of target `j` with weapons `without` removed and `with` added.
fn survival(inst: &WtaInstance, a: &[usize], j: usize, without: [Option<usize>; 2], with: [Option<usize>; 2]) -> f64 {
    let mut p = 1.0;
    for (i, &t) in a.iter().enumerate() {
        if t == j && !without.contains(&Some(i)) {
            p *= inst.f(i, j);
        }
    }
    for i in with.into_iter().flatten() {
        p *= inst.f(i, j);
    }
    p
}

fn local_search(inst: &WtaInstance, a: &mut [usize]) {
    let m = inst.m;
    loop {
        let survive: Vec<f64> = (0..inst.n).map(|j| survival(inst, a, j, [None; 2], [None; 2])).collect();
        let mut best_gain = EPS;
        let mut best_move: Option<Move> = None;
        for i in 0..m {
            let from = a[i];
            let without = survival(inst, a, from, [Some(i), None], [None; 2]);
            let loss = inst.values[from] * (without - survive[from]);
            for to in (0..inst.n).filter(|to| *to != from) {
                let gain = inst.values[to] * survive[to] * (1.0 - inst.f(i, to)) - loss;
                if gain > best_gain {
                    best_gain = gain;
                    best_move = Some(Move::Reassign(i, to));
                }
            }
        }
        for i in 0..m {
            for k in i + 1..m {
                let (ti, tk) = (a[i], a[k]);
                if ti == tk {
                    continue;
                }
                let new_i = survival(inst, a, ti, [Some(i), None], [Some(k), None]);
                let new_k = survival(inst, a, tk, [Some(k), None], [Some(i), None]);
                let gain = inst.values[ti] * (survive[ti] - new_i) + inst.values[tk] * (survive[tk] - new_k);
                if gain > best_gain {
                    best_gain = gain;
                    best_move = Some(Move::Swap(i, k));
                }
            }
        }
        match best_move {
            Some(Move::Reassign(i, to)) => a[i] = to,
            Some(Move::Swap(i, k)) => a.swap(i, k),
            None => return,
        }
    }
}

enum Move {
    Reassign(usize, usize),
    Swap(usize, usize),
}
