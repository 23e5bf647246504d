use rand::Rng;

use crate::solvers::Assignment;

/// Numerically stable softmax of one row of logits.
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One categorical distribution over targets per weapon row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    m_max: usize,
    n_max: usize,
    logits: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ActionDistribution {
    /// `logits` is row-major `m_max × n_max`.
    pub fn from_logits(m_max: usize, n_max: usize, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), m_max * n_max);
        let mut probs = Vec::with_capacity(logits.len());
        let mut log_probs = Vec::with_capacity(logits.len());
        for row in logits.chunks_exact(n_max) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            for z in row {
                let lp = z - max - log_sum;
                log_probs.push(lp);
                probs.push(lp.exp());
            }
        }
        Self { m_max, n_max, logits, probs, log_probs }
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_max..(i + 1) * self.n_max]
    }

    /// Sample each of the first `m` rows independently.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Assignment {
        assert!(m <= self.m_max);
        let targets = (0..m)
            .map(|i| {
                let u: f64 = rng.random();
                let row = self.row(i);
                let mut acc = 0.0;
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return j;
                    }
                }
                // rounding left `u` above the cumulative sum; take the last positive entry
                row.iter().rposition(|p| *p > 0.0).unwrap_or(0)
            })
            .collect();
        Assignment::new(targets, self.n_max).expect("sampled targets lie below n_max")
    }

    /// Per-row argmax of the first `m` rows, ties to the lowest index.
    pub fn greedy(&self, m: usize) -> Assignment {
        assert!(m <= self.m_max);
        let targets = (0..m)
            .map(|i| {
                let row = &self.logits[i * self.n_max..(i + 1) * self.n_max];
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Assignment::new(targets, self.n_max).expect("argmax lies below n_max")
    }

    /// Joint log-probability of `a` over its rows and summed row entropy.
    pub fn log_prob_and_entropy(&self, a: &Assignment) -> (f64, f64) {
        let mut log_prob = 0.0;
        let mut entropy = 0.0;
        for (i, &j) in a.targets().iter().enumerate() {
            let base = i * self.n_max;
            log_prob += self.log_probs[base + j];
            entropy -= (0..self.n_max).map(|k| self.probs[base + k] * self.log_probs[base + k]).sum::<f64>();
        }
        (log_prob, entropy)
    }

    /// Gradient with respect to the logits of
    /// `w_logp · log_prob(a) + w_ent · entropy`, rows beyond `a` zero.
    pub fn logit_gradient(&self, a: &Assignment, w_logp: f64, w_ent: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.logits.len()];
        for (i, &j) in a.targets().iter().enumerate() {
            let base = i * self.n_max;
            let p = &self.probs[base..base + self.n_max];
            let lp = &self.log_probs[base..base + self.n_max];
            let h: f64 = -p.iter().zip(lp).map(|(p, l)| p * l).sum::<f64>();
            for k in 0..self.n_max {
                let onehot = if k == j { 1.0 } else { 0.0 };
                g[base + k] = w_logp * (onehot - p[k]) - w_ent * p[k] * (lp[k] + h);
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn greedy_examples() {
        let d = ActionDistribution::from_logits(1, 2, vec![0.0, 2f64.ln()]);
        assert!((d.row(0)[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.greedy(1).targets(), &[1]);
        let flat = ActionDistribution::from_logits(2, 3, vec![0.5; 6]);
        assert_eq!(flat.greedy(2).targets(), &[0, 0]);
    }

    #[test]
    fn dominant_logit_always_sampled() {
        let mut logits = vec![0.0; 5];
        logits[3] = 50.0;
        let d = ActionDistribution::from_logits(1, 5, logits);
        let mut rng = stream(1, Purpose::Policy, 0);
        assert!((0..1000).all(|_| d.sample(1, &mut rng).target(0) == 3));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let n = 12;
        let d = ActionDistribution::from_logits(1, n, vec![0.0; n]);
        let mut rng = stream(2, Purpose::Policy, 0);
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[d.sample(1, &mut rng).target(0)] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma + 1.0, "{c}");
        }
    }

    #[test]
    fn seeded_sampling_reproducible() {
        let mut rng = stream(3, Purpose::Policy, 0);
        let logits: Vec<f64> = (0..60).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let d = ActionDistribution::from_logits(5, 12, logits);
        let a = d.sample(5, &mut stream(77, Purpose::Policy, 1));
        let b = d.sample(5, &mut stream(77, Purpose::Policy, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_log_prob_closed_form() {
        let d = ActionDistribution::from_logits(20, 12, vec![0.0; 240]);
        let a = Assignment::new((0..20).map(|i| i % 12).collect(), 12).unwrap();
        let (lp, h) = d.log_prob_and_entropy(&a);
        assert!((lp - 20.0 * (1.0f64 / 12.0).ln()).abs() < 1e-9);
        assert!((h - 20.0 * 12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_rows_have_no_entropy() {
        let mut logits = vec![0.0; 6];
        logits[1] = 800.0;
        logits[5] = 800.0;
        let d = ActionDistribution::from_logits(2, 3, logits);
        let (lp, h) = d.log_prob_and_entropy(&Assignment::new(vec![1, 2], 3).unwrap());
        assert!(h.abs() < 1e-12 && lp.abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rows_normalized_for_extreme_logits(logits in proptest::collection::vec(-500.0f64..500.0, 12)) {
            let d = ActionDistribution::from_logits(3, 4, logits);
            for i in 0..3 {
                let s: f64 = d.row(i).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                prop_assert!(d.row(i).iter().all(|p| *p >= 0.0));
            }
        }

        #[test]
        fn shift_invariance(logits in proptest::collection::vec(-20.0f64..20.0, 8), shift in -100.0f64..100.0) {
            let a = ActionDistribution::from_logits(2, 4, logits.clone());
            let b = ActionDistribution::from_logits(2, 4, logits.iter().map(|z| z + shift).collect());
            for (p, q) in a.probs.iter().zip(&b.probs) {
                prop_assert!((p - q).abs() < 1e-9);
            }
            prop_assert_eq!(a.greedy(2), b.greedy(2));
        }

        #[test]
        fn exp_log_prob_is_product(logits in proptest::collection::vec(-5.0f64..5.0, 12), a0 in 0usize..4, a1 in 0usize..4, a2 in 0usize..4) {
            let d = ActionDistribution::from_logits(3, 4, logits);
            let a = Assignment::new(vec![a0, a1, a2], 4).unwrap();
            let product = d.row(0)[a0] * d.row(1)[a1] * d.row(2)[a2];
            prop_assert!((d.log_prob_and_entropy(&a).0.exp() - product).abs() < 1e-9);
        }
    }
}
