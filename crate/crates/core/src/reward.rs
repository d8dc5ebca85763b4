//! Oracle-derived rewards for the mean agent and the spread agent.
//!
//! Four log-confidence terms are estimated by sampling codes from four
//! distributions built out of the old state, the raw actions and the blended
//! next state:
//!
//! | term      | distribution             |
//! |-----------|--------------------------|
//! | `r_next`  | `N(μ_{t+1}, σ_{t+1}²)`   |
//! | `r_a`     | `N(μ_a, σ_a²)`           |
//! | `r_mu`    | `N(μ_{t+1}, σ_t²)`       |
//! | `r_sigma` | `N(μ_t, σ_{t+1}²)`       |
//!
//! plus the penalty `r_c = max(ε, −r_next)`. Each agent's total is
//! `w1·r_next + w2·r_a + w3·r_own + w4·r_c`, summed left to right.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{sample_codes, LatentDistribution};
use crate::oracle::{log_target_prob, OracleHandle};
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub epsilon: f64,
    pub samples_per_term: usize,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 0.5,
            w3: 1.0,
            w4: -0.5,
            epsilon: 0.2,
            samples_per_term: 1,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_term == 0 {
            return Err(Error::InvalidInput("samples_per_term must be ≥ 1".into()));
        }
        let all = [self.w1, self.w2, self.w3, self.w4, self.epsilon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reward weight".into()));
        }
        Ok(())
    }

    /// `w1·r_next + w2·r_a + w3·r_omega + w4·r_c`, in that order.
    pub fn total(&self, r_next: f64, r_a: f64, r_omega: f64, r_c: f64) -> f64 {
        let mut total = self.w1 * r_next;
        total += self.w2 * r_a;
        total += self.w3 * r_omega;
        total += self.w4 * r_c;
        total
    }

    /// Scored codes per call to [`transition_rewards`].
    pub fn queries_per_transition(&self) -> u64 {
        4 * self.samples_per_term as u64
    }
}

/// One agent's reward and the terms it was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_next: f64,
    pub r_a: f64,
    /// The agent's own term: `r_mu` for the mean agent, `r_sigma` for the spread agent.
    pub r_omega: f64,
    pub r_c: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(weights: &RewardWeights, r_next: f64, r_a: f64, r_omega: f64, r_c: f64) -> Self {
        Self {
            r_next,
            r_a,
            r_omega,
            r_c,
            total: weights.total(r_next, r_a, r_omega, r_c),
        }
    }
}

/// `max(ε, −log_p)` where `log_p` is the target label's log probability.
pub fn penalty(log_target_prob: f64, epsilon: f64) -> f64 {
    epsilon.max(-log_target_prob)
}

fn check_label(oracle: &OracleHandle, label: usize) -> Result<()> {
    if label < oracle.num_classes() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            oracle.num_classes()
        )))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean target log-probability over `samples` codes drawn from `dist`.
pub fn confidence_reward(
    oracle: &mut OracleHandle,
    dist: &LatentDistribution,
    label: usize,
    rng: &mut RunRng,
    samples: usize,
) -> Result<f64> {
    check_label(oracle, label)?;
    let codes = sample_codes(dist, samples, rng)?;
    let probs = oracle.query(&codes)?;
    let logs = probs
        .iter()
        .map(|p| log_target_prob(p, label))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&logs))
}

/// Rewards for both agents after one blended step.
///
/// `action` carries the raw mean action and the spread action already mapped
/// into the sigma bounds. All `4 · samples_per_term` codes are drawn in the
/// order `r_next`, `r_a`, `r_mu`, `r_sigma` and scored in a single query.
pub fn transition_rewards(
    oracle: &mut OracleHandle,
    label: usize,
    state: &LatentDistribution,
    action: &LatentDistribution,
    next: &LatentDistribution,
    weights: &RewardWeights,
    rng: &mut RunRng,
) -> Result<(RewardBreakdown, RewardBreakdown)> {
    check_label(oracle, label)?;
    weights.validate()?;
    let m = weights.samples_per_term;
    let mixed_mu = LatentDistribution::from_parts_unchecked(next.mu(), state.sigma());
    let mixed_sigma = LatentDistribution::from_parts_unchecked(state.mu(), next.sigma());

    let mut codes = Vec::with_capacity(4 * m);
    for dist in [next, action, &mixed_mu, &mixed_sigma] {
        codes.extend(sample_codes(dist, m, rng)?);
    }
    let probs = oracle.query(&codes)?;
    let logs = probs
        .iter()
        .map(|p| log_target_prob(p, label))
        .collect::<Result<Vec<_>>>()?;
    let term = |i: usize| mean(&logs[i * m..(i + 1) * m]);
    let (r_next, r_a, r_mu, r_sigma) = (term(0), term(1), term(2), term(3));
    let r_c = penalty(r_next, weights.epsilon);

    Ok((
        RewardBreakdown::new(weights, r_next, r_a, r_mu, r_c),
        RewardBreakdown::new(weights, r_next, r_a, r_sigma, r_c),
    ))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::latent::SigmaBounds;
    use crate::oracle::{
        make_prototype_oracle, synthetic_testbed, OracleBackend, OracleHandle, OracleKind,
        PrototypeOracleSpec,
    };
    use crate::rng::{seeded, standard_normal};

    struct Certain;

    impl OracleBackend for Certain {
        fn latent_dim(&self) -> usize {
            2
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn evaluate(&mut self, codes: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
            Ok(codes.iter().map(|_| vec![1.0, 0.0]).collect())
        }
    }

    fn certain_oracle() -> OracleHandle {
        OracleHandle::new(OracleKind::External, Box::new(Certain)).unwrap()
    }

    fn dist(mu: Vec<f64>, sigma: Vec<f64>) -> LatentDistribution {
        LatentDistribution::new(mu, sigma, &SigmaBounds::default()).unwrap()
    }

    #[test]
    fn penalty_truth_table() {
        assert_eq!(penalty(0.0, 0.2), 0.2);
        assert_eq!(penalty(-3.0, 0.2), 3.0);
        assert_eq!(penalty(-0.1, 0.2), 0.2);
    }

    #[test]
    fn certain_oracle_gives_zero_confidence_reward() {
        let d = dist(vec![0.0, 0.0], vec![1.0, 1.0]);
        let r = confidence_reward(&mut certain_oracle(), &d, 0, &mut seeded(1), 4).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn tight_distribution_at_target_beats_other_prototype() {
        let spec = PrototypeOracleSpec {
            temperature: 0.05,
            ..synthetic_testbed(4, 3)
        };
        let mut oracle = make_prototype_oracle(spec.clone()).unwrap();
        let at = |j: usize| dist(spec.prototypes[j].clone(), vec![1e-3; 4]);
        let on_target = confidence_reward(&mut oracle, &at(0), 0, &mut seeded(2), 8).unwrap();
        let off_target = confidence_reward(&mut oracle, &at(1), 0, &mut seeded(2), 8).unwrap();
        let direct = spec.probabilities(&spec.prototypes[0])[0].ln();
        assert!(on_target > -1e-3, "{on_target}");
        assert!((on_target - direct).abs() < 1e-3);
        assert!(on_target > off_target);
    }

    #[test]
    fn confidence_reward_is_mean_of_individual_logs() {
        let spec = synthetic_testbed(3, 4);
        let d = dist(vec![0.2, -0.4, 1.0], vec![0.7, 1.3, 0.2]);
        let mut oracle = make_prototype_oracle(spec.clone()).unwrap();
        let got = confidence_reward(&mut oracle, &d, 2, &mut seeded(33), 3).unwrap();

        let mut rng = seeded(33);
        let mut logs = [0.0; 3];
        for l in &mut logs {
            let code: Vec<f64> = (0..3)
                .map(|i| d.mu()[i] + d.sigma()[i] * standard_normal(&mut rng))
                .collect();
            *l = spec.probabilities(&code)[2].max(1e-12).ln();
        }
        assert_eq!(got, (logs[0] + logs[1] + logs[2]) / 3.0);
        assert_eq!(oracle.queries(), 3);
    }

    #[test]
    fn all_zero_terms_leave_only_the_penalty() {
        let weights = RewardWeights {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            w4: -1.0,
            epsilon: 0.2,
            samples_per_term: 1,
        };
        let d = dist(vec![0.0, 0.0], vec![1.0, 1.0]);
        let (mu, sigma) =
            transition_rewards(&mut certain_oracle(), 0, &d, &d, &d, &weights, &mut seeded(1)).unwrap();
        for b in [mu, sigma] {
            assert_eq!(b.r_c, 0.2);
            assert_eq!(b.total, -0.2);
        }
    }

    #[test]
    fn masked_weights_reduce_to_r_next() {
        let weights = RewardWeights {
            w1: 1.0,
            w2: 0.0,
            w3: 0.0,
            w4: 0.0,
            ..RewardWeights::default()
        };
        let mut oracle = make_prototype_oracle(synthetic_testbed(2, 3)).unwrap();
        let a = dist(vec![0.5, 0.5], vec![1.0, 0.5]);
        let b = dist(vec![-1.0, 2.0], vec![0.1, 2.0]);
        let (mu, sigma) =
            transition_rewards(&mut oracle, 1, &a, &b, &b, &weights, &mut seeded(3)).unwrap();
        assert_eq!(mu.total, mu.r_next);
        assert_eq!(sigma.total, sigma.r_next);
    }

    #[test]
    fn transition_matches_straight_line_recomputation() {
        let spec = synthetic_testbed(3, 4);
        let weights = RewardWeights {
            samples_per_term: 2,
            ..RewardWeights::default()
        };
        let state = dist(vec![0.1, -0.3, 0.8], vec![0.9, 1.4, 0.3]);
        let action = dist(vec![1.2, 0.4, -2.0], vec![0.2, 0.05, 2.5]);
        let next = dist(vec![0.7, 0.1, -0.9], vec![0.5, 0.6, 1.5]);
        let label = 3;
        let mut oracle = make_prototype_oracle(spec.clone()).unwrap();
        let (mu, sigma) =
            transition_rewards(&mut oracle, label, &state, &action, &next, &weights, &mut seeded(77))
                .unwrap();
        assert_eq!(oracle.queries(), 8);

        let mut rng = seeded(77);
        let mut term = |means: &[f64], sigmas: &[f64]| -> f64 {
            let mut acc = 0.0;
            for _ in 0..2 {
                let code: Vec<f64> = (0..3)
                    .map(|i| means[i] + sigmas[i] * standard_normal(&mut rng))
                    .collect();
                acc += spec.probabilities(&code)[label].max(1e-12).ln();
            }
            acc / 2.0
        };
        let r_next = term(next.mu(), next.sigma());
        let r_a = term(action.mu(), action.sigma());
        let r_mu = term(next.mu(), state.sigma());
        let r_sigma = term(state.mu(), next.sigma());
        let r_c = if -r_next > 0.2 { -r_next } else { 0.2 };
        let total_mu = 1.0 * r_next + 0.5 * r_a + 1.0 * r_mu + -0.5 * r_c;
        let total_sigma = 1.0 * r_next + 0.5 * r_a + 1.0 * r_sigma + -0.5 * r_c;

        assert_eq!(mu.r_next, r_next);
        assert_eq!(mu.r_a, r_a);
        assert_eq!(mu.r_omega, r_mu);
        assert_eq!(sigma.r_omega, r_sigma);
        assert_eq!(mu.r_c, r_c);
        assert_eq!(mu.total, total_mu);
        assert_eq!(sigma.total, total_sigma);
    }

    #[test]
    fn moving_next_mean_onto_target_raises_r_next() {
        let spec = synthetic_testbed(4, 3);
        let weights = RewardWeights {
            samples_per_term: 400,
            ..RewardWeights::default()
        };
        let mut oracle = make_prototype_oracle(spec.clone()).unwrap();
        let state = dist(vec![0.0; 4], vec![1.0; 4]);
        let off = dist(spec.prototypes[1].clone(), vec![0.05; 4]);
        let on = dist(spec.prototypes[0].clone(), vec![0.05; 4]);
        for seed in 0..5 {
            let (a, _) =
                transition_rewards(&mut oracle, 0, &state, &state, &off, &weights, &mut seeded(seed)).unwrap();
            let (b, _) =
                transition_rewards(&mut oracle, 0, &state, &state, &on, &weights, &mut seeded(seed)).unwrap();
            assert!(b.r_next > a.r_next);
        }
    }

    #[test]
    fn bad_label_rejected() {
        let d = dist(vec![0.0, 0.0], vec![1.0, 1.0]);
        let mut oracle = certain_oracle();
        assert!(confidence_reward(&mut oracle, &d, 2, &mut seeded(1), 1).is_err());
        assert!(
            transition_rewards(&mut oracle, 5, &d, &d, &d, &RewardWeights::default(), &mut seeded(1))
                .is_err()
        );
        assert_eq!(oracle.queries(), 0);
    }

    proptest! {
        #[test]
        fn penalty_is_floored_and_non_increasing(p in -50.0f64..0.0, q in -50.0f64..0.0, eps in 0.0f64..2.0) {
            prop_assert!(penalty(p, eps) >= eps);
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(penalty(lo, eps) >= penalty(hi, eps));
        }

        #[test]
        fn totals_match_breakdown(seed in 0u64..100, m in 1usize..4) {
            let weights = RewardWeights { samples_per_term: m, ..RewardWeights::default() };
            let mut oracle = make_prototype_oracle(synthetic_testbed(3, 5)).unwrap();
            let d = init(seed);
            let (mu, sigma) = transition_rewards(&mut oracle, 1, &d, &d, &d, &weights, &mut seeded(seed)).unwrap();
            for b in [mu, sigma] {
                prop_assert_eq!(b.total, weights.total(b.r_next, b.r_a, b.r_omega, b.r_c));
                prop_assert!(b.total.is_finite());
            }
            prop_assert_eq!(oracle.queries(), 4 * m as u64);
        }
    }

    fn init(seed: u64) -> LatentDistribution {
        crate::latent::init_distribution(3, &SigmaBounds::default(), &mut seeded(seed + 1000)).unwrap()
    }
}
