use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{AlphaSchedule, SigmaBounds};
use crate::ndmath::AdamConfig;
use crate::reward::RewardWeights;

/// How the critic's temporal-difference target is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// `y = R + γ · Q′(s′, μ′(s′))`.
    Bootstrapped,
    /// `y = R`.
    Terminal,
}

/// What each critic sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// Centralized critics over the observation and both agents' actions.
    Maddpg,
    /// Each critic sees the observation and only its own agent's action.
    Independent,
}

impl std::str::FromStr for CriticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maddpg" => Ok(CriticMode::Maddpg),
            "independent" => Ok(CriticMode::Independent),
            other => Err(Error::InvalidInput(format!(
                "mode must be maddpg or independent, got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for CriticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CriticMode::Maddpg => "maddpg",
            CriticMode::Independent => "independent",
        })
    }
}

/// Exponential decay of the exploration noise scale over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub initial: f64,
    pub r#final: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            initial: 0.3,
            r#final: 0.01,
        }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial >= 0.0
            && self.r#final >= 0.0
            && self.initial.is_finite()
            && self.r#final.is_finite()
            && (self.initial == 0.0) == (self.r#final == 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "noise schedule needs finite non-negative scales, both zero or both positive; got {} → {}",
                self.initial, self.r#final
            )))
        }
    }

    /// Scale at `round` of `total`: `initial · (final/initial)^(round/total)`.
    pub fn at(&self, round: u64, total: u64) -> f64 {
        if self.initial == 0.0 {
            return 0.0;
        }
        if total == 0 {
            return self.r#final;
        }
        let frac = (round as f64 / total as f64).min(1.0);
        self.initial * (self.r#final / self.initial).powf(frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRange {
    pub start: f64,
    pub end: f64,
}

impl Default for AlphaRange {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 0.9,
        }
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub latent_dim: usize,
    /// Hidden layer widths shared by actors and critics.
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub max_rounds: u64,
    /// Updates start once the buffer holds more than this many transitions.
    pub warmup_min_buffer: usize,
    /// Actor outputs lie in `[-action_bound, action_bound]`.
    pub action_bound: f64,
    pub noise: NoiseSchedule,
    pub alpha: AlphaRange,
    pub reward: RewardWeights,
    pub sigma_bounds: SigmaBounds,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
    pub bootstrap_mode: BootstrapMode,
    pub critic_mode: CriticMode,
    /// Noiseless policy steps taken when extracting the final distribution.
    pub rollout_steps: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 5e-3,
            buffer_capacity: 1_000_000,
            batch_size: 64,
            max_rounds: 5_000,
            warmup_min_buffer: 64,
            action_bound: 4.0,
            noise: NoiseSchedule::default(),
            alpha: AlphaRange::default(),
            reward: RewardWeights::default(),
            sigma_bounds: SigmaBounds::default(),
            actor_optimizer: AdamConfig::default(),
            critic_optimizer: AdamConfig::default(),
            bootstrap_mode: BootstrapMode::Bootstrapped,
            critic_mode: CriticMode::Maddpg,
            rollout_steps: 20,
            seed: 1,
        }
    }
}

impl TrainerConfig {
    /// Network sizes and round count of the full-scale setting.
    pub fn full_scale() -> Self {
        Self {
            hidden: vec![256, 256],
            batch_size: 256,
            warmup_min_buffer: 256,
            max_rounds: 40_000,
            ..Self::default()
        }
    }

    pub fn alpha_schedule(&self) -> AlphaSchedule {
        AlphaSchedule {
            alpha_start: self.alpha.start,
            alpha_end: self.alpha.end,
            total_episodes: self.max_rounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(m));
        if self.latent_dim == 0 {
            return fail("latent_dim must be ≥ 1".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be ≥ 1".into());
        }
        if !(self.batch_size <= self.warmup_min_buffer && self.warmup_min_buffer <= self.buffer_capacity) {
            return fail(format!(
                "need batch_size ≤ warmup_min_buffer ≤ buffer_capacity, got {} / {} / {}",
                self.batch_size, self.warmup_min_buffer, self.buffer_capacity
            ));
        }
        if !(self.action_bound > 0.0 && self.action_bound.is_finite()) {
            return fail(format!("action_bound must be positive, got {}", self.action_bound));
        }
        for opt in [&self.actor_optimizer, &self.critic_optimizer] {
            if !(opt.learning_rate > 0.0
                && (0.0..1.0).contains(&opt.beta1)
                && (0.0..1.0).contains(&opt.beta2)
                && opt.epsilon > 0.0)
            {
                return fail(format!("invalid optimizer settings {opt:?}"));
            }
        }
        self.noise.validate()?;
        self.alpha_schedule().validate()?;
        self.reward.validate()?;
        self.sigma_bounds.validate()?;
        Ok(())
    }
}
