//! Diagonal Gaussian latent distributions and the blending schedule.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::{standard_normal, RunRng};

/// Valid range for every per-dimension standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaBounds {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for SigmaBounds {
    fn default() -> Self {
        Self {
            sigma_min: 1e-3,
            sigma_max: 3.0,
        }
    }
}

impl SigmaBounds {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        let b = Self {
            sigma_min,
            sigma_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "sigma bounds must satisfy 0 < min < max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )))
        }
    }

    pub fn clamp(&self, sigma: f64) -> f64 {
        sigma.clamp(self.sigma_min, self.sigma_max)
    }

    pub fn contains(&self, sigma: f64) -> bool {
        (self.sigma_min..=self.sigma_max).contains(&sigma)
    }

    /// Maps an unconstrained draw to a valid spread: `|raw|`, then clamped.
    pub fn sigma_from_raw(&self, raw: f64) -> f64 {
        self.clamp(raw.abs())
    }
}

/// `N(mu, diag(sigma²))` over latent codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentDistribution {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl LatentDistribution {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>, bounds: &SigmaBounds) -> Result<Self> {
        let dist = Self { mu, sigma };
        dist.validate(bounds)?;
        Ok(dist)
    }

    pub fn validate(&self, bounds: &SigmaBounds) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::InvalidInput("latent dimension must be ≥ 1".into()));
        }
        check_len("distribution sigma", self.mu.len(), self.sigma.len())?;
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution mean".into()));
        }
        if let Some(s) = self.sigma.iter().find(|&&s| !bounds.contains(s)) {
            return Err(Error::InvalidInput(format!(
                "sigma {s} outside [{}, {}]",
                bounds.sigma_min, bounds.sigma_max
            )));
        }
        Ok(())
    }

    /// Pairs an already validated mean and spread.
    pub(crate) fn from_parts_unchecked(mu: &[f64], sigma: &[f64]) -> Self {
        debug_assert_eq!(mu.len(), sigma.len());
        Self {
            mu: mu.to_vec(),
            sigma: sigma.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Fresh distribution with standard-normal means and spreads drawn
/// standard-normal, folded by `|·|` and clamped. All means are drawn first,
/// then all spreads.
pub fn init_distribution(n: usize, bounds: &SigmaBounds, rng: &mut RunRng) -> Result<LatentDistribution> {
    if n == 0 {
        return Err(Error::InvalidInput("latent dimension must be ≥ 1".into()));
    }
    bounds.validate()?;
    let mu = (0..n).map(|_| standard_normal(rng)).collect();
    let sigma = (0..n)
        .map(|_| bounds.sigma_from_raw(standard_normal(rng)))
        .collect();
    Ok(LatentDistribution { mu, sigma })
}

/// Draws `count` codes; within a code, dimension `i` uses one standard-normal
/// draw scaled by `sigma[i]` and shifted by `mu[i]`.
pub fn sample_codes(dist: &LatentDistribution, count: usize, rng: &mut RunRng) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample count must be ≥ 1".into()));
    }
    Ok((0..count)
        .map(|_| {
            dist.mu
                .iter()
                .zip(&dist.sigma)
                .map(|(m, s)| m + s * standard_normal(rng))
                .collect()
        })
        .collect())
}

/// `alpha · current + (1 − alpha) · action`, entry-wise.
pub fn blend(current: &[f64], action: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_len("blend operands", current.len(), action.len())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(current
        .iter()
        .zip(action)
        .map(|(&c, &a)| (alpha * c + (1.0 - alpha) * a).clamp(c.min(a), c.max(a)))
        .collect())
}

/// [`blend`] followed by clamping into `bounds`.
pub fn blend_sigma(current: &[f64], action: &[f64], alpha: f64, bounds: &SigmaBounds) -> Result<Vec<f64>> {
    let mut out = blend(current, action, alpha)?;
    out.iter_mut().for_each(|s| *s = bounds.clamp(*s));
    Ok(out)
}

/// Linear ramp of the blending weight over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub total_episodes: u64,
}

impl AlphaSchedule {
    pub fn new(alpha_start: f64, alpha_end: f64, total_episodes: u64) -> Result<Self> {
        let s = Self {
            alpha_start,
            alpha_end,
            total_episodes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if unit.contains(&self.alpha_start)
            && unit.contains(&self.alpha_end)
            && self.alpha_start <= self.alpha_end
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "alpha schedule needs 0 ≤ start ≤ end ≤ 1, got {} → {}",
                self.alpha_start, self.alpha_end
            )))
        }
    }

    pub fn at(&self, episode: u64) -> f64 {
        if self.total_episodes == 0 || episode >= self.total_episodes {
            return self.alpha_end;
        }
        let frac = episode as f64 / self.total_episodes as f64;
        (self.alpha_start + (self.alpha_end - self.alpha_start) * frac)
            .clamp(self.alpha_start, self.alpha_end)
    }
}

pub fn alpha_at(schedule: &AlphaSchedule, episode: u64) -> f64 {
    schedule.at(episode)
}
