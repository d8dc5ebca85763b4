use serde::{Deserialize, Serialize};

use super::config::TrainerConfig;
use crate::latent::LatentDistribution;
use crate::metrics::EvalSummary;

/// Column names of the per-episode reward history.
pub const REWARD_CSV_HEADER: [&str; 11] = [
    "episode", "R_mu", "R_sigma", "r_next", "r_a", "r_mu", "r_sigma", "r_c", "alpha", "noise",
    "queries",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    #[serde(rename = "R_mu")]
    pub reward_mu: f64,
    #[serde(rename = "R_sigma")]
    pub reward_sigma: f64,
    pub r_next: f64,
    pub r_a: f64,
    pub r_mu: f64,
    pub r_sigma: f64,
    pub r_c: f64,
    pub alpha: f64,
    pub noise: f64,
    /// Oracle queries issued by this run up to and including this episode.
    pub queries: u64,
}

/// Highest `R_mu + R_sigma` seen during training and the blended
/// distribution that earned it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub episode: u64,
    pub score: f64,
    pub r_next: f64,
    pub distribution: LatentDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutBest {
    pub step: usize,
    pub r_next: f64,
    pub distribution: LatentDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalSource {
    Training,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub rollout_steps: usize,
    pub rollout_best: Option<RolloutBest>,
    pub chosen: Option<FinalSource>,
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum RunStatus {
    Completed,
    Failed { kind: FailureKind, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The oracle went away, broke protocol or answered with an error.
    Oracle,
    /// A loss or parameter became non-finite.
    Numeric,
    Internal,
}

impl FailureKind {
    pub fn of(error: &crate::Error) -> Self {
        use crate::Error;
        match error {
            Error::OracleUnavailable { .. } | Error::Protocol { .. } | Error::OracleRemote { .. } => {
                FailureKind::Oracle
            }
            Error::NonFinite(_) => FailureKind::Numeric,
            _ => FailureKind::Internal,
        }
    }
}

/// Metric summaries attached after the run. Their queries are not part of
/// the attack's query count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEvaluation {
    pub best: Option<EvalSummary>,
    pub final_distribution: Option<EvalSummary>,
    /// The noiseless rollout's best distribution, i.e. what the trained
    /// actors produce on their own.
    #[serde(default)]
    pub policy: Option<EvalSummary>,
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub label: usize,
    pub status: RunStatus,
    pub config: TrainerConfig,
    pub episodes: Vec<EpisodeRecord>,
    pub best: Option<BestRecord>,
    pub extraction: Option<ExtractionRecord>,
    pub final_distribution: Option<LatentDistribution>,
    pub training_queries: u64,
    pub extraction_queries: u64,
    pub total_queries: u64,
    #[serde(default)]
    pub evaluation: Option<ReportEvaluation>,
}

impl AttackReport {
    pub fn empty(config: &TrainerConfig, label: usize) -> Self {
        Self {
            label,
            status: RunStatus::Completed,
            config: config.clone(),
            episodes: Vec::new(),
            best: None,
            extraction: None,
            final_distribution: None,
            training_queries: 0,
            extraction_queries: 0,
            total_queries: 0,
            evaluation: None,
        }
    }

    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Mean `R_mu + R_sigma` over the last `window` episodes.
    pub fn mean_final_reward(&self, window: usize) -> Option<f64> {
        let tail = &self.episodes[self.episodes.len().saturating_sub(window)..];
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(|e| e.reward_mu + e.reward_sigma).sum::<f64>() / tail.len() as f64)
    }
}
