//! Two deterministic-policy agents, one proposing means and one proposing
//! spreads, trained with centralized critics from a replay buffer.
//!
//! Every round starts from a fresh random distribution, so each stored
//! transition is a single step. Updates begin once the buffer holds more
//! than `warmup_min_buffer` transitions and then happen once per round.

mod agent;
mod buffer;
mod config;
mod report;
mod trainer;

pub use agent::{
    actor_loss_and_grad, actor_update, critic_input_dim, critic_loss_and_grad, critic_update,
    observe, select_action, soft_update, soft_update_targets, td_targets, ActionValue, AgentNets,
    AgentPair, BatchTensors, UpdateLosses,
};
pub use buffer::{sample_batch, store, ReplayBuffer, Transition};
pub use config::{AlphaRange, BootstrapMode, CriticMode, NoiseSchedule, TrainerConfig};
pub use report::{
    AttackReport, BestRecord, EpisodeRecord, ExtractionRecord, FailureKind, FinalSource, ReportEvaluation,
    RolloutBest, RunStatus, REWARD_CSV_HEADER,
};
pub use trainer::{extract_distribution, run_attack, run_attack_with_agents, train, Extraction, TrainingRun};
