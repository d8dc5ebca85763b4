use super::agent::{
    actor_update, critic_update, observe, select_action, soft_update_targets, AgentPair,
    BatchTensors,
};
use super::buffer::{ReplayBuffer, Transition};
use super::config::TrainerConfig;
use super::report::{
    AttackReport, BestRecord, EpisodeRecord, ExtractionRecord, FailureKind, FinalSource, RolloutBest,
    RunStatus,
};
use crate::error::{Error, Result};
use crate::latent::{blend, blend_sigma, init_distribution, LatentDistribution};
use crate::oracle::OracleHandle;
use crate::reward::{confidence_reward, transition_rewards};
use crate::rng::{seeded, RunRng};

/// State left after training: the agents, the replay buffer, the run's
/// random source and the report so far.
pub struct TrainingRun {
    pub agents: AgentPair,
    pub buffer: ReplayBuffer,
    pub rng: RunRng,
    pub report: AttackReport,
}

fn check_preconditions(config: &TrainerConfig, oracle: &OracleHandle, label: usize) -> Result<()> {
    config.validate()?;
    if oracle.latent_dim() != config.latent_dim {
        return Err(Error::DimensionMismatch {
            context: "oracle latent_dim vs config latent_dim",
            expected: config.latent_dim,
            actual: oracle.latent_dim(),
        });
    }
    if label >= oracle.num_classes() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            oracle.num_classes()
        )));
    }
    Ok(())
}

/// Maps a raw spread action into the sigma bounds.
fn spread_from_action(config: &TrainerConfig, action: &[f64]) -> Vec<f64> {
    action.iter().map(|&s| config.sigma_bounds.clamp(s)).collect()
}

struct RoundOutcome {
    record: EpisodeRecord,
    next: LatentDistribution,
}

#[allow(clippy::too_many_arguments)]
fn play_round(
    config: &TrainerConfig,
    agents: &mut AgentPair,
    buffer: &mut ReplayBuffer,
    oracle: &mut OracleHandle,
    label: usize,
    round: u64,
    query_base: u64,
    rng: &mut RunRng,
) -> Result<RoundOutcome> {
    let bounds = &config.sigma_bounds;
    let alpha = config.alpha_schedule().at(round);
    let noise = config.noise.at(round, config.max_rounds);

    let state = init_distribution(config.latent_dim, bounds, rng)?;
    let obs = observe(&state);
    let mu_a = select_action(&agents.mu, &obs, noise, rng)?;
    let sigma_a = select_action(&agents.sigma, &obs, noise, rng)?;

    let next = LatentDistribution::new(
        blend(state.mu(), &mu_a, alpha)?,
        blend_sigma(state.sigma(), &sigma_a, alpha, bounds)?,
        bounds,
    )?;
    let action = LatentDistribution::new(mu_a.clone(), spread_from_action(config, &sigma_a), bounds)?;
    let (r_mu, r_sigma) =
        transition_rewards(oracle, label, &state, &action, &next, &config.reward, rng)?;

    buffer.store(Transition {
        mu_t: state.mu().to_vec(),
        mu_a,
        mu_next: next.mu().to_vec(),
        reward_mu: r_mu.total,
        sigma_t: state.sigma().to_vec(),
        sigma_a,
        sigma_next: next.sigma().to_vec(),
        reward_sigma: r_sigma.total,
    });

    if buffer.len() > config.warmup_min_buffer {
        let batch = buffer.sample_batch(config.batch_size, rng)?;
        let tensors = BatchTensors::from_transitions(&batch)?;
        critic_update(agents, &tensors, config.gamma, config.bootstrap_mode)?;
        actor_update(agents, &tensors)?;
        soft_update_targets(agents, config.tau)?;
    }

    Ok(RoundOutcome {
        record: EpisodeRecord {
            episode: round,
            reward_mu: r_mu.total,
            reward_sigma: r_sigma.total,
            r_next: r_mu.r_next,
            r_a: r_mu.r_a,
            r_mu: r_mu.r_omega,
            r_sigma: r_sigma.r_omega,
            r_c: r_mu.r_c,
            alpha,
            noise,
            queries: oracle.queries() - query_base,
        },
        next,
    })
}

/// Runs the training rounds. Oracle or numeric failures stop the loop and
/// mark the report failed; everything recorded up to that point is kept.
pub fn train(config: &TrainerConfig, oracle: &mut OracleHandle, label: usize) -> Result<TrainingRun> {
    check_preconditions(config, oracle, label)?;
    let mut rng = seeded(config.seed);
    let mut agents = AgentPair::new(config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut report = AttackReport::empty(config, label);
    let query_base = oracle.queries();

    for round in 0..config.max_rounds {
        match play_round(
            config,
            &mut agents,
            &mut buffer,
            oracle,
            label,
            round,
            query_base,
            &mut rng,
        ) {
            Ok(RoundOutcome { record, next }) => {
                let score = record.reward_mu + record.reward_sigma;
                let improved = report.best.as_ref().is_none_or(|b| score > b.score);
                if improved {
                    report.best = Some(BestRecord {
                        episode: round,
                        score,
                        r_next: record.r_next,
                        distribution: next,
                    });
                }
                report.episodes.push(record);
            }
            Err(e) => {
                report.status = RunStatus::Failed {
                    kind: FailureKind::of(&e),
                    message: format!("round {round}: {e}"),
                };
                break;
            }
        }
    }
    report.training_queries = oracle.queries() - query_base;
    report.total_queries = report.training_queries;
    Ok(TrainingRun {
        agents,
        buffer,
        rng,
        report,
    })
}

/// Outcome of [`extract_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub distribution: Option<LatentDistribution>,
    pub record: ExtractionRecord,
}

/// Rolls the noiseless actors forward from a fresh initialization, blending
/// at the schedule's final alpha, and keeps the step with the highest
/// `r_next`. The winner is compared by `r_next` against the training-time
/// best; the higher of the two (training on ties) is returned. With zero
/// rollout steps the training-time best is returned unchanged.
pub fn extract_distribution(
    agents: &AgentPair,
    config: &TrainerConfig,
    rollout_steps: usize,
    oracle: &mut OracleHandle,
    label: usize,
    training_best: Option<&BestRecord>,
    rng: &mut RunRng,
) -> Result<Extraction> {
    let from_training = || training_best.map(|b| b.distribution.clone());
    let base = oracle.queries();
    if rollout_steps == 0 {
        return Ok(Extraction {
            distribution: from_training(),
            record: ExtractionRecord {
                rollout_steps,
                rollout_best: None,
                chosen: training_best.map(|_| FinalSource::Training),
                queries: 0,
            },
        });
    }

    let bounds = &config.sigma_bounds;
    let alpha = config.alpha.end;
    let mut dist = init_distribution(config.latent_dim, bounds, rng)?;
    let mut best: Option<RolloutBest> = None;
    for step in 0..rollout_steps {
        let obs = observe(&dist);
        let mu_a = select_action(&agents.mu, &obs, 0.0, rng)?;
        let sigma_a = select_action(&agents.sigma, &obs, 0.0, rng)?;
        dist = LatentDistribution::new(
            blend(dist.mu(), &mu_a, alpha)?,
            blend_sigma(dist.sigma(), &sigma_a, alpha, bounds)?,
            bounds,
        )?;
        let r_next = confidence_reward(oracle, &dist, label, rng, config.reward.samples_per_term)?;
        if best.as_ref().is_none_or(|b| r_next > b.r_next) {
            best = Some(RolloutBest {
                step,
                r_next,
                distribution: dist.clone(),
            });
        }
    }
    let best = best.expect("at least one rollout step");
    let (distribution, chosen) = match training_best {
        Some(t) if t.r_next >= best.r_next => (t.distribution.clone(), FinalSource::Training),
        _ => (best.distribution.clone(), FinalSource::Rollout),
    };
    Ok(Extraction {
        distribution: Some(distribution),
        record: ExtractionRecord {
            rollout_steps,
            rollout_best: Some(best),
            chosen: Some(chosen),
            queries: oracle.queries() - base,
        },
    })
}

/// Trains both agents against `oracle` for `label`, then extracts the final
/// distribution.
pub fn run_attack(config: &TrainerConfig, oracle: &mut OracleHandle, label: usize) -> Result<AttackReport> {
    Ok(run_attack_with_agents(config, oracle, label)?.report)
}

/// [`run_attack`], also handing back the trained state.
pub fn run_attack_with_agents(
    config: &TrainerConfig,
    oracle: &mut OracleHandle,
    label: usize,
) -> Result<TrainingRun> {
    let mut run = train(config, oracle, label)?;
    if !run.report.is_completed() || run.report.episodes.is_empty() {
        run.report.final_distribution = run.report.best.as_ref().map(|b| b.distribution.clone());
        return Ok(run);
    }
    match extract_distribution(
        &run.agents,
        config,
        config.rollout_steps,
        oracle,
        label,
        run.report.best.as_ref(),
        &mut run.rng,
    ) {
        Ok(extraction) => {
            run.report.extraction_queries = extraction.record.queries;
            run.report.final_distribution = extraction.distribution;
            run.report.extraction = Some(extraction.record);
        }
        Err(e) => {
            run.report.status = RunStatus::Failed {
                kind: FailureKind::of(&e),
                message: format!("extraction: {e}"),
            };
            run.report.final_distribution = run.report.best.as_ref().map(|b| b.distribution.clone());
        }
    }
    run.report.total_queries = run.report.training_queries + run.report.extraction_queries;
    Ok(run)
}
