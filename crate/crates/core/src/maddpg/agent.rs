use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use super::config::{BootstrapMode, CriticMode, TrainerConfig};
use crate::error::{Error, Result};
use crate::latent::LatentDistribution;
use crate::ndmath::{Adam, AdamConfig, DenseMatrix, Gradients, Mlp, OutputActivation};
use crate::rng::{standard_normal, RunRng};

/// Actor, critic, their target copies and optimizer state for one agent.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl AgentNets {
    /// Actor `obs_dim → action_dim` with a bounded-tanh head; critic
    /// `critic_input_dim → 1`. Targets start as exact copies.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        critic_input_dim: usize,
        hidden: &[usize],
        action_bound: f64,
        actor_opt: AdamConfig,
        critic_opt: AdamConfig,
        rng: &mut RunRng,
    ) -> Result<Self> {
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new_seeded(
            &sizes(obs_dim, action_dim),
            OutputActivation::BoundedTanh {
                scale: action_bound,
            },
            rng,
        )?;
        let critic = Mlp::new_seeded(&sizes(critic_input_dim, 1), OutputActivation::Identity, rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::for_mlp(&actor, actor_opt),
            critic_opt: Adam::for_mlp(&critic, critic_opt),
            actor,
            critic,
        })
    }

    pub fn action_bound(&self) -> f64 {
        match self.actor.output_activation() {
            OutputActivation::BoundedTanh { scale } => scale,
            OutputActivation::Identity => f64::INFINITY,
        }
    }
}

/// The mean agent and the spread agent, in that order.
#[derive(Debug, Clone)]
pub struct AgentPair {
    pub mu: AgentNets,
    pub sigma: AgentNets,
    pub mode: CriticMode,
    latent_dim: usize,
}

impl AgentPair {
    pub fn new(config: &TrainerConfig, rng: &mut RunRng) -> Result<Self> {
        let n = config.latent_dim;
        let critic_in = critic_input_dim(n, config.critic_mode);
        let make = |rng: &mut RunRng| {
            AgentNets::new(
                2 * n,
                n,
                critic_in,
                &config.hidden,
                config.action_bound,
                config.actor_optimizer,
                config.critic_optimizer,
                rng,
            )
        };
        let mu = make(rng)?;
        let sigma = make(rng)?;
        Ok(Self {
            mu,
            sigma,
            mode: config.critic_mode,
            latent_dim: n,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

pub fn critic_input_dim(latent_dim: usize, mode: CriticMode) -> usize {
    match mode {
        CriticMode::Maddpg => 4 * latent_dim,
        CriticMode::Independent => 3 * latent_dim,
    }
}

/// `[mu ‖ sigma]`.
pub fn observe(dist: &LatentDistribution) -> Vec<f64> {
    let mut obs = Vec::with_capacity(2 * dist.dim());
    obs.extend_from_slice(dist.mu());
    obs.extend_from_slice(dist.sigma());
    obs
}

/// Actor output plus `noise_scale`-scaled Gaussian noise, clamped to the
/// action bound. No random draws are consumed when `noise_scale` is zero.
pub fn select_action(
    agent: &AgentNets,
    observation: &[f64],
    noise_scale: f64,
    rng: &mut RunRng,
) -> Result<Vec<f64>> {
    let bound = agent.action_bound();
    let mut action = agent.actor.forward(observation)?;
    if noise_scale > 0.0 {
        for a in &mut action {
            *a += noise_scale * standard_normal(rng);
        }
    }
    for a in &mut action {
        *a = a.clamp(-bound, bound);
    }
    Ok(action)
}

/// `target ← tau · online + (1 − tau) · target`.
pub fn soft_update(online: &Mlp, target: &mut Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}

/// Something that scores critic inputs and can differentiate the score.
pub trait ActionValue {
    fn input_dim(&self) -> usize;
    /// Values (one per row) and the gradient of `Σ_i weight · value_i` with
    /// respect to each input row.
    fn value_and_input_grad(&self, inputs: &DenseMatrix, weight: f64) -> Result<(Vec<f64>, DenseMatrix)>;
}

impl ActionValue for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn value_and_input_grad(&self, inputs: &DenseMatrix, weight: f64) -> Result<(Vec<f64>, DenseMatrix)> {
        let trace = self.forward_batch(inputs)?;
        let values = trace.output().as_slice().to_vec();
        let upstream = DenseMatrix::from_vec(values.len(), 1, vec![weight; values.len()])?;
        let (_, dx) = self.backward_batch(&trace, &upstream)?;
        Ok((values, dx))
    }
}

/// Batched views of a transition sample.
pub struct BatchTensors {
    pub obs: DenseMatrix,
    pub next_obs: DenseMatrix,
    pub mu_actions: DenseMatrix,
    pub sigma_actions: DenseMatrix,
    pub reward_mu: Vec<f64>,
    pub reward_sigma: Vec<f64>,
}

impl BatchTensors {
    pub fn from_transitions(batch: &[&Transition]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let cat = |a: &[f64], b: &[f64]| [a, b].concat();
        let obs: Vec<Vec<f64>> = batch.iter().map(|t| cat(&t.mu_t, &t.sigma_t)).collect();
        let next: Vec<Vec<f64>> = batch.iter().map(|t| cat(&t.mu_next, &t.sigma_next)).collect();
        let mu_a: Vec<&[f64]> = batch.iter().map(|t| t.mu_a.as_slice()).collect();
        let sigma_a: Vec<&[f64]> = batch.iter().map(|t| t.sigma_a.as_slice()).collect();
        Ok(Self {
            obs: DenseMatrix::from_rows(&obs)?,
            next_obs: DenseMatrix::from_rows(&next)?,
            mu_actions: DenseMatrix::from_rows(&mu_a)?,
            sigma_actions: DenseMatrix::from_rows(&sigma_a)?,
            reward_mu: batch.iter().map(|t| t.reward_mu).collect(),
            reward_sigma: batch.iter().map(|t| t.reward_sigma).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward_mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward_mu.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Mu,
    Sigma,
}

/// Critic input for `role`: `[obs ‖ a_mu ‖ a_sigma]` when centralized,
/// `[obs ‖ a_own]` when independent.
fn critic_input(
    mode: CriticMode,
    role: Role,
    obs: &DenseMatrix,
    mu_actions: &DenseMatrix,
    sigma_actions: &DenseMatrix,
) -> Result<DenseMatrix> {
    match (mode, role) {
        (CriticMode::Maddpg, _) => DenseMatrix::hstack(&[obs, mu_actions, sigma_actions]),
        (CriticMode::Independent, Role::Mu) => DenseMatrix::hstack(&[obs, mu_actions]),
        (CriticMode::Independent, Role::Sigma) => DenseMatrix::hstack(&[obs, sigma_actions]),
    }
}

/// Columns of the critic input holding `role`'s own action.
fn own_action_columns(mode: CriticMode, role: Role, n: usize) -> Range<usize> {
    match (mode, role) {
        (CriticMode::Maddpg, Role::Sigma) => 3 * n..4 * n,
        _ => 2 * n..3 * n,
    }
}

fn finite_loss(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite(format!("{what} loss {loss}")))
    }
}

/// TD targets for one agent.
pub fn td_targets(
    rewards: &[f64],
    gamma: f64,
    bootstrap: BootstrapMode,
    next_values: Option<&[f64]>,
) -> Vec<f64> {
    match (bootstrap, next_values) {
        (BootstrapMode::Bootstrapped, Some(q)) => rewards
            .iter()
            .zip(q)
            .map(|(r, q)| r + gamma * q)
            .collect(),
        _ => rewards.to_vec(),
    }
}

/// Mean squared error of `critic(inputs)` against `targets` and its
/// parameter gradients.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    inputs: &DenseMatrix,
    targets: &[f64],
) -> Result<(f64, Gradients)> {
    let trace = critic.forward_batch(inputs)?;
    let q = trace.output().as_slice();
    let b = targets.len() as f64;
    let mut loss = 0.0;
    let mut upstream = Vec::with_capacity(targets.len());
    for (qi, yi) in q.iter().zip(targets) {
        let diff = qi - yi;
        loss += diff * diff;
        upstream.push(2.0 * diff / b);
    }
    loss /= b;
    let upstream = DenseMatrix::from_vec(targets.len(), 1, upstream)?;
    let (grads, _) = critic.backward_batch(&trace, &upstream)?;
    Ok((loss, grads))
}

/// One critic step per agent on `batch`; returns the pre-step losses
/// `(mu, sigma)`.
pub fn critic_update(
    agents: &mut AgentPair,
    batch: &BatchTensors,
    gamma: f64,
    bootstrap: BootstrapMode,
) -> Result<(f64, f64)> {
    let mode = agents.mode;
    let next_actions = match bootstrap {
        BootstrapMode::Bootstrapped => Some((
            agents.mu.target_actor.forward_batch(&batch.next_obs)?.into_output(),
            agents.sigma.target_actor.forward_batch(&batch.next_obs)?.into_output(),
        )),
        BootstrapMode::Terminal => None,
    };

    let mut losses = [0.0; 2];
    for (slot, role) in [Role::Mu, Role::Sigma].into_iter().enumerate() {
        let (agent, rewards) = match role {
            Role::Mu => (&mut agents.mu, &batch.reward_mu),
            Role::Sigma => (&mut agents.sigma, &batch.reward_sigma),
        };
        let next_q = match &next_actions {
            Some((next_mu, next_sigma)) => {
                let input = critic_input(mode, role, &batch.next_obs, next_mu, next_sigma)?;
                Some(agent.target_critic.forward_batch(&input)?.into_output().into_vec())
            }
            None => None,
        };
        let targets = td_targets(rewards, gamma, bootstrap, next_q.as_deref());
        let input = critic_input(mode, role, &batch.obs, &batch.mu_actions, &batch.sigma_actions)?;
        let (loss, grads) = critic_loss_and_grad(&agent.critic, &input, &targets)?;
        losses[slot] = finite_loss(loss, "critic")?;
        agent.critic_opt.step_mlp(&mut agent.critic, &grads)?;
    }
    Ok((losses[0], losses[1]))
}

/// `−mean critic(joint(actor(obs)))` and its gradient with respect to the
/// actor parameters. `joint` assembles critic inputs from the actor's
/// actions; `own_columns` locates those actions inside the critic input.
pub fn actor_loss_and_grad(
    actor: &Mlp,
    obs: &DenseMatrix,
    critic: &dyn ActionValue,
    joint: &dyn Fn(&DenseMatrix) -> Result<DenseMatrix>,
    own_columns: Range<usize>,
) -> Result<(f64, Gradients)> {
    let trace = actor.forward_batch(obs)?;
    let input = joint(trace.output())?;
    let b = obs.rows() as f64;
    let (values, dinput) = critic.value_and_input_grad(&input, -1.0 / b)?;
    let loss = -values.iter().sum::<f64>() / b;
    let upstream = dinput.columns(own_columns.start, own_columns.len());
    let (grads, _) = actor.backward_batch(&trace, &upstream)?;
    Ok((loss, grads))
}

/// One ascent step per actor on its critic's value, the other agent's action
/// held at its current policy output. Both gradients are computed before
/// either actor moves. Returns the pre-step losses `(mu, sigma)`.
pub fn actor_update(agents: &mut AgentPair, batch: &BatchTensors) -> Result<(f64, f64)> {
    let mode = agents.mode;
    let n = agents.latent_dim;
    let obs = &batch.obs;
    let mu_policy = agents.mu.actor.forward_batch(obs)?.into_output();
    let sigma_policy = agents.sigma.actor.forward_batch(obs)?.into_output();

    let mu_joint = |own: &DenseMatrix| critic_input(mode, Role::Mu, obs, own, &sigma_policy);
    let (mu_loss, mu_grads) = actor_loss_and_grad(
        &agents.mu.actor,
        obs,
        &agents.mu.critic,
        &mu_joint,
        own_action_columns(mode, Role::Mu, n),
    )?;
    let sigma_joint = |own: &DenseMatrix| critic_input(mode, Role::Sigma, obs, &mu_policy, own);
    let (sigma_loss, sigma_grads) = actor_loss_and_grad(
        &agents.sigma.actor,
        obs,
        &agents.sigma.critic,
        &sigma_joint,
        own_action_columns(mode, Role::Sigma, n),
    )?;
    finite_loss(mu_loss, "actor")?;
    finite_loss(sigma_loss, "actor")?;

    agents.mu.actor_opt.step_mlp(&mut agents.mu.actor, &mu_grads)?;
    agents.sigma.actor_opt.step_mlp(&mut agents.sigma.actor, &sigma_grads)?;
    Ok((mu_loss, sigma_loss))
}

/// Soft-updates all four target networks.
pub fn soft_update_targets(agents: &mut AgentPair, tau: f64) -> Result<()> {
    for agent in [&mut agents.mu, &mut agents.sigma] {
        soft_update(&agent.actor, &mut agent.target_actor, tau)?;
        soft_update(&agent.critic, &mut agent.target_critic, tau)?;
    }
    Ok(())
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLosses {
    pub critic_mu: f64,
    pub critic_sigma: f64,
    pub actor_mu: f64,
    pub actor_sigma: f64,
}
