//! Per-agent episode execution and local policy-gradient training.
//!
//! Agents interact with one shared environment but learn privately: nothing
//! an agent observes or earns is visible to its peers. The only value that
//! leaves an agent is a parameter vector plus a sample count (see
//! [`crate::fed::LocalUpdate`]).

use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Observation, RadioEnv};
use crate::fed::LocalUpdate;
use crate::policy::{forward, logprob_grad, sample_action, HiddenState, PolicyParams, PolicyShape};
use crate::rng::{stream_rng, Stream};

/// One step of an episode as seen by a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observation: Observation,
    pub action: usize,
    pub reward: f64,
}

/// One agent's record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// An agent: its policy parameters, recurrent state, private action stream,
/// and trajectory buffer. Fields are private on purpose; peers and the
/// server can reach only the parameter vector.
#[derive(Debug, Clone)]
pub struct AgentState {
    id: usize,
    params: PolicyParams,
    hidden: HiddenState,
    rng: ChaCha8Rng,
    buffer: Vec<Trajectory>,
}

impl AgentState {
    /// A fresh agent holding `params`, with its action stream derived from
    /// `(run_seed, id)`.
    pub fn new(id: usize, params: PolicyParams, shape: PolicyShape, run_seed: u64) -> AgentState {
        Self::with_rng(
            id,
            params,
            shape,
            stream_rng(run_seed, Stream::AgentAction(id)),
        )
    }

    /// Like [`AgentState::new`] but with an explicit action stream (used for
    /// evaluation episodes, which must not disturb training streams).
    pub fn with_rng(
        id: usize,
        params: PolicyParams,
        shape: PolicyShape,
        rng: ChaCha8Rng,
    ) -> AgentState {
        AgentState {
            id,
            params,
            hidden: vec![0.0; shape.hidden_width],
            rng,
            buffer: Vec::new(),
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// The parameter vector — the one value allowed across the agent boundary.
    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    /// Install freshly broadcast parameters.
    pub fn receive_params(&mut self, params: PolicyParams) {
        self.params = params;
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    fn reset_hidden(&mut self) {
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
    }
}

/// Run one episode of length `episode_len` with every agent acting in the
/// shared environment. Hidden states reset at episode start; each agent
/// records only its own (observation, action, reward) steps. Returns the
/// per-agent trajectories and the per-step joint rewards
/// `sum_n weights[n] * r_n`.
pub fn run_episode(
    agents: &mut [AgentState],
    env: &mut RadioEnv,
    episode_len: usize,
    weights: &[f64],
    shape: PolicyShape,
) -> (Vec<Trajectory>, Vec<f64>) {
    assert!(episode_len >= 1);
    assert_eq!(agents.len(), env.n_agents());
    assert_eq!(weights.len(), agents.len());

    for agent in agents.iter_mut() {
        agent.reset_hidden();
    }
    let mut observations = env.initial_observations();
    let mut trajectories: Vec<Trajectory> = agents
        .iter()
        .map(|_| Trajectory {
            steps: Vec::with_capacity(episode_len),
        })
        .collect();
    let mut joint_rewards = Vec::with_capacity(episode_len);

    for _ in 0..episode_len {
        let mut joint: Vec<Action> = Vec::with_capacity(agents.len());
        let mut action_indices = Vec::with_capacity(agents.len());
        for (agent, obs) in agents.iter_mut().zip(&observations) {
            let (probs, next_hidden) = forward(&agent.params, shape, &obs.features, &agent.hidden);
            agent.hidden = next_hidden;
            let index = sample_action(&probs, &mut agent.rng);
            action_indices.push(index);
            joint.push(Action::from_index(index, shape.m_channels));
        }

        let (rewards, next_observations) = env.step(&joint);

        let mut joint_reward = 0.0;
        for (n, traj) in trajectories.iter_mut().enumerate() {
            traj.steps.push(TrajectoryStep {
                observation: observations[n].clone(),
                action: action_indices[n],
                reward: rewards[n],
            });
            joint_reward += weights[n] * rewards[n];
        }
        joint_rewards.push(joint_reward);
        observations = next_observations;
    }

    (trajectories, joint_rewards)
}

/// Gradient-ascent step on the buffered trajectories:
/// `params += lr * clip(mean of logprob_grad)`. The buffer is cleared
/// afterwards. Panics on a nonpositive learning rate or an empty buffer.
pub fn local_update(
    agent: &mut AgentState,
    shape: PolicyShape,
    lr: f64,
    gamma: f64,
    grad_clip: f64,
) {
    assert!(lr > 0.0, "learning rate must be positive");
    assert!(!agent.buffer.is_empty(), "no trajectories buffered");

    let mut grad = vec![0.0; shape.len()];
    for traj in &agent.buffer {
        let g = logprob_grad(&agent.params, shape, traj, gamma);
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let scale = 1.0 / agent.buffer.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);

    clip_global_norm(&mut grad, grad_clip);
    for (p, g) in agent.params.values.iter_mut().zip(&grad) {
        *p += lr * g;
    }
    agent.buffer.clear();
}

fn clip_global_norm(grad: &mut [f64], max_norm: f64) {
    assert!(max_norm > 0.0);
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Local training knobs shared by every round.
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    /// Steps per episode (T).
    pub episode_len: usize,
    pub lr: f64,
    pub gamma: f64,
    pub grad_clip: f64,
}

/// One local round: `episodes` episode/update cycles for the selected
/// agents, starting from whatever parameters they currently hold. All agents
/// keep acting in the environment; only the agents listed in `selected`
/// update and report back. With `lr == 0` the updates are no-ops and the
/// received parameters come back unchanged. `gamma` discounts returns-to-go.
pub fn local_round(
    agents: &mut [AgentState],
    env: &mut RadioEnv,
    selected: &[usize],
    episodes: usize,
    train: TrainParams,
    weights: &[f64],
    shape: PolicyShape,
) -> Vec<LocalUpdate> {
    assert!(episodes >= 1);
    for agent in agents.iter() {
        debug_assert_eq!(agent.buffer_len(), 0, "buffer must be empty at cycle start");
    }

    for _ in 0..episodes {
        let (trajectories, _) = run_episode(agents, env, train.episode_len, weights, shape);
        for (agent, traj) in agents.iter_mut().zip(trajectories) {
            if selected.contains(&agent.id) {
                agent.buffer.push(traj);
                if train.lr > 0.0 {
                    local_update(agent, shape, train.lr, train.gamma, train.grad_clip);
                } else {
                    agent.buffer.clear();
                }
            }
        }
    }

    selected
        .iter()
        .map(|&id| LocalUpdate {
            agent_id: id,
            params: agents[id].params.clone(),
            sample_count: (episodes * train.episode_len) as u64,
        })
        .collect()
}
