//! Reference regimes the federated runs are compared against: pure
//! distributed learning (one initial broadcast, then local training forever)
//! and a no-learning uniform-random policy.

use crate::agent::local_round;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::RunSetup;
use crate::fed::payload_bytes;
use crate::metrics::{MetricsRecord, Regime};
use crate::policy::PolicyParams;

/// Distributed learning: every agent receives the initial model once and
/// then maximizes its own reward with no further communication. Shares the
/// round-0 global model bit for bit with a federated run on the same seed.
pub fn run_distributed(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>> {
    let setup = RunSetup::new(config, seed)?;
    let train = config.train_params();
    let n = config.n_pairs;
    let all: Vec<usize> = (0..n).collect();

    let mut env = setup.training_env();
    let mut agents = setup.agents();

    let mut records = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds {
        let eval = setup.evaluate(
            agents.iter().map(|a| a.params().clone()).collect(),
            config.eval_episode_len,
        );
        local_round(
            &mut agents,
            &mut env,
            &all,
            config.episodes_per_round,
            train,
            &setup.weights,
            setup.shape,
        );
        records.push(MetricsRecord {
            seed,
            regime: Regime::Distributed,
            round,
            joint_reward: eval.joint_reward,
            per_agent_mean_reward: eval.per_agent_mean_reward,
            selected: Vec::new(),
            bytes_uplinked: if round == 0 {
                payload_bytes(setup.init.len(), 0)
            } else {
                0
            },
            wall_clock_ms: 0,
        });
    }
    Ok(records)
}

/// No-learning floor: every agent samples actions uniformly (a zero
/// parameter vector under softmax) and nothing is ever updated or uploaded.
pub fn run_random_policy(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>> {
    let setup = RunSetup::new(config, seed)?;
    let uniform = PolicyParams::zeros(setup.shape);

    let mut records = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds {
        let eval = setup.evaluate(
            vec![uniform.clone(); config.n_pairs],
            config.eval_episode_len,
        );
        records.push(MetricsRecord {
            seed,
            regime: Regime::Random,
            round,
            joint_reward: eval.joint_reward,
            per_agent_mean_reward: eval.per_agent_mean_reward,
            selected: Vec::new(),
            bytes_uplinked: 0,
            wall_clock_ms: 0,
        });
    }
    Ok(records)
}
