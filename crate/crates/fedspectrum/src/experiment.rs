//! Experiment orchestration: seeded multi-run execution, evaluation
//! episodes, metrics persistence, and summaries.
//!
//! A run is identified by (config, seed, regime) and is deterministic down
//! to the byte: every random draw comes from a named stream, and runs never
//! share mutable state, so results do not depend on scheduling.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::agent::{run_episode, AgentState};
use crate::baselines::{run_distributed, run_random_policy};
use crate::config::ExperimentConfig;
use crate::env::{place_pairs, EnvParams, GainMatrix, RadioEnv};
use crate::error::{Error, Result};
use crate::fed::{payload_bytes, run_round, GlobalModel, RoundMeta};
use crate::metrics::{read_csv, write_csv, EvalSummary, MetricsRecord, Regime};
use crate::policy::{init_params, PolicyParams, PolicyShape};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::selector::SelectorState;

const PU_TRAIN_TAG: u64 = 0x5055_0001;
const PU_EVAL_TAG: u64 = 0x5055_0002;

/// Everything a single (seed, regime) run needs, derived deterministically
/// from the config and seed.
pub struct RunSetup {
    pub gains: GainMatrix,
    pub env_params: EnvParams,
    pub shape: PolicyShape,
    pub weights: Vec<f64>,
    pub init: PolicyParams,
    pub seed: u64,
    pub eval_pu_seed: u64,
}

impl RunSetup {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<RunSetup> {
        let topology = place_pairs(
            seed,
            config.n_pairs,
            config.area_side,
            config.d_min,
            config.d_max,
        )?;
        let gains = GainMatrix::from_topology(&topology, &config.pathloss());
        let shape = config.shape();
        Ok(RunSetup {
            gains,
            env_params: config.env_params(),
            shape,
            weights: config.weights(),
            init: init_params(seed, config.m_channels, config.hidden_width),
            seed,
            eval_pu_seed: derive_seed(seed, PU_EVAL_TAG),
        })
    }

    pub fn training_env(&self) -> RadioEnv {
        RadioEnv::new(
            self.gains.clone(),
            self.env_params.clone(),
            derive_seed(self.seed, PU_TRAIN_TAG),
        )
    }

    pub fn agents(&self) -> Vec<AgentState> {
        (0..self.gains.n())
            .map(|id| AgentState::new(id, self.init.clone(), self.shape, self.seed))
            .collect()
    }

    /// One fixed-seed evaluation episode with the given per-agent policies
    /// driving. The PU draws and action streams are identical on every call,
    /// so two evaluations differ only through the parameters.
    pub fn evaluate(&self, per_agent: Vec<PolicyParams>, episode_len: usize) -> EvalSummary {
        let mut env = RadioEnv::new(
            self.gains.clone(),
            self.env_params.clone(),
            self.eval_pu_seed,
        );
        let mut agents: Vec<AgentState> = per_agent
            .into_iter()
            .enumerate()
            .map(|(id, params)| {
                AgentState::with_rng(
                    id,
                    params,
                    self.shape,
                    stream_rng(self.seed, Stream::EvalAction(id)),
                )
            })
            .collect();
        let (trajectories, joint) = run_episode(
            &mut agents,
            &mut env,
            episode_len,
            &self.weights,
            self.shape,
        );
        let joint_reward = joint.iter().sum::<f64>() / episode_len as f64;
        let per_agent_mean_reward = trajectories
            .iter()
            .map(|t| t.total_reward() / episode_len as f64)
            .sum::<f64>()
            / trajectories.len() as f64;
        EvalSummary {
            joint_reward,
            per_agent_mean_reward,
        }
    }
}

/// Uniformly random size-K subset of `0..n`, ids ascending.
pub(crate) fn random_subset(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// The federated regime: evaluate, select, broadcast, train, aggregate —
/// once per round.
fn run_fl(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>> {
    let setup = RunSetup::new(config, seed)?;
    let round_cfg = config.round_config()?;
    let train = config.train_params();
    let n = config.n_pairs;
    let k = round_cfg.participation;

    let mut env = setup.training_env();
    let mut agents = setup.agents();
    let mut global = GlobalModel {
        params: setup.init.clone(),
        round: 0,
    };
    let mut selection_rng = stream_rng(seed, Stream::Selection);
    let mut quant_rng = stream_rng(seed, Stream::Quantizer);
    let mut straggler_rng = stream_rng(seed, Stream::Straggler);
    let mut selector = if config.selector_enabled && k < n {
        let mut state = SelectorState::new(
            seed,
            n,
            config.selector_hidden,
            config.selector_lr,
            config.selector_gamma,
        );
        state.epsilon = config.epsilon_schedule();
        Some(state)
    } else {
        None
    };

    let mut records = Vec::with_capacity(config.rounds as usize);
    for round in 0..config.rounds {
        let eval = setup.evaluate(vec![global.params.clone(); n], config.eval_episode_len);

        let selected = if k == n {
            (0..n).collect()
        } else if let Some(state) = selector.as_mut() {
            let locals: Vec<&PolicyParams> = agents.iter().map(|a| a.params()).collect();
            state.begin_round(
                &locals,
                &global.params,
                round,
                config.rounds,
                eval.joint_reward,
                k,
                &mut selection_rng,
            )?
        } else {
            random_subset(n, k, &mut selection_rng)
        };

        let meta = RoundMeta {
            seed,
            regime: Regime::Fl,
            eval,
            extra_bytes: if round == 0 {
                payload_bytes(setup.init.len(), 0)
            } else {
                0
            },
        };
        let (next_global, record) = run_round(
            &global,
            &mut agents,
            &mut env,
            &selected,
            &round_cfg,
            train,
            setup.shape,
            config.p_drop,
            &mut quant_rng,
            &mut straggler_rng,
            &meta,
        )?;
        global = next_global;
        records.push(record);
    }
    Ok(records)
}

/// One (seed, regime) run.
pub fn run_single(
    config: &ExperimentConfig,
    seed: u64,
    regime: Regime,
) -> Result<Vec<MetricsRecord>> {
    match regime {
        Regime::Fl => run_fl(config, seed),
        Regime::Distributed => run_distributed(config, seed),
        Regime::Random => run_random_policy(config, seed),
    }
}

/// Execute every (regime, seed) combination in the config and write one CSV
/// to `out_path`. Runs execute in parallel but the file contents follow the
/// config order, so identical configs produce byte-identical files.
pub fn run_experiment(config: &ExperimentConfig, out_path: &Path) -> Result<PathBuf> {
    config.validate()?;
    let jobs: Vec<(Regime, u64)> = config
        .regimes
        .iter()
        .flat_map(|&regime| config.seeds.iter().map(move |&seed| (regime, seed)))
        .collect();

    let started = std::time::Instant::now();
    let results: Result<Vec<Vec<MetricsRecord>>> = jobs
        .par_iter()
        .map(|&(regime, seed)| run_single(config, seed, regime))
        .collect();
    let records: Vec<MetricsRecord> = results?.into_iter().flatten().collect();
    eprintln!(
        "ran {} rounds across {} runs in {} ms",
        records.len(),
        jobs.len(),
        started.elapsed().as_millis()
    );

    write_csv(out_path, &records)?;
    Ok(out_path.to_path_buf())
}

/// Summary statistics for one (regime, participation) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub regime: Regime,
    /// Participants per round; `None` for regimes without selection.
    pub participation: Option<usize>,
    pub seeds: usize,
    /// Median across seeds of the final-window mean joint reward.
    pub median_final_joint: f64,
    /// Interquartile range across seeds of the same statistic.
    pub iqr_final_joint: f64,
    /// Median across seeds of the per-seed total uplink bytes.
    pub median_total_bytes: f64,
}

/// Roll one or more metrics CSVs up into per-(regime, K) statistics over the
/// final window (the last 20% of rounds).
pub fn summarize(paths: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument(
            "summarize needs at least one CSV".into(),
        ));
    }
    let mut records = Vec::new();
    for path in paths {
        records.extend(read_csv(path)?);
    }

    use std::collections::BTreeMap;
    // (regime, participation, seed) -> rounds
    let mut groups: BTreeMap<(Regime, Option<usize>, u64), Vec<&MetricsRecord>> = BTreeMap::new();
    for record in &records {
        let participation = match record.regime {
            Regime::Fl => Some(record.selected.len()),
            _ => None,
        };
        groups
            .entry((record.regime, participation, record.seed))
            .or_default()
            .push(record);
    }

    let mut per_seed: BTreeMap<(Regime, Option<usize>), Vec<(f64, f64)>> = BTreeMap::new();
    for ((regime, participation, _seed), mut rows) in groups {
        rows.sort_by_key(|r| r.round);
        let window = ((rows.len() as f64 * 0.2).ceil() as usize).clamp(1, rows.len());
        let tail = &rows[rows.len() - window..];
        let final_mean = tail.iter().map(|r| r.joint_reward).sum::<f64>() / window as f64;
        let total_bytes: u64 = rows.iter().map(|r| r.bytes_uplinked).sum();
        per_seed
            .entry((regime, participation))
            .or_default()
            .push((final_mean, total_bytes as f64));
    }

    let rows = per_seed
        .into_iter()
        .map(|((regime, participation), stats)| {
            let finals: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let bytes: Vec<f64> = stats.iter().map(|s| s.1).collect();
            SummaryRow {
                regime,
                participation,
                seeds: stats.len(),
                median_final_joint: percentile(&finals, 0.5),
                iqr_final_joint: percentile(&finals, 0.75) - percentile(&finals, 0.25),
                median_total_bytes: percentile(&bytes, 0.5),
            }
        })
        .collect();
    Ok(rows)
}

/// Linear-interpolation percentile of an unsorted sample.
pub fn percentile(sample: &[f64], p: f64) -> f64 {
    assert!(!sample.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("sample must not contain NaN"));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Render summary rows as an aligned text table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("regime       K  seeds  median_final_joint  iqr      total_uplink_bytes\n");
    for row in rows {
        let k = row.participation.map_or("-".to_string(), |k| k.to_string());
        out.push_str(&format!(
            "{:<11} {:>2} {:>6}  {:>18.6} {:>8.6} {:>19.0}\n",
            row.regime.to_string(),
            k,
            row.seeds,
            row.median_final_joint,
            row.iqr_final_joint,
            row.median_total_bytes,
        ));
    }
    out
}
