//! The federated server: weighted aggregation of policy parameters, partial
//! participation, stochastic quantization of uploads, and the
//! broadcast/train/collect round loop.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{local_round, AgentState, TrainParams};
use crate::env::RadioEnv;
use crate::error::{Error, Result};
use crate::metrics::{EvalSummary, MetricsRecord, Regime};
use crate::policy::{PolicyParams, PolicyShape};

/// Per-round federation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    /// Local episodes between aggregations (E).
    pub episodes_per_round: usize,
    /// Number of participating agents per round (K).
    pub participation: usize,
    /// Quantization bits for uploads; 0 disables quantization.
    pub quant_bits: u8,
    /// Joint-reward weights, normalized to sum to 1.
    pub weights: Vec<f64>,
}

impl RoundConfig {
    /// Validate and normalize. `n_agents` bounds the participation count.
    pub fn new(
        episodes_per_round: usize,
        participation: usize,
        quant_bits: u8,
        weights: Vec<f64>,
        n_agents: usize,
    ) -> Result<RoundConfig> {
        if episodes_per_round == 0 {
            return Err(Error::InvalidArgument(
                "episodes_per_round must be >= 1".into(),
            ));
        }
        if participation == 0 || participation > n_agents {
            return Err(Error::InvalidArgument(format!(
                "participation must lie in 1..={n_agents}"
            )));
        }
        if quant_bits == 1 || quant_bits > 16 {
            return Err(Error::InvalidArgument(
                "quant_bits must be 0 (off) or in 2..=16".into(),
            ));
        }
        if weights.len() != n_agents {
            return Err(Error::LengthMismatch {
                expected: n_agents,
                got: weights.len(),
            });
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "weights must not all be zero".into(),
            ));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(RoundConfig {
            episodes_per_round,
            participation,
            quant_bits,
            weights,
        })
    }
}

/// What an agent sends back: its id, a parameter vector (possibly
/// quantized), and the number of samples behind it. Deliberately nothing
/// else — no observations, no rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub agent_id: usize,
    pub params: PolicyParams,
    pub sample_count: u64,
}

/// The server's model and round counter.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub params: PolicyParams,
    pub round: u64,
}

/// FedAvg: coordinatewise average weighted by sample counts. Equal counts
/// reduce to the plain mean. The sum is anchored at the first update (in
/// agent-id order) so that identical inputs return exactly that vector and
/// reordering the list cannot change the result.
pub fn aggregate(updates: &[LocalUpdate]) -> Result<PolicyParams> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    let len = first.params.len();
    for update in updates {
        if update.params.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: update.params.len(),
            });
        }
        if update.sample_count == 0 {
            return Err(Error::InvalidArgument("sample_count must be >= 1".into()));
        }
    }

    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| (updates[i].agent_id, i));

    let total: f64 = updates.iter().map(|u| u.sample_count as f64).sum();
    let anchor = &updates[order[0]].params.values;
    let mut result = anchor.clone();
    for &i in &order[1..] {
        let w = updates[i].sample_count as f64 / total;
        for (r, (v, a)) in result
            .iter_mut()
            .zip(updates[i].params.values.iter().zip(anchor))
        {
            *r += w * (v - a);
        }
    }

    // convex-combination envelope, coordinate by coordinate
    for (c, r) in result.iter_mut().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for update in updates {
            let v = update.params.values[c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        *r = r.clamp(lo, hi);
    }

    Ok(PolicyParams::from_vec(result))
}

/// Unbiased stochastic quantization: the vector's range is split into
/// `2^bits - 1` equal steps and each coordinate rounds to one of its two
/// bracketing levels, upward with probability proportional to the residual.
/// Every output level is a representable real, so dequantization is the
/// identity. A constant vector comes back unchanged.
pub fn quantize(v: &[f64], bits: u8, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "quantization bits must lie in 2..=16, got {bits}"
        )));
    }
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(
            "cannot quantize non-finite values".into(),
        ));
    }
    if lo == hi {
        return Ok(v.to_vec());
    }

    let steps = ((1u32 << bits) - 1) as f64;
    let step = (hi - lo) / steps;
    let out = v
        .iter()
        .map(|&x| {
            let k = ((x - lo) / step).floor().clamp(0.0, steps - 1.0);
            let lower = lo + k * step;
            let residual = ((x - lower) / step).clamp(0.0, 1.0);
            if residual == 0.0 {
                x
            } else if rng.gen::<f64>() < residual {
                lo + (k + 1.0) * step
            } else {
                lower
            }
        })
        .collect();
    Ok(out)
}

/// Uplink payload of one parameter vector: full-precision floats, or packed
/// levels plus the two range endpoints when quantized.
pub fn payload_bytes(param_len: usize, bits: u8) -> u64 {
    if bits == 0 {
        (param_len * 8) as u64
    } else {
        16 + (param_len * bits as usize).div_ceil(8) as u64
    }
}

/// Weighted joint reward `sum_n w[n] * rewards[n]`.
pub fn joint_reward(rewards: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(
        rewards.len(),
        weights.len(),
        "reward/weight length mismatch"
    );
    rewards.iter().zip(weights).map(|(r, w)| r * w).sum()
}

/// Identifying context for the metrics row a round emits.
#[derive(Debug, Clone)]
pub struct RoundMeta {
    pub seed: u64,
    pub regime: Regime,
    /// Evaluation of the current global model, measured before this round's
    /// training.
    pub eval: EvalSummary,
    /// Extra communication charged to this round (the initial model
    /// distribution on round 0).
    pub extra_bytes: u64,
}

/// One communication round: broadcast the global model to the selected
/// agents, let them train locally while everyone keeps transmitting,
/// collect the surviving (non-straggler) updates, optionally quantized, and
/// aggregate. Returns the next global model (round index incremented) and
/// the round's metrics row.
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    global: &GlobalModel,
    agents: &mut [AgentState],
    env: &mut RadioEnv,
    selected: &[usize],
    cfg: &RoundConfig,
    train: TrainParams,
    shape: PolicyShape,
    p_drop: f64,
    quant_rng: &mut ChaCha8Rng,
    straggler_rng: &mut ChaCha8Rng,
    meta: &RoundMeta,
) -> Result<(GlobalModel, MetricsRecord)> {
    assert_eq!(
        selected.len(),
        cfg.participation,
        "selected set size must equal K"
    );

    for &id in selected {
        agents[id].receive_params(global.params.clone());
    }

    let updates = local_round(
        agents,
        env,
        selected,
        cfg.episodes_per_round,
        train,
        &cfg.weights,
        shape,
    );

    let mut bytes = meta.extra_bytes;
    let mut collected = Vec::with_capacity(updates.len());
    for mut update in updates {
        if p_drop > 0.0 && straggler_rng.gen::<f64>() < p_drop {
            continue; // straggler: trained locally but never reported back
        }
        if cfg.quant_bits > 0 {
            update.params =
                PolicyParams::from_vec(quantize(&update.params.values, cfg.quant_bits, quant_rng)?);
        }
        bytes += payload_bytes(update.params.len(), cfg.quant_bits);
        collected.push(update);
    }

    let params = if collected.is_empty() {
        global.params.clone() // every participant dropped; the model stands
    } else {
        aggregate(&collected)?
    };

    let record = MetricsRecord {
        seed: meta.seed,
        regime: meta.regime,
        round: global.round,
        joint_reward: meta.eval.joint_reward,
        per_agent_mean_reward: meta.eval.per_agent_mean_reward,
        selected: selected.to_vec(),
        bytes_uplinked: bytes,
        wall_clock_ms: 0,
    };

    Ok((
        GlobalModel {
            params,
            round: global.round + 1,
        },
        record,
    ))
}

/// Checkpoint format: 8-byte little-endian round index, then the parameter
/// vector as little-endian 64-bit floats in layout order.
pub fn save_checkpoint(path: &Path, model: &GlobalModel) -> Result<()> {
    let mut bytes = model.round.to_le_bytes().to_vec();
    bytes.extend_from_slice(&model.params.to_le_bytes());
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GlobalModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::InvalidArgument("checkpoint too short".into()));
    }
    let round = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let params = PolicyParams::from_le_bytes(&bytes[8..])?;
    Ok(GlobalModel { params, round })
}
