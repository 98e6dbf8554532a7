//! The radio environment: topology, channel gains, primary-user occupancy,
//! SINR, and channel-capacity rewards.
//!
//! Secondary-user pairs share M channels. Each timestep every agent either
//! idles or transmits on one channel; co-channel transmitters interfere at
//! each other's receivers. Channels occupied by a primary user are off
//! limits: a secondary user attempting one is suppressed (no transmission,
//! zero reward) rather than penalized.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform_hash, Stream};

/// A point in the deployment area, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// One transmitter/receiver pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPair {
    pub tx: Point,
    pub rx: Point,
}

/// Positions of all pairs inside a square area.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub area_side: f64,
    pub pairs: Vec<LinkPair>,
}

impl Topology {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Log-distance pathloss model. Distances below `d_ref` are clamped to
/// `d_ref`, so the gain never exceeds `g0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pathloss {
    /// Pathloss exponent.
    pub exponent: f64,
    /// Reference distance in meters.
    pub d_ref: f64,
    /// Gain at the reference distance (linear).
    pub g0: f64,
}

impl Default for Pathloss {
    fn default() -> Self {
        Pathloss {
            exponent: 3.0,
            d_ref: 1.0,
            g0: 1e-3,
        }
    }
}

impl Pathloss {
    /// Linear power gain over `distance` meters. Strictly decreasing beyond
    /// `d_ref`.
    ///
    /// Panics on a nonpositive distance.
    pub fn gain(&self, distance: f64) -> f64 {
        assert!(distance > 0.0, "pathloss distance must be positive");
        let d = distance.max(self.d_ref);
        self.g0 * (self.d_ref / d).powf(self.exponent)
    }
}

/// N x N matrix of linear gains; `gain(i, j)` is the gain from transmitter j
/// to receiver i.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    n: usize,
    g: Vec<f64>,
}

impl GainMatrix {
    pub fn from_topology(topology: &Topology, pathloss: &Pathloss) -> GainMatrix {
        let n = topology.n_pairs();
        let mut g = Vec::with_capacity(n * n);
        for rx_pair in &topology.pairs {
            for tx_pair in &topology.pairs {
                g.push(pathloss.gain(tx_pair.tx.distance(&rx_pair.rx)));
            }
        }
        GainMatrix { n, g }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gain(&self, rx: usize, tx: usize) -> f64 {
        self.g[rx * self.n + tx]
    }

    #[cfg(test)]
    pub(crate) fn from_raw(n: usize, g: Vec<f64>) -> GainMatrix {
        assert_eq!(g.len(), n * n);
        GainMatrix { n, g }
    }
}

/// Primary-user occupancy flags for one timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuOccupancy {
    pub occupied: Vec<bool>,
}

impl PuOccupancy {
    pub fn clear(m_channels: usize) -> PuOccupancy {
        PuOccupancy {
            occupied: vec![false; m_channels],
        }
    }
}

/// One agent's action: idle, or transmit on a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Idle,
    Transmit(usize),
}

impl Action {
    /// Policy output index for this action: channels map to their own index,
    /// idle maps to index `m_channels`.
    pub fn to_index(self, m_channels: usize) -> usize {
        match self {
            Action::Transmit(c) => c,
            Action::Idle => m_channels,
        }
    }

    /// Inverse of [`Action::to_index`].
    pub fn from_index(index: usize, m_channels: usize) -> Action {
        if index == m_channels {
            Action::Idle
        } else {
            debug_assert!(index < m_channels);
            Action::Transmit(index)
        }
    }
}

/// Actions of all agents for one timestep.
pub type JointAction = Vec<Action>;

/// What one agent sees after a step: one-hot of its own last action (M+1),
/// per-channel interference-plus-noise at its receiver on a log scale (M),
/// the previous step's PU flags (M), and its own last reward (1).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature vector length for `m_channels`.
    pub fn width(m_channels: usize) -> usize {
        3 * m_channels + 2
    }
}

const LOG_POWER_CLIP: f64 = 40.0;
const PLACEMENT_ATTEMPTS: usize = 10_000;

/// Place `n_pairs` transmitter/receiver pairs uniformly in a square of side
/// `area_side`, with each pair's separation drawn uniformly from
/// `[d_min, d_max]`. Deterministic in `seed`.
pub fn place_pairs(
    seed: u64,
    n_pairs: usize,
    area_side: f64,
    d_min: f64,
    d_max: f64,
) -> Result<Topology> {
    place_pairs_with_attempts(seed, n_pairs, area_side, d_min, d_max, PLACEMENT_ATTEMPTS)
}

fn place_pairs_with_attempts(
    seed: u64,
    n_pairs: usize,
    area_side: f64,
    d_min: f64,
    d_max: f64,
    max_attempts: usize,
) -> Result<Topology> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
    }
    if !(area_side.is_finite() && area_side > 0.0) {
        return Err(Error::InvalidArgument("area_side must be positive".into()));
    }
    if !(d_min.is_finite() && d_min > 0.0) || d_min > d_max || d_max > area_side {
        return Err(Error::InvalidArgument(
            "distance band must satisfy 0 < d_min <= d_max <= area_side".into(),
        ));
    }

    let mut rng = stream_rng(seed, Stream::Topology);
    let mut pairs = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        pairs.push(place_one(&mut rng, area_side, d_min, d_max, max_attempts)?);
    }
    Ok(Topology { area_side, pairs })
}

fn place_one(
    rng: &mut ChaCha8Rng,
    area_side: f64,
    d_min: f64,
    d_max: f64,
    max_attempts: usize,
) -> Result<LinkPair> {
    for _ in 0..max_attempts {
        let tx = Point {
            x: rng.gen::<f64>() * area_side,
            y: rng.gen::<f64>() * area_side,
        };
        let d = d_min + rng.gen::<f64>() * (d_max - d_min);
        let theta = rng.gen::<f64>() * std::f64::consts::TAU;
        let rx = Point {
            x: tx.x + d * theta.cos(),
            y: tx.y + d * theta.sin(),
        };
        let in_bounds = rx.x >= 0.0 && rx.x <= area_side && rx.y >= 0.0 && rx.y <= area_side;
        if in_bounds {
            return Ok(LinkPair { tx, rx });
        }
    }
    Err(Error::PlacementFailed {
        attempts: max_attempts,
    })
}

/// PU occupancy for one timestep: each channel is occupied independently
/// with probability `duty`, held constant over blocks of `block_len`
/// consecutive timesteps (a sojourn; `block_len = 1` gives per-step i.i.d.
/// draws). Random access in `timestep`, deterministic in `(seed, timestep)`.
pub fn pu_process(
    seed: u64,
    timestep: u64,
    m_channels: usize,
    duty: f64,
    block_len: u64,
) -> PuOccupancy {
    assert!((0.0..=1.0).contains(&duty), "duty must lie in [0, 1]");
    assert!(block_len >= 1, "block_len must be at least 1");
    let block = timestep / block_len;
    let occupied = (0..m_channels)
        .map(|c| uniform_hash(seed, block, c as u64) < duty)
        .collect();
    PuOccupancy { occupied }
}

/// SINR at agent `i`'s receiver given the joint action. Interference comes
/// exactly from the other agents transmitting on the same channel.
///
/// Panics if agent `i` is idle; callers must branch before calling.
pub fn sinr(
    agent_i: usize,
    joint: &[Action],
    gains: &GainMatrix,
    tx_power: f64,
    noise_power: f64,
) -> f64 {
    assert!(tx_power > 0.0 && noise_power > 0.0);
    let channel = match joint[agent_i] {
        Action::Transmit(c) => c,
        Action::Idle => panic!("sinr called for an idle agent"),
    };
    let signal = tx_power * gains.gain(agent_i, agent_i);
    let mut interference = 0.0;
    for (j, action) in joint.iter().enumerate() {
        if j != agent_i && *action == Action::Transmit(channel) {
            interference += tx_power * gains.gain(agent_i, j);
        }
    }
    signal / (noise_power + interference)
}

/// Channel capacity in bits/s/Hz with bandwidth normalized to 1.
///
/// Panics on a negative SINR.
pub fn capacity_reward(sinr_value: f64) -> f64 {
    assert!(sinr_value >= 0.0, "SINR must be nonnegative");
    (1.0 + sinr_value).log2()
}

/// Advance the environment one timestep: idle agents earn 0, agents on a
/// PU-occupied channel are suppressed (0 reward, no interference), everyone
/// else earns the capacity of their SINR. Pure in all inputs.
///
/// `pu_power` is the incumbent's received power on an occupied channel; it
/// never enters any SU's SINR (secondaries are barred from those channels)
/// but it is audible in the measured per-channel powers.
pub fn step(
    gains: &GainMatrix,
    pu: &PuOccupancy,
    joint: &[Action],
    tx_power: f64,
    noise_power: f64,
    pu_power: f64,
) -> (Vec<f64>, Vec<Observation>) {
    let n = gains.n();
    let m = pu.occupied.len();
    assert_eq!(joint.len(), n, "joint action length must match pair count");
    for action in joint {
        if let Action::Transmit(c) = action {
            assert!(*c < m, "channel index out of range");
        }
    }

    // Transmissions on PU-occupied channels never go on air.
    let effective: Vec<Action> = joint
        .iter()
        .map(|a| match a {
            Action::Transmit(c) if pu.occupied[*c] => Action::Idle,
            other => *other,
        })
        .collect();

    let rewards: Vec<f64> = (0..n)
        .map(|i| match effective[i] {
            Action::Idle => 0.0,
            Action::Transmit(_) => {
                capacity_reward(sinr(i, &effective, gains, tx_power, noise_power))
            }
        })
        .collect();

    let observations = (0..n)
        .map(|i| {
            build_observation(
                i,
                joint[i],
                &effective,
                gains,
                pu,
                tx_power,
                noise_power,
                pu_power,
                rewards[i],
            )
        })
        .collect();

    (rewards, observations)
}

/// The observation reflects the post-action interference field: the one-hot
/// encodes the action the agent chose (not its suppressed form), while the
/// measured powers come from what actually went on air.
#[allow(clippy::too_many_arguments)]
fn build_observation(
    agent_i: usize,
    own_action: Action,
    effective: &[Action],
    gains: &GainMatrix,
    pu: &PuOccupancy,
    tx_power: f64,
    noise_power: f64,
    pu_power: f64,
    own_reward: f64,
) -> Observation {
    let m = pu.occupied.len();
    let mut features = Vec::with_capacity(Observation::width(m));

    let mut one_hot = vec![0.0; m + 1];
    one_hot[own_action.to_index(m)] = 1.0;
    features.extend_from_slice(&one_hot);

    for c in 0..m {
        let mut power = noise_power;
        if pu.occupied[c] {
            power += pu_power;
        }
        for (j, action) in effective.iter().enumerate() {
            if j != agent_i && *action == Action::Transmit(c) {
                power += tx_power * gains.gain(agent_i, j);
            }
        }
        // log relative to the noise floor, clipped
        let scaled = (power / noise_power).log10();
        features.push(scaled.clamp(-LOG_POWER_CLIP, LOG_POWER_CLIP));
    }

    for c in 0..m {
        features.push(if pu.occupied[c] { 1.0 } else { 0.0 });
    }
    features.push(own_reward);

    Observation { features }
}

/// Environment configuration shared by training and evaluation instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub m_channels: usize,
    pub tx_power: f64,
    pub noise_power: f64,
    pub pu_duty: f64,
    /// PU sojourn length in timesteps (1 = i.i.d. per step).
    pub pu_block_len: u64,
    /// Received incumbent power on an occupied channel.
    pub pu_power: f64,
}

/// A stateful wrapper that ties the pure [`step`] to a PU process and a
/// monotonically advancing timestep.
#[derive(Debug, Clone)]
pub struct RadioEnv {
    pub gains: GainMatrix,
    pub params: EnvParams,
    pu_seed: u64,
    timestep: u64,
}

impl RadioEnv {
    pub fn new(gains: GainMatrix, params: EnvParams, pu_seed: u64) -> RadioEnv {
        RadioEnv {
            gains,
            params,
            pu_seed,
            timestep: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.gains.n()
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// Observations for the first decision of an episode: last action idle,
    /// noise-floor measurements, the previous timestep's PU flags, reward 0.
    pub fn initial_observations(&self) -> Vec<Observation> {
        let m = self.params.m_channels;
        let pu = if self.timestep == 0 {
            PuOccupancy::clear(m)
        } else {
            pu_process(
                self.pu_seed,
                self.timestep - 1,
                m,
                self.params.pu_duty,
                self.params.pu_block_len,
            )
        };
        let idle = vec![Action::Idle; self.n_agents()];
        (0..self.n_agents())
            .map(|i| {
                build_observation(
                    i,
                    Action::Idle,
                    &idle,
                    &self.gains,
                    &pu,
                    self.params.tx_power,
                    self.params.noise_power,
                    self.params.pu_power,
                    0.0,
                )
            })
            .collect()
    }

    /// Apply the joint action at the current timestep and advance the clock.
    pub fn step(&mut self, joint: &[Action]) -> (Vec<f64>, Vec<Observation>) {
        let pu = pu_process(
            self.pu_seed,
            self.timestep,
            self.params.m_channels,
            self.params.pu_duty,
            self.params.pu_block_len,
        );
        let out = step(
            &self.gains,
            &pu,
            joint,
            self.params.tx_power,
            self.params.noise_power,
            self.params.pu_power,
        );
        self.timestep += 1;
        out
    }
}
