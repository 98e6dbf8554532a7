//! Deep-Q client selection: pick K of N agents each communication cycle
//! using features of their model weights only, trained on the change in the
//! evaluated joint reward.
//!
//! The Q-network shares one subnetwork across agents: each agent's feature
//! block is encoded, the encodings are mean-pooled into a context, and a
//! second shared layer scores each (encoding, context) pair. Scoring is
//! therefore permutation-tied: swapping two agents' feature blocks swaps
//! their scores.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rng::{stream_rng, Stream};

/// Per-agent features visible to the server: weight-delta norm, alignment
/// with the previous global update, and staleness. Never observations or
/// rewards.
pub const AGENT_FEATURES: usize = 3;

/// What the selector sees: one feature block per agent plus the round index,
/// all derived from parameter vectors and counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorObservation {
    per_agent: Vec<[f64; AGENT_FEATURES]>,
    round_frac: f64,
}

impl SelectorObservation {
    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn agent_features(&self, agent: usize) -> &[f64; AGENT_FEATURES] {
        &self.per_agent[agent]
    }

    pub fn round_frac(&self) -> f64 {
        self.round_frac
    }

    /// Swap two agents' feature blocks (used by the permutation tests).
    pub fn swap_agents(&mut self, a: usize, b: usize) {
        self.per_agent.swap(a, b);
    }

    /// Build the observation from model weights and counters. The signature
    /// is the privacy contract: nothing trajectory-shaped can reach the
    /// selector through it.
    pub fn build(
        locals: &[&PolicyParams],
        global: &PolicyParams,
        prev_update_dir: Option<&[f64]>,
        rounds_since_selected: &[u64],
        round: u64,
        total_rounds: u64,
    ) -> SelectorObservation {
        assert_eq!(locals.len(), rounds_since_selected.len());
        let per_agent = locals
            .iter()
            .zip(rounds_since_selected)
            .map(|(local, &since)| {
                let delta: Vec<f64> = local
                    .values
                    .iter()
                    .zip(&global.values)
                    .map(|(l, g)| l - g)
                    .collect();
                let norm = l2(&delta);
                let cos = match prev_update_dir {
                    Some(dir) => cosine(&delta, dir),
                    None => 0.0,
                };
                let staleness = since as f64 / (round + 1) as f64;
                [norm, cos, staleness]
            })
            .collect();
        let round_frac = round as f64 / total_rounds.max(1) as f64;
        SelectorObservation {
            per_agent,
            round_frac,
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2(a), l2(b));
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Dimensions of the selector network for N agents and encoder width D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QNetShape {
    pub n_agents: usize,
    pub hidden: usize,
}

impl QNetShape {
    /// Per-agent input: the feature block plus the round fraction.
    pub fn input_width(&self) -> usize {
        AGENT_FEATURES + 1
    }

    pub fn len(&self) -> usize {
        let (f, d) = (self.input_width(), self.hidden);
        d * f + d + d * 2 * d + d + d + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn w1_at(&self) -> usize {
        0
    }

    fn b1_at(&self) -> usize {
        self.hidden * self.input_width()
    }

    fn w2_at(&self) -> usize {
        self.b1_at() + self.hidden
    }

    fn b2_at(&self) -> usize {
        self.w2_at() + self.hidden * 2 * self.hidden
    }

    fn w3_at(&self) -> usize {
        self.b2_at() + self.hidden
    }

    fn b3_at(&self) -> usize {
        self.w3_at() + self.hidden
    }
}

/// Flat parameters of the selector network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub values: Vec<f64>,
}

impl QNet {
    pub fn zeros(shape: QNetShape) -> QNet {
        QNet {
            values: vec![0.0; shape.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weights uniform in [-0.1, 0.1], biases zero.
pub fn init_qnet(seed: u64, shape: QNetShape) -> QNet {
    let mut rng = stream_rng(seed, Stream::QNetInit);
    let mut values = vec![0.0; shape.len()];
    let weight_ranges = [
        shape.w1_at()..shape.b1_at(),
        shape.w2_at()..shape.b2_at(),
        shape.w3_at()..shape.b3_at(),
    ];
    for range in weight_ranges {
        for v in &mut values[range] {
            *v = rng.gen::<f64>() * 0.2 - 0.1;
        }
    }
    QNet { values }
}

struct QForward {
    z1: Vec<Vec<f64>>, // pre-activations, per agent
    u: Vec<Vec<f64>>,  // encodings
    pooled: Vec<f64>,
    z2: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    scores: Vec<f64>,
}

fn q_forward(qnet: &QNet, shape: QNetShape, obs: &SelectorObservation) -> QForward {
    assert_eq!(
        obs.n_agents(),
        shape.n_agents,
        "observation/network agent count mismatch"
    );
    assert_eq!(qnet.len(), shape.len(), "qnet parameter length mismatch");
    let p = &qnet.values;
    let (f, d, n) = (shape.input_width(), shape.hidden, shape.n_agents);

    let mut z1: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut input = [0.0; AGENT_FEATURES + 1];
        input[..AGENT_FEATURES].copy_from_slice(obs.agent_features(i));
        input[AGENT_FEATURES] = obs.round_frac();
        let mut z = vec![0.0; d];
        for j in 0..d {
            let mut acc = p[shape.b1_at() + j];
            for (k, x) in input.iter().enumerate().take(f) {
                acc += p[shape.w1_at() + j * f + k] * x;
            }
            z[j] = acc;
        }
        u.push(z.iter().map(|&x| x.max(0.0)).collect());
        z1.push(z);
    }

    let mut pooled = vec![0.0; d];
    for enc in &u {
        for (s, e) in pooled.iter_mut().zip(enc) {
            *s += e;
        }
    }
    pooled.iter_mut().for_each(|s| *s /= n as f64);

    let mut z2 = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = vec![0.0; d];
        for j in 0..d {
            let mut acc = p[shape.b2_at() + j];
            let row = shape.w2_at() + j * 2 * d;
            for k in 0..d {
                acc += p[row + k] * u[i][k];
                acc += p[row + d + k] * pooled[k];
            }
            z[j] = acc;
        }
        let vi: Vec<f64> = z.iter().map(|&x| x.max(0.0)).collect();
        let mut s = p[shape.b3_at()];
        for k in 0..d {
            s += p[shape.w3_at() + k] * vi[k];
        }
        z2.push(z);
        v.push(vi);
        scores.push(s);
    }

    QForward {
        z1,
        u,
        pooled,
        z2,
        v,
        scores,
    }
}

/// Per-agent Q-scores for the current observation. Deterministic.
pub fn score_agents(qnet: &QNet, shape: QNetShape, obs: &SelectorObservation) -> Vec<f64> {
    q_forward(qnet, shape, obs).scores
}

/// Pick K agents: with probability `1 - epsilon` the K highest scores (ties
/// broken toward the lowest agent id), otherwise a uniformly random size-K
/// subset. The returned ids are sorted ascending.
pub fn select_top_k(
    scores: &[f64],
    k: usize,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "K must lie in 1..={n}, got {k}"
        )));
    }
    let explore = if epsilon <= 0.0 {
        false
    } else if epsilon >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < epsilon
    };

    let mut chosen: Vec<usize> = if explore {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    } else {
        let mut ids: Vec<usize> = (0..n).collect();
        ids.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores must be comparable")
                .then(a.cmp(&b))
        });
        ids.truncate(k);
        ids
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Improvement of the evaluated joint reward across a round.
pub fn selector_reward(joint_reward_after: f64, joint_reward_before: f64) -> f64 {
    joint_reward_after - joint_reward_before
}

/// One selection outcome awaiting its temporal-difference update.
#[derive(Debug, Clone)]
pub struct Transition {
    pub observation: SelectorObservation,
    pub selected: Vec<usize>,
    pub reward: f64,
    pub next_observation: SelectorObservation,
}

/// The shared TD target: `reward / K + gamma_q * mean(top-K next scores)`.
fn td_target(qnet: &QNet, shape: QNetShape, transition: &Transition, gamma_q: f64) -> f64 {
    let k = transition.selected.len();
    let mut next_scores = score_agents(qnet, shape, &transition.next_observation);
    next_scores.sort_by(|a, b| b.partial_cmp(a).expect("scores must be comparable"));
    let top_k_mean: f64 = next_scores[..k].iter().sum::<f64>() / k as f64;
    transition.reward / k as f64 + gamma_q * top_k_mean
}

fn td_loss_grad(
    qnet: &QNet,
    shape: QNetShape,
    obs: &SelectorObservation,
    selected: &[usize],
    y: f64,
) -> Vec<f64> {
    let fwd = q_forward(qnet, shape, obs);
    let p = &qnet.values;
    let (f, d, n) = (shape.input_width(), shape.hidden, shape.n_agents);
    let mut grad = vec![0.0; shape.len()];

    let mut dscore = vec![0.0; n];
    for &i in selected {
        dscore[i] = fwd.scores[i] - y;
    }

    // head and second layer; pooled contributions accumulate across agents
    let mut dpooled = vec![0.0; d];
    let mut du: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
    for i in 0..n {
        if dscore[i] == 0.0 {
            continue;
        }
        grad[shape.b3_at()] += dscore[i];
        let mut dv = vec![0.0; d];
        for k in 0..d {
            grad[shape.w3_at() + k] += dscore[i] * fwd.v[i][k];
            dv[k] = dscore[i] * p[shape.w3_at() + k];
        }
        for j in 0..d {
            if fwd.z2[i][j] <= 0.0 {
                continue;
            }
            let dz = dv[j];
            grad[shape.b2_at() + j] += dz;
            let row = shape.w2_at() + j * 2 * d;
            for k in 0..d {
                grad[row + k] += dz * fwd.u[i][k];
                grad[row + d + k] += dz * fwd.pooled[k];
                du[i][k] += dz * p[row + k];
                dpooled[k] += dz * p[row + d + k];
            }
        }
    }

    // mean pool spreads its gradient over every agent
    for enc_grad in du.iter_mut() {
        for (g, dp) in enc_grad.iter_mut().zip(&dpooled) {
            *g += dp / n as f64;
        }
    }

    for i in 0..n {
        let mut input = [0.0; AGENT_FEATURES + 1];
        input[..AGENT_FEATURES].copy_from_slice(obs.agent_features(i));
        input[AGENT_FEATURES] = obs.round_frac();
        for j in 0..d {
            if fwd.z1[i][j] <= 0.0 {
                continue;
            }
            let dz = du[i][j];
            if dz == 0.0 {
                continue;
            }
            grad[shape.b1_at() + j] += dz;
            for (k, x) in input.iter().enumerate().take(f) {
                grad[shape.w1_at() + j * f + k] += dz * x;
            }
        }
    }

    grad
}

/// One temporal-difference step on the decomposed selection objective. The
/// selected agents' Q-values regress toward the shared target; the target is
/// frozen during the step.
pub fn q_update(
    qnet: &QNet,
    shape: QNetShape,
    transition: &Transition,
    lr: f64,
    gamma_q: f64,
) -> QNet {
    let y = td_target(qnet, shape, transition, gamma_q);
    let grad = td_loss_grad(
        qnet,
        shape,
        &transition.observation,
        &transition.selected,
        y,
    );
    let values = qnet
        .values
        .iter()
        .zip(&grad)
        .map(|(q, g)| q - lr * g)
        .collect();
    QNet { values }
}

/// Linear epsilon decay over the first `decay_rounds` rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_rounds: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_rounds: 100,
        }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, round: u64) -> f64 {
        if round >= self.decay_rounds {
            self.end
        } else {
            let frac = round as f64 / self.decay_rounds as f64;
            self.start + (self.end - self.start) * frac
        }
    }
}

/// Server-side selector: the Q-network plus the counters and previous-round
/// context its features need.
#[derive(Debug, Clone)]
pub struct SelectorState {
    pub qnet: QNet,
    pub shape: QNetShape,
    pub lr: f64,
    pub gamma_q: f64,
    pub epsilon: EpsilonSchedule,
    rounds_since_selected: Vec<u64>,
    prev_global: Option<Vec<f64>>,
    prev_update_dir: Option<Vec<f64>>,
    pending: Option<(SelectorObservation, Vec<usize>)>,
    prev_eval: Option<f64>,
}

impl SelectorState {
    pub fn new(seed: u64, n_agents: usize, hidden: usize, lr: f64, gamma_q: f64) -> SelectorState {
        let shape = QNetShape { n_agents, hidden };
        SelectorState {
            qnet: init_qnet(seed, shape),
            shape,
            lr,
            gamma_q,
            epsilon: EpsilonSchedule::default(),
            rounds_since_selected: vec![0; n_agents],
            prev_global: None,
            prev_update_dir: None,
            pending: None,
            prev_eval: None,
        }
    }

    /// Called once per round, before broadcasting: finishes the previous
    /// round's TD transition with the fresh evaluation, then scores and
    /// selects for this round.
    #[allow(clippy::too_many_arguments)]
    pub fn begin_round(
        &mut self,
        locals: &[&PolicyParams],
        global: &PolicyParams,
        round: u64,
        total_rounds: u64,
        eval_joint: f64,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<usize>> {
        if let Some(prev) = &self.prev_global {
            let dir: Vec<f64> = global.values.iter().zip(prev).map(|(g, p)| g - p).collect();
            if l2(&dir) > 1e-12 {
                self.prev_update_dir = Some(dir);
            }
        }
        self.prev_global = Some(global.values.clone());

        let obs = SelectorObservation::build(
            locals,
            global,
            self.prev_update_dir.as_deref(),
            &self.rounds_since_selected,
            round,
            total_rounds,
        );

        if let (Some((prev_obs, prev_selected)), Some(prev_eval)) =
            (self.pending.take(), self.prev_eval)
        {
            let transition = Transition {
                observation: prev_obs,
                selected: prev_selected,
                reward: selector_reward(eval_joint, prev_eval),
                next_observation: obs.clone(),
            };
            self.qnet = q_update(&self.qnet, self.shape, &transition, self.lr, self.gamma_q);
        }

        let scores = score_agents(&self.qnet, self.shape, &obs);
        let selected = select_top_k(&scores, k, self.epsilon.value(round), rng)?;

        for (id, since) in self.rounds_since_selected.iter_mut().enumerate() {
            if selected.contains(&id) {
                *since = 0;
            } else {
                *since += 1;
            }
        }
        self.pending = Some((obs, selected.clone()));
        self.prev_eval = Some(eval_joint);
        Ok(selected)
    }
}
