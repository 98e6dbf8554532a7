//! Recurrent softmax policy, built from scratch: forward pass, action
//! sampling, and REINFORCE gradients via backpropagation through time.
//!
//! The network is a single-layer tanh RNN. Parameters live in one flat
//! vector whose layout is fixed by [`PolicyShape`]:
//! input->hidden weights, hidden->hidden weights, hidden bias,
//! hidden->output weights, output bias.

use rand::Rng;

use crate::agent::Trajectory;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Dimensions of the policy network for M channels and hidden width H.
/// The input is an observation of width 3M+2; the output is a distribution
/// over M+1 actions (each channel, plus idle).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub m_channels: usize,
    pub hidden_width: usize,
}

impl PolicyShape {
    pub fn new(m_channels: usize, hidden_width: usize) -> PolicyShape {
        assert!(m_channels >= 1 && hidden_width >= 1);
        PolicyShape {
            m_channels,
            hidden_width,
        }
    }

    pub fn input_width(&self) -> usize {
        3 * self.m_channels + 2
    }

    pub fn output_width(&self) -> usize {
        self.m_channels + 1
    }

    /// Total number of parameters.
    pub fn len(&self) -> usize {
        let (i, h, o) = (self.input_width(), self.hidden_width, self.output_width());
        i * h + h * h + h + h * o + o
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn w_in_at(&self) -> usize {
        0
    }

    fn w_rec_at(&self) -> usize {
        self.input_width() * self.hidden_width
    }

    fn b_h_at(&self) -> usize {
        self.w_rec_at() + self.hidden_width * self.hidden_width
    }

    fn w_out_at(&self) -> usize {
        self.b_h_at() + self.hidden_width
    }

    fn b_out_at(&self) -> usize {
        self.w_out_at() + self.hidden_width * self.output_width()
    }
}

/// Flat parameter vector of one policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: PolicyShape) -> PolicyParams {
        PolicyParams {
            values: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> PolicyParams {
        PolicyParams { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Little-endian 64-bit floats in layout order.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<PolicyParams> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::InvalidArgument(format!(
                "parameter byte length {} is not a multiple of 8",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(PolicyParams { values })
    }
}

/// Hidden activation vector; entries stay in [-1, 1] under the tanh
/// recurrence.
pub type HiddenState = Vec<f64>;

/// Weights uniform in [-0.1, 0.1], biases zero. Deterministic in `seed`.
pub fn init_params(seed: u64, m_channels: usize, hidden_width: usize) -> PolicyParams {
    let shape = PolicyShape::new(m_channels, hidden_width);
    let mut rng = stream_rng(seed, Stream::PolicyInit);
    let mut values = vec![0.0; shape.len()];
    let weight_ranges = [
        shape.w_in_at()..shape.w_rec_at(),
        shape.w_rec_at()..shape.b_h_at(),
        shape.w_out_at()..shape.b_out_at(),
    ];
    for range in weight_ranges {
        for v in &mut values[range] {
            *v = rng.gen::<f64>() * 0.2 - 0.1;
        }
    }
    PolicyParams { values }
}

/// One recurrence step: returns the action distribution and the next hidden
/// state. `h' = tanh(W_in x + W_rec h + b_h)`, `probs = softmax(W_out h' + b_out)`.
pub fn forward(
    params: &PolicyParams,
    shape: PolicyShape,
    obs: &[f64],
    hidden: &[f64],
) -> (Vec<f64>, HiddenState) {
    assert_eq!(obs.len(), shape.input_width(), "observation width mismatch");
    assert_eq!(hidden.len(), shape.hidden_width, "hidden width mismatch");
    assert_eq!(params.len(), shape.len(), "parameter length mismatch");

    let p = &params.values;
    let (iw, h, ow) = (
        shape.input_width(),
        shape.hidden_width,
        shape.output_width(),
    );

    let mut next_hidden = vec![0.0; h];
    for j in 0..h {
        let mut z = p[shape.b_h_at() + j];
        let w_in_row = &p[shape.w_in_at() + j * iw..shape.w_in_at() + (j + 1) * iw];
        for (w, x) in w_in_row.iter().zip(obs) {
            z += w * x;
        }
        let w_rec_row = &p[shape.w_rec_at() + j * h..shape.w_rec_at() + (j + 1) * h];
        for (w, x) in w_rec_row.iter().zip(hidden) {
            z += w * x;
        }
        next_hidden[j] = z.tanh();
    }

    let mut logits = vec![0.0; ow];
    for o in 0..ow {
        let mut z = p[shape.b_out_at() + o];
        let w_out_row = &p[shape.w_out_at() + o * h..shape.w_out_at() + (o + 1) * h];
        for (w, x) in w_out_row.iter().zip(&next_hidden) {
            z += w * x;
        }
        logits[o] = z;
    }

    (softmax(&logits), next_hidden)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Single categorical draw from `probs`. Deterministic given the generator
/// state.
pub fn sample_action<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// REINFORCE gradient of the discounted objective for one episode:
/// `sum_t G_t * grad log pi(a_t | o_1..t)` with `G_t = sum_{k>=t} gamma^(k-t) r_k`,
/// computed by backpropagation through time.
pub fn logprob_grad(
    params: &PolicyParams,
    shape: PolicyShape,
    trajectory: &Trajectory,
    gamma: f64,
) -> Vec<f64> {
    let steps = &trajectory.steps;
    assert!(!steps.is_empty(), "trajectory must be nonempty");
    let (iw, h, ow) = (
        shape.input_width(),
        shape.hidden_width,
        shape.output_width(),
    );
    let p = &params.values;

    // Forward pass, recording hidden states and action distributions.
    let mut hiddens: Vec<HiddenState> = Vec::with_capacity(steps.len() + 1);
    hiddens.push(vec![0.0; h]);
    let mut probs_per_step: Vec<Vec<f64>> = Vec::with_capacity(steps.len());
    for step in steps {
        let (probs, next_hidden) = forward(
            params,
            shape,
            &step.observation.features,
            hiddens.last().unwrap(),
        );
        probs_per_step.push(probs);
        hiddens.push(next_hidden);
    }

    // Discounted returns-to-go.
    let mut returns = vec![0.0; steps.len()];
    let mut acc = 0.0;
    for (t, step) in steps.iter().enumerate().rev() {
        acc = step.reward + gamma * acc;
        returns[t] = acc;
    }

    // Backward pass.
    let mut grad = vec![0.0; shape.len()];
    let mut carry = vec![0.0; h]; // W_rec^T dz from the step after t
    for t in (0..steps.len()).rev() {
        let probs = &probs_per_step[t];
        let action = steps[t].action;
        assert!(action < ow, "action index out of range");
        let h_t = &hiddens[t + 1];
        let h_prev = &hiddens[t];
        let x_t = &steps[t].observation.features;

        let mut dlogits = vec![0.0; ow];
        for o in 0..ow {
            let onehot = if o == action { 1.0 } else { 0.0 };
            dlogits[o] = returns[t] * (onehot - probs[o]);
        }

        let mut dh = vec![0.0; h];
        for o in 0..ow {
            grad[shape.b_out_at() + o] += dlogits[o];
            for j in 0..h {
                grad[shape.w_out_at() + o * h + j] += dlogits[o] * h_t[j];
                dh[j] += p[shape.w_out_at() + o * h + j] * dlogits[o];
            }
        }
        for (j, c) in carry.iter().enumerate() {
            dh[j] += c;
        }

        let mut dz = vec![0.0; h];
        for j in 0..h {
            dz[j] = dh[j] * (1.0 - h_t[j] * h_t[j]);
        }

        for j in 0..h {
            grad[shape.b_h_at() + j] += dz[j];
            for k in 0..iw {
                grad[shape.w_in_at() + j * iw + k] += dz[j] * x_t[k];
            }
            for k in 0..h {
                grad[shape.w_rec_at() + j * h + k] += dz[j] * h_prev[k];
            }
        }

        let mut next_carry = vec![0.0; h];
        for k in 0..h {
            let mut s = 0.0;
            for j in 0..h {
                s += p[shape.w_rec_at() + j * h + k] * dz[j];
            }
            next_carry[k] = s;
        }
        carry = next_carry;
    }

    grad
}
