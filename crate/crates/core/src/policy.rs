//! Factorized categorical policy over grounding responses.
//!
//! A single tanh hidden layer feeds five independent softmax heads: four
//! coordinate heads with `G` bins each (x1, y1, x2, y2) and a two-way format
//! head. The joint log-probability of a response is the sum of the five head
//! log-probabilities, so everything is exact and the gradients are derived by
//! hand below.
//!
//! All parameters live in one flat buffer; gradients use the same type.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::response::{render, THINK_PLACEHOLDER};

pub const NUM_HEADS: usize = 5;
pub const FORMAT_HEAD: usize = 4;
pub const HEAD_NAMES: [&str; NUM_HEADS] = ["x1", "y1", "x2", "y2", "format"];
/// Half-width of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    /// Feature dimension.
    pub d: usize,
    /// Hidden width.
    pub h: usize,
    /// Bins per coordinate head.
    pub g: usize,
}

impl PolicyDims {
    pub fn new(d: usize, h: usize, g: usize) -> Result<Self> {
        if d == 0 || h == 0 || g < 2 {
            return Err(Error::Config(format!(
                "policy dims must satisfy d >= 1, h >= 1, g >= 2 (got d={d}, h={h}, g={g})"
            )));
        }
        Ok(Self { d, h, g })
    }

    pub fn head_size(&self, head: usize) -> usize {
        if head == FORMAT_HEAD {
            2
        } else {
            self.g
        }
    }

    fn head_offset(&self, head: usize) -> usize {
        let mut off = self.d * self.h + self.h;
        for k in 0..head {
            off += (self.h + 1) * self.head_size(k);
        }
        off
    }

    pub fn num_params(&self) -> usize {
        self.head_offset(NUM_HEADS)
    }

    /// Named tensor views as `(name, offset, shape)`, in buffer order.
    pub fn tensors(&self) -> Vec<(String, usize, Vec<usize>)> {
        let mut out = vec![
            ("input.weight".to_string(), 0, vec![self.d, self.h]),
            ("input.bias".to_string(), self.d * self.h, vec![self.h]),
        ];
        for (k, name) in HEAD_NAMES.iter().enumerate() {
            let off = self.head_offset(k);
            let n = self.head_size(k);
            out.push((format!("head.{name}.weight"), off, vec![self.h, n]));
            out.push((format!("head.{name}.bias"), off + self.h * n, vec![n]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dims: PolicyDims,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(dims: PolicyDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.num_params()],
        }
    }

    /// Weights i.i.d. uniform in `[-INIT_SCALE, INIT_SCALE]`, biases zero.
    pub fn init(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        for (_, off, shape) in dims.tensors() {
            if shape.len() == 2 {
                let n = shape[0] * shape[1];
                for v in &mut p.data[off..off + n] {
                    *v = rng.random_range(-INIT_SCALE..=INIT_SCALE);
                }
            }
        }
        p
    }

    pub fn from_flat(dims: PolicyDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.num_params() {
            return Err(Error::DimensionMismatch {
                expected: dims.num_params(),
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Deep copy used for the sampling and reference snapshots.
    pub fn clone_snapshot(&self) -> Self {
        self.clone()
    }

    pub fn input_weight(&self) -> &[f64] {
        &self.data[..self.dims.d * self.dims.h]
    }

    pub fn input_bias(&self) -> &[f64] {
        let start = self.dims.d * self.dims.h;
        &self.data[start..start + self.dims.h]
    }

    pub fn head_weight(&self, head: usize) -> &[f64] {
        let off = self.dims.head_offset(head);
        &self.data[off..off + self.dims.h * self.dims.head_size(head)]
    }

    pub fn head_bias(&self, head: usize) -> &[f64] {
        let n = self.dims.head_size(head);
        let off = self.dims.head_offset(head) + self.dims.h * n;
        &self.data[off..off + n]
    }

    pub fn head_bias_mut(&mut self, head: usize) -> &mut [f64] {
        let n = self.dims.head_size(head);
        let off = self.dims.head_offset(head) + self.dims.h * n;
        &mut self.data[off..off + n]
    }

    pub fn head_weight_mut(&mut self, head: usize) -> &mut [f64] {
        let off = self.dims.head_offset(head);
        let n = self.dims.h * self.dims.head_size(head);
        &mut self.data[off..off + n]
    }

    pub fn input_weight_mut(&mut self) -> &mut [f64] {
        let n = self.dims.d * self.dims.h;
        &mut self.data[..n]
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// FNV-1a over the raw bit patterns; changes whenever any parameter does.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Hidden activations and per-head probabilities for one feature vector.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Vec<f64>,
    pub log_probs: [Vec<f64>; NUM_HEADS],
}

impl Forward {
    pub fn probs(&self, head: usize) -> Vec<f64> {
        self.log_probs[head].iter().map(|l| l.exp()).collect()
    }

    pub fn greedy(&self) -> ([usize; 4], FormatToken) {
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
                    if x > best.1 {
                        (i, x)
                    } else {
                        best
                    }
                })
                .0
        };
        let bins = [0, 1, 2, 3].map(|k| argmax(&self.log_probs[k]));
        (
            bins,
            FormatToken::from_index(argmax(&self.log_probs[FORMAT_HEAD])),
        )
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn forward(params: &PolicyParams, features: &[f64]) -> Result<Forward> {
    let PolicyDims { d, h, .. } = params.dims;
    if features.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: features.len(),
        });
    }
    let w = params.input_weight();
    let mut pre = params.input_bias().to_vec();
    for (i, &x) in features.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let row = &w[i * h..(i + 1) * h];
        for (p, wij) in pre.iter_mut().zip(row) {
            *p += x * wij;
        }
    }
    let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
    let log_probs = std::array::from_fn(|k| {
        let n = params.dims.head_size(k);
        let wk = params.head_weight(k);
        let mut logits = params.head_bias(k).to_vec();
        for (j, &hj) in hidden.iter().enumerate() {
            for (z, wjk) in logits.iter_mut().zip(&wk[j * n..(j + 1) * n]) {
                *z += hj * wjk;
            }
        }
        log_softmax(&logits)
    });
    Ok(Forward { hidden, log_probs })
}

/// Accumulates `d objective / d params` into `grads`, given the derivative of
/// the objective with respect to each head's logits.
pub fn backward(
    params: &PolicyParams,
    features: &[f64],
    fwd: &Forward,
    logit_grads: &[Vec<f64>; NUM_HEADS],
    grads: &mut PolicyParams,
) {
    let PolicyDims { d, h, .. } = params.dims;
    let mut dhidden = vec![0.0; h];
    for (k, dz) in logit_grads.iter().enumerate() {
        let n = params.dims.head_size(k);
        let wk = params.head_weight(k);
        for j in 0..h {
            let row = &wk[j * n..(j + 1) * n];
            dhidden[j] += row.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>();
        }
        let gw = grads.head_weight_mut(k);
        for (j, &hj) in fwd.hidden.iter().enumerate() {
            for (g, dzk) in gw[j * n..(j + 1) * n].iter_mut().zip(dz) {
                *g += hj * dzk;
            }
        }
        for (g, dzk) in grads.head_bias_mut(k).iter_mut().zip(dz) {
            *g += dzk;
        }
    }
    let dpre: Vec<f64> = dhidden
        .iter()
        .zip(&fwd.hidden)
        .map(|(dh, hj)| dh * (1.0 - hj * hj))
        .collect();
    let gw = grads.input_weight_mut();
    for (i, &x) in features.iter().enumerate().take(d) {
        if x == 0.0 {
            continue;
        }
        for (g, dp) in gw[i * h..(i + 1) * h].iter_mut().zip(&dpre) {
            *g += x * dp;
        }
    }
    let start = d * h;
    for (g, dp) in grads.as_mut_slice()[start..start + h].iter_mut().zip(&dpre) {
        *g += dp;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatToken {
    Ok,
    Broken,
}

impl FormatToken {
    pub fn index(self) -> usize {
        match self {
            FormatToken::Ok => 0,
            FormatToken::Broken => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            FormatToken::Ok
        } else {
            FormatToken::Broken
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    pub bins: [usize; 4],
    pub format_token: FormatToken,
    /// Joint log-probability under the parameters it was sampled from.
    pub logprob_old: f64,
    pub rendered: String,
}

impl SampledResponse {
    pub fn tokens(&self) -> [usize; NUM_HEADS] {
        [
            self.bins[0],
            self.bins[1],
            self.bins[2],
            self.bins[3],
            self.format_token.index(),
        ]
    }
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, l) in log_probs.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    log_probs
        .iter()
        .rposition(|l| l.exp() > 0.0)
        .unwrap_or(log_probs.len() - 1)
}

pub(crate) fn joint_logprob(fwd: &Forward, tokens: &[usize; NUM_HEADS]) -> f64 {
    tokens
        .iter()
        .enumerate()
        .map(|(k, &t)| fwd.log_probs[k][t])
        .sum()
}

/// Renders a response from its tokens, corrupting the format when the format
/// token is `Broken`.
pub fn render_tokens(bins: [usize; 4], format: FormatToken) -> String {
    render(THINK_PLACEHOLDER, bins, format == FormatToken::Broken)
        .expect("placeholder reasoning text is serializable")
}

/// Draws `n` independent responses, each head sampled from its categorical.
pub fn sample<R: Rng + ?Sized>(
    params: &PolicyParams,
    features: &[f64],
    rng: &mut R,
    n: usize,
) -> Result<Vec<SampledResponse>> {
    if n < 2 {
        return Err(Error::GroupTooSmall(n));
    }
    let fwd = forward(params, features)?;
    Ok(sample_from(&fwd, rng, n))
}

pub(crate) fn sample_from<R: Rng + ?Sized>(
    fwd: &Forward,
    rng: &mut R,
    n: usize,
) -> Vec<SampledResponse> {
    (0..n)
        .map(|_| {
            let tokens: [usize; NUM_HEADS] =
                std::array::from_fn(|k| sample_categorical(&fwd.log_probs[k], rng));
            let bins = [tokens[0], tokens[1], tokens[2], tokens[3]];
            let format_token = FormatToken::from_index(tokens[FORMAT_HEAD]);
            SampledResponse {
                bins,
                format_token,
                logprob_old: joint_logprob(fwd, &tokens),
                rendered: render_tokens(bins, format_token),
            }
        })
        .collect()
}

fn check_tokens(dims: &PolicyDims, tokens: &[usize; NUM_HEADS]) -> Result<()> {
    for (k, &t) in tokens.iter().enumerate() {
        if t >= dims.head_size(k) {
            return Err(Error::BinOutOfRange {
                bin: t,
                bins: dims.head_size(k),
            });
        }
    }
    Ok(())
}

/// Joint log-probability of a recorded response under `params`.
pub fn logprob(params: &PolicyParams, features: &[f64], r: &SampledResponse) -> Result<f64> {
    let tokens = r.tokens();
    check_tokens(&params.dims, &tokens)?;
    let fwd = forward(params, features)?;
    Ok(joint_logprob(&fwd, &tokens))
}

/// One supervised example: features and the snapped ground-truth bins. The
/// format target is always `Ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub features: Vec<f64>,
    pub bins: [usize; 4],
}

/// Mean (over examples) of the summed five-head cross-entropy, and its exact
/// gradient.
pub fn sft_loss_and_grad(
    params: &PolicyParams,
    batch: &[SftExample],
) -> Result<(f64, PolicyParams)> {
    if batch.is_empty() {
        return Err(Error::NoSamples);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = PolicyParams::zeros(params.dims);
    let mut loss = 0.0;
    for ex in batch {
        let tokens = [
            ex.bins[0],
            ex.bins[1],
            ex.bins[2],
            ex.bins[3],
            FormatToken::Ok.index(),
        ];
        check_tokens(&params.dims, &tokens)?;
        let fwd = forward(params, &ex.features)?;
        loss -= joint_logprob(&fwd, &tokens);
        let dz: [Vec<f64>; NUM_HEADS] = std::array::from_fn(|k| {
            let mut g: Vec<f64> = fwd.log_probs[k].iter().map(|l| l.exp() * scale).collect();
            g[tokens[k]] -= scale;
            g
        });
        backward(params, &ex.features, &fwd, &dz, &mut grads);
    }
    Ok((loss * scale, grads))
}
