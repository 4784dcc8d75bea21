//! Group-relative advantages, the k3 KL estimator, the (difficulty-weighted)
//! GRPO surrogate and its exact gradient.
//!
//! Per group of `N` responses `o_i` with advantages `A_i`:
//!
//! ```text
//! J = 1/N Σ_i [ w · (π_θ(o_i)/π_old(o_i)) · A_i − β · k3(o_i) ]
//! k3 = ρ − ln ρ − 1,   ρ = π_ref(o_i)/π_θ(o_i)
//! ```
//!
//! where `w = φ(mIoU)` and `φ ≡ 1` recovers plain GRPO. A batch objective is
//! the mean of its groups' objectives.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::TaskInstance;
use crate::error::{Error, Result};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::policy::{self, backward, forward, Forward, PolicyParams, SampledResponse, NUM_HEADS};
use crate::response::parse;
use crate::reward::{bucket_fractions, mean_iou, phi, total_reward, PhiKind, RewardBreakdown};

/// Learning rate used at full model scale (7B-parameter backbone); kept for
/// reference only, the toy policy trains with [`GrpoConfig::learning_rate`].
pub const FULL_SCALE_LEARNING_RATE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Responses sampled per task.
    pub n: usize,
    /// KL penalty coefficient.
    pub beta: f64,
    pub phi_kind: PhiKind,
    pub learning_rate: f64,
    pub std_epsilon: f64,
    /// Grant accuracy reward to boxes salvaged from malformed responses.
    pub salvage: bool,
    /// PPO-style ratio clipping; inert for a single on-policy step.
    pub clip: bool,
    pub clip_epsilon: f64,
    /// Divide each group's weight by the batch-mean weight.
    pub normalize_weights: bool,
    pub optimizer: OptimizerKind,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            n: 8,
            beta: 0.04,
            phi_kind: PhiKind::ExpComplement,
            learning_rate: 1e-3,
            std_epsilon: 1e-8,
            salvage: true,
            clip: false,
            clip_epsilon: 0.2,
            normalize_weights: false,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::GroupTooSmall(self.n));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be non-negative, got {}",
                self.beta
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub task: TaskInstance,
    pub responses: Vec<SampledResponse>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
    pub miou: f64,
    pub weight: f64,
}

impl GroupRollout {
    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// `(r_i − mean) / std` with the population standard deviation; all zeros
/// when the group has (numerically) no spread.
pub fn advantages(rewards: &[f64], std_epsilon: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= std_epsilon {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// k3 estimate of `KL(π_θ ‖ π_ref)` from one sample's log-probabilities.
pub fn kl_estimate(logp_theta: f64, logp_ref: f64) -> Result<f64> {
    if !logp_theta.is_finite() || !logp_ref.is_finite() {
        return Err(Error::NonFinite);
    }
    let log_ratio = logp_ref - logp_theta;
    // exp_m1 keeps the result exactly 0 at equality and accurate near it
    Ok((log_ratio.exp_m1() - log_ratio).max(0.0))
}

/// Samples a group for `task`, scores it and computes its advantages,
/// mIoU and difficulty weight.
pub fn build_group<R: Rng + ?Sized>(
    task: &TaskInstance,
    params: &PolicyParams,
    config: &GrpoConfig,
    rng: &mut R,
) -> Result<GroupRollout> {
    config.validate()?;
    let g = params.dims.g;
    let responses = policy::sample(params, &task.features, rng, config.n)?;
    let rewards: Vec<RewardBreakdown> = responses
        .iter()
        .map(|r| total_reward(&parse(&r.rendered, g), &task.gt_box, config.salvage))
        .collect();
    let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
    let advantages = advantages(&totals, config.std_epsilon)?;
    let miou = mean_iou(&rewards)?;
    Ok(GroupRollout {
        task: task.clone(),
        responses,
        rewards,
        advantages,
        miou,
        weight: phi(config.phi_kind, miou),
    })
}

struct GroupEval {
    objective: f64,
    mean_kl: f64,
    grads: Option<PolicyParams>,
}

fn check_group(group: &GroupRollout, config: &GrpoConfig) -> Result<()> {
    if group.responses.len() != config.n
        || group.advantages.len() != config.n
        || group.rewards.len() != config.n
    {
        return Err(Error::DimensionMismatch {
            expected: config.n,
            got: group.responses.len(),
        });
    }
    Ok(())
}

fn eval_group(
    group: &GroupRollout,
    weight: f64,
    theta: &PolicyParams,
    old: Option<&PolicyParams>,
    reference: &PolicyParams,
    config: &GrpoConfig,
    with_grad: bool,
) -> Result<GroupEval> {
    check_group(group, config)?;
    let x = &group.task.features;
    let fwd_theta = forward(theta, x)?;
    let fwd_ref = forward(reference, x)?;
    let fwd_old = old.map(|p| forward(p, x)).transpose()?;
    let n = group.len() as f64;
    let mut objective = 0.0;
    let mut kl_sum = 0.0;
    let mut coeffs = Vec::with_capacity(group.len());
    for (resp, &adv) in group.responses.iter().zip(&group.advantages) {
        let tokens = resp.tokens();
        let lp_theta = policy::joint_logprob(&fwd_theta, &tokens);
        let lp_ref = policy::joint_logprob(&fwd_ref, &tokens);
        let lp_old = match &fwd_old {
            Some(f) => policy::joint_logprob(f, &tokens),
            None => resp.logprob_old,
        };
        let ratio = (lp_theta - lp_old).exp();
        let kl = kl_estimate(lp_theta, lp_ref)?;
        let (surrogate, d_surrogate) = if config.clip {
            let clipped = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
            if clipped * adv < ratio * adv {
                (clipped * adv, 0.0)
            } else {
                (ratio * adv, ratio * adv)
            }
        } else {
            (ratio * adv, ratio * adv)
        };
        objective += weight * surrogate - config.beta * kl;
        kl_sum += kl;
        // d k3 / d lp_theta = 1 − ρ
        let rho = (lp_ref - lp_theta).exp();
        coeffs.push((weight * d_surrogate - config.beta * (1.0 - rho)) / n);
    }
    let grads = with_grad.then(|| {
        let logit_grads = score_logit_grads(&fwd_theta, &group.responses, &coeffs);
        let mut grads = PolicyParams::zeros(theta.dims);
        backward(theta, x, &fwd_theta, &logit_grads, &mut grads);
        grads
    });
    Ok(GroupEval {
        objective: objective / n,
        mean_kl: kl_sum / n,
        grads,
    })
}

// Σ_i c_i ∂ log π(o_i) / ∂ logits = Σ_i c_i (onehot(o_i) − p), per head.
fn score_logit_grads(
    fwd: &Forward,
    responses: &[SampledResponse],
    coeffs: &[f64],
) -> [Vec<f64>; NUM_HEADS] {
    let total: f64 = coeffs.iter().sum();
    std::array::from_fn(|k| {
        let mut g: Vec<f64> = fwd.log_probs[k].iter().map(|l| -total * l.exp()).collect();
        for (resp, c) in responses.iter().zip(coeffs) {
            g[resp.tokens()[k]] += c;
        }
        g
    })
}

/// Objective of a single group.
pub fn grpo_objective(
    group: &GroupRollout,
    theta: &PolicyParams,
    old: &PolicyParams,
    reference: &PolicyParams,
    config: &GrpoConfig,
) -> Result<f64> {
    Ok(eval_group(
        group,
        group.weight,
        theta,
        Some(old),
        reference,
        config,
        false,
    )?
    .objective)
}

/// Exact gradient of [`grpo_objective`] with respect to `theta`.
pub fn grpo_grad(
    group: &GroupRollout,
    theta: &PolicyParams,
    old: &PolicyParams,
    reference: &PolicyParams,
    config: &GrpoConfig,
) -> Result<PolicyParams> {
    Ok(eval_group(
        group,
        group.weight,
        theta,
        Some(old),
        reference,
        config,
        true,
    )?
    .grads
    .expect("gradient requested"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_total_reward: f64,
    #[serde(rename = "mean_mIoU")]
    pub mean_miou: f64,
    pub easy_frac: f64,
    pub medium_frac: f64,
    pub hard_frac: f64,
    pub mean_weight: f64,
    pub mean_kl: f64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_acc_at_05: Option<f64>,
}

/// One on-policy update from a batch of groups sampled under `params`.
/// Metrics describe the batch before the update.
pub fn grpo_step(
    params: &mut PolicyParams,
    reference: &PolicyParams,
    groups: &[GroupRollout],
    optimizer: &mut OptimizerState,
    config: &GrpoConfig,
    step: usize,
) -> Result<StepMetrics> {
    if groups.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut weights: Vec<f64> = groups.iter().map(|g| g.weight).collect();
    if config.normalize_weights {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        if mean > 0.0 {
            weights.iter_mut().for_each(|w| *w /= mean);
        }
    }
    let theta: &PolicyParams = params;
    let evals = groups
        .par_iter()
        .zip(&weights)
        .map(|(g, &w)| eval_group(g, w, theta, None, reference, config, true))
        .collect::<Result<Vec<_>>>()?;

    let m = groups.len() as f64;
    let mut grad = PolicyParams::zeros(params.dims);
    let mut objective = 0.0;
    let mut kl = 0.0;
    for e in &evals {
        grad.add_scaled(e.grads.as_ref().expect("gradient requested"), 1.0 / m);
        objective += e.objective;
        kl += e.mean_kl;
    }
    let mious: Vec<f64> = groups.iter().map(|g| g.miou).collect();
    let (easy, medium, hard) = bucket_fractions(&mious)?;
    let total_reward: f64 = groups
        .iter()
        .map(|g| g.rewards.iter().map(|r| r.total).sum::<f64>() / g.len() as f64)
        .sum();
    let metrics = StepMetrics {
        step,
        mean_total_reward: total_reward / m,
        mean_miou: mious.iter().sum::<f64>() / m,
        easy_frac: easy,
        medium_frac: medium,
        hard_frac: hard,
        mean_weight: weights.iter().sum::<f64>() / m,
        mean_kl: kl / m,
        objective: objective / m,
        eval_acc_at_05: None,
    };
    optimizer.apply(params, &grad, config.learning_rate);
    Ok(metrics)
}

pub fn new_optimizer(params: &PolicyParams, config: &GrpoConfig) -> OptimizerState {
    OptimizerState::new(config.optimizer, params.len())
}
