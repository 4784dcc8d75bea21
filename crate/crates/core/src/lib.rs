//! Group-relative policy optimization with verifiable rewards for
//! grounding-style policies.
//!
//! The pipeline has two stages. A cold-start supervised stage fits a small
//! categorical policy to ground-truth boxes, then a GRPO stage samples groups
//! of responses per task, scores them with an IoU accuracy reward plus a
//! binary format reward, normalizes rewards within each group and takes a
//! policy-gradient step, optionally reweighting each group by a
//! difficulty coefficient of its mean IoU.
//!
//! Module map:
//!
//! - [`geometry`]: boxes, IoU, Acc@τ
//! - [`response`]: the `<think>…</think><answer>…</answer>` format
//! - [`reward`]: accuracy/format rewards, difficulty buckets, φ
//! - [`policy`]: the factorized softmax policy with exact gradients
//! - [`grpo`]: advantages, KL estimator, objective, gradient, update step
//! - [`env`]: synthetic grounding tasks
//! - [`trainer`]: SFT, GRPO and experiment orchestration
//! - [`cli`] and [`report`]: command-line surface, scoring, CSV/SVG output
//!
//! Runnable walk-throughs of each capability live under `examples/`.

pub mod checkpoint;
pub mod cli;
pub mod env;
pub mod error;
pub mod geometry;
pub mod grpo;
pub mod optim;
pub mod policy;
pub mod report;
pub mod response;
pub mod reward;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{acc_at_threshold, iou, BBox};
pub use policy::{PolicyDims, PolicyParams};
pub use reward::{DifficultyBucket, PhiKind};
