//! Rule-based rewards, group difficulty statistics and the difficulty
//! coefficient family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::response::ParsedResponse;

/// Upper mIoU bound of the hard bucket (exclusive).
pub const HARD_BELOW: f64 = 0.3;
/// Lower mIoU bound of the easy bucket (exclusive).
pub const EASY_ABOVE: f64 = 0.7;
/// Floor applied to mIoU before taking its logarithm.
pub const NEG_LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub acc: f64,
    pub format: u8,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DifficultyBucket {
    Easy,
    Medium,
    Hard,
}

/// Difficulty coefficient applied to a group's policy-gradient term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PhiKind {
    /// `-ln(mIoU)`, with mIoU floored at [`NEG_LOG_FLOOR`].
    NegLog,
    /// `(1 - mIoU)^2`.
    SquaredComplement,
    /// `e^(1 - mIoU)`.
    ExpComplement,
    /// Constant 1: plain GRPO.
    #[default]
    None,
}

impl PhiKind {
    pub const ALL: [PhiKind; 4] = [
        PhiKind::NegLog,
        PhiKind::SquaredComplement,
        PhiKind::ExpComplement,
        PhiKind::None,
    ];
}

/// IoU of the parsed box against the ground truth. A box recovered from a
/// malformed response only counts when `salvage` is on.
pub fn accuracy_reward(p: &ParsedResponse, gt: &BBox, salvage: bool) -> f64 {
    match p.bbox {
        Some(b) if p.format_ok || salvage => iou(&b, gt),
        _ => 0.0,
    }
}

pub fn format_reward(p: &ParsedResponse) -> u8 {
    u8::from(p.format_ok)
}

pub fn total_reward(p: &ParsedResponse, gt: &BBox, salvage: bool) -> RewardBreakdown {
    let acc = accuracy_reward(p, gt, salvage);
    let format = format_reward(p);
    RewardBreakdown {
        acc,
        format,
        total: acc + f64::from(format),
    }
}

/// Mean accuracy reward over a group of responses.
pub fn mean_iou(group: &[RewardBreakdown]) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok(group.iter().map(|r| r.acc).sum::<f64>() / group.len() as f64)
}

pub fn bucket(miou: f64) -> DifficultyBucket {
    if miou > EASY_ABOVE {
        DifficultyBucket::Easy
    } else if miou < HARD_BELOW {
        DifficultyBucket::Hard
    } else {
        DifficultyBucket::Medium
    }
}

pub fn phi(kind: PhiKind, miou: f64) -> f64 {
    match kind {
        PhiKind::NegLog => -miou.clamp(NEG_LOG_FLOOR, 1.0).ln(),
        PhiKind::SquaredComplement => (1.0 - miou).powi(2),
        PhiKind::ExpComplement => (1.0 - miou).exp(),
        PhiKind::None => 1.0,
    }
}

/// Fractions of (easy, medium, hard) buckets over a set of mIoU values.
pub fn bucket_fractions(mious: &[f64]) -> Result<(f64, f64, f64)> {
    if mious.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let (mut e, mut m, mut h) = (0usize, 0usize, 0usize);
    for &v in mious {
        match bucket(v) {
            DifficultyBucket::Easy => e += 1,
            DifficultyBucket::Medium => m += 1,
            DifficultyBucket::Hard => h += 1,
        }
    }
    let n = mious.len() as f64;
    Ok((e as f64 / n, m as f64 / n, h as f64 / n))
}
