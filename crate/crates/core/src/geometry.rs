//! Axis-aligned boxes in normalized unit-square coordinates.
//!
//! Predicted boxes may be degenerate (`x1 >= x2` or `y1 >= y2`); such boxes
//! have zero area and score zero IoU against anything. Corner order is never
//! repaired here: emitting corners in the right order is part of what the
//! policy has to learn.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on ground-truth box area (5% x 5%).
pub const DEFAULT_MIN_BOX_AREA: f64 = 0.0025;

/// Default Acc@τ threshold.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Builds a ground-truth box, checking the unit-square, ordering and
    /// minimum-area invariants.
    pub fn ground_truth(x1: f64, y1: f64, x2: f64, y2: f64, min_area: f64) -> Result<Self> {
        let b = Self::new(x1, y1, x2, y2);
        b.validate_ground_truth(min_area)?;
        Ok(b)
    }

    pub fn validate_ground_truth(&self, min_area: f64) -> Result<()> {
        if !self.in_unit_square() {
            return Err(Error::InvalidBox(format!(
                "{self:?} outside the unit square"
            )));
        }
        if self.is_degenerate() {
            return Err(Error::InvalidBox(format!("{self:?} is degenerate")));
        }
        if self.area() < min_area {
            return Err(Error::InvalidBox(format!(
                "{self:?} has area {} below minimum {min_area}",
                self.area()
            )));
        }
        Ok(())
    }

    pub fn in_unit_square(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|c| (0.0..=1.0).contains(c))
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x1 < self.x2 && self.y1 < self.y2)
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

/// Intersection over union. Zero whenever either box is degenerate or the
/// union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a.is_degenerate() || b.is_degenerate() {
        return 0.0;
    }
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Fraction of `(prediction, ground truth)` pairs whose IoU strictly exceeds `tau`.
pub fn acc_at_threshold(pairs: &[(BBox, BBox)], tau: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoSamples);
    }
    let hits = pairs.iter().filter(|(p, g)| iou(p, g) > tau).count();
    Ok(hits as f64 / pairs.len() as f64)
}
