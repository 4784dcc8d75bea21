//! Seeded synthetic grounding tasks.
//!
//! A scene holds `K` objects, each a box plus a unit attribute vector. The
//! instruction is a noisy, renormalized copy of the target's attribute, so
//! solving a task means finding the object whose attribute best matches the
//! instruction and reporting its box. Distractor attributes are drawn at a
//! controlled cosine similarity to the target; raising the ceiling makes
//! targets harder to tell apart.
//!
//! Feature layout: `[slot boxes (4 per slot) | slot attributes (attr_dim per
//! slot) | instruction]`, optionally followed by a match block of `attr_dim`
//! values per slot holding the elementwise product of the slot's attribute
//! with the instruction. Without it the target score is bilinear in the
//! features, which a single tanh layer cannot route to the box heads; see
//! [`EnvSpec::match_block`]. Objects are scattered over the slots by a seeded
//! shuffle; unused slots are all zeros.
//!
//! Box sides are drawn uniformly from `[min_box_side, 1]` and the box is
//! placed uniformly inside the unit square.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, DEFAULT_MIN_BOX_AREA};
use crate::seed::{derive_seed, rng_for, stream};

/// Minimum gap between the target's and the best distractor's match score.
pub const TARGET_MARGIN: f64 = 0.05;
/// Width of the interval below the ceiling that distractor similarities are drawn from.
pub const SIMILARITY_SPREAD: f64 = 0.5;
pub const MAX_ATTEMPTS: usize = 10_000;
pub const DATASET_FORMAT: &str = "grpo-ground/dataset/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub n_objects_min: usize,
    pub n_objects_max: usize,
    pub attr_dim: usize,
    /// Cosine-similarity ceiling of distractor attributes to the target.
    pub distractor_similarity: f64,
    pub min_box_area: f64,
    /// Coordinate bins of the policy's output alphabet.
    pub g: usize,
    pub feature_noise_sigma: f64,
    /// Smallest side length of a sampled box.
    pub min_box_side: f64,
    /// Append the per-slot attribute-instruction products to the features.
    pub match_block: bool,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            n_objects_min: 2,
            n_objects_max: 4,
            attr_dim: 8,
            distractor_similarity: 0.5,
            min_box_area: DEFAULT_MIN_BOX_AREA,
            g: 16,
            feature_noise_sigma: 0.05,
            min_box_side: 0.2,
            match_block: true,
        }
    }
}

impl EnvSpec {
    pub fn feature_dim(&self) -> usize {
        let base = self.n_objects_max * (4 + self.attr_dim) + self.attr_dim;
        if self.match_block {
            base + self.n_objects_max * self.attr_dim
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_objects_min < 2 || self.n_objects_max < self.n_objects_min {
            return bad(format!(
                "need 2 <= n_objects_min <= n_objects_max, got {}..{}",
                self.n_objects_min, self.n_objects_max
            ));
        }
        if self.attr_dim < 2 {
            return bad(format!(
                "attr_dim must be at least 2, got {}",
                self.attr_dim
            ));
        }
        if !(0.0..1.0).contains(&self.distractor_similarity) {
            return bad(format!(
                "distractor_similarity must lie in [0, 1), got {}",
                self.distractor_similarity
            ));
        }
        if !(self.min_box_area > 0.0 && self.min_box_area < 1.0) {
            return bad(format!(
                "min_box_area must lie in (0, 1), got {}",
                self.min_box_area
            ));
        }
        if self.g < 2 {
            return bad(format!("g must be at least 2, got {}", self.g));
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad(format!(
                "feature_noise_sigma must be non-negative, got {}",
                self.feature_noise_sigma
            ));
        }
        if !(self.min_box_side > 0.0 && self.min_box_side <= 1.0) {
            return bad(format!(
                "min_box_side must lie in (0, 1], got {}",
                self.min_box_side
            ));
        }
        if self.min_box_area > 1.0 {
            return bad("min_box_area exceeds the unit square".into());
        }
        Ok(())
    }

    fn boxes_offset(&self, slot: usize) -> usize {
        slot * 4
    }

    fn attr_offset(&self, slot: usize) -> usize {
        self.n_objects_max * 4 + slot * self.attr_dim
    }

    fn instruction_offset(&self) -> usize {
        self.n_objects_max * (4 + self.attr_dim)
    }

    fn match_offset(&self, slot: usize) -> usize {
        self.instruction_offset() + self.attr_dim + slot * self.attr_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstance {
    pub features: Vec<f64>,
    pub gt_box: BBox,
    /// Slot holding the target object.
    pub target_index: usize,
    pub n_objects: usize,
    /// Largest cosine similarity drawn for a distractor in this scene.
    pub distractor_similarity: f64,
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Unit vector at cosine `s` to the unit vector `t`.
fn at_similarity<R: Rng + ?Sized>(rng: &mut R, t: &[f64], s: f64) -> Vec<f64> {
    loop {
        let u = unit_vector(rng, t.len());
        let proj = dot(&u, t);
        let orth: Vec<f64> = u.iter().zip(t).map(|(ui, ti)| ui - proj * ti).collect();
        let norm = dot(&orth, &orth).sqrt();
        if norm > 1e-6 {
            let c = (1.0 - s * s).max(0.0).sqrt();
            return t
                .iter()
                .zip(&orth)
                .map(|(ti, oi)| s * ti + c * oi / norm)
                .collect();
        }
    }
}

struct Attempts(usize);

impl Attempts {
    fn tick(&mut self, what: &str) -> Result<()> {
        self.0 += 1;
        if self.0 > MAX_ATTEMPTS {
            return Err(Error::InfeasibleSpec(format!(
                "rejection sampling of {what} exceeded {MAX_ATTEMPTS} attempts"
            )));
        }
        Ok(())
    }
}

fn sample_box<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &EnvSpec,
    attempts: &mut Attempts,
) -> Result<BBox> {
    loop {
        attempts.tick("boxes")?;
        let w = rng.random_range(spec.min_box_side..=1.0);
        let h = rng.random_range(spec.min_box_side..=1.0);
        let x1 = rng.random_range(0.0..=1.0 - w);
        let y1 = rng.random_range(0.0..=1.0 - h);
        let b = BBox::new(x1, y1, x1 + w, y1 + h);
        if !b.is_degenerate() && b.area() >= spec.min_box_area && b.in_unit_square() {
            return Ok(b);
        }
    }
}

pub fn generate_task<R: Rng + ?Sized>(rng: &mut R, spec: &EnvSpec) -> Result<TaskInstance> {
    spec.validate()?;
    let k = rng.random_range(spec.n_objects_min..=spec.n_objects_max);
    let mut attempts = Attempts(0);
    let boxes = (0..k)
        .map(|_| sample_box(rng, spec, &mut attempts))
        .collect::<Result<Vec<_>>>()?;

    let target = unit_vector(rng, spec.attr_dim);
    let ceiling = spec.distractor_similarity;
    let noise: Vec<f64> = (0..spec.attr_dim)
        .map(|_| spec.feature_noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let instruction = normalize(target.iter().zip(&noise).map(|(t, n)| t + n).collect());
    let target_score = dot(&instruction, &target);
    let mut attrs = vec![target.clone()];
    let mut max_sim = f64::NEG_INFINITY;
    while attrs.len() < k {
        attempts.tick("distractors")?;
        let s = rng.random_range((ceiling - SIMILARITY_SPREAD).max(-1.0)..=ceiling);
        let d = at_similarity(rng, &target, s);
        if dot(&instruction, &d) <= target_score - TARGET_MARGIN {
            max_sim = max_sim.max(s);
            attrs.push(d);
        }
    }

    let mut slots: Vec<usize> = (0..spec.n_objects_max).collect();
    slots.shuffle(rng);
    let mut features = vec![0.0; spec.feature_dim()];
    for (obj, &slot) in slots.iter().take(k).enumerate() {
        let bo = spec.boxes_offset(slot);
        features[bo..bo + 4].copy_from_slice(&boxes[obj].to_array());
        let ao = spec.attr_offset(slot);
        features[ao..ao + spec.attr_dim].copy_from_slice(&attrs[obj]);
    }
    let io = spec.instruction_offset();
    features[io..io + spec.attr_dim].copy_from_slice(&instruction);
    if spec.match_block {
        for (obj, &slot) in slots.iter().take(k).enumerate() {
            let mo = spec.match_offset(slot);
            for (f, (a, i)) in features[mo..mo + spec.attr_dim]
                .iter_mut()
                .zip(attrs[obj].iter().zip(&instruction))
            {
                *f = a * i;
            }
        }
    }

    Ok(TaskInstance {
        features,
        gt_box: boxes[0],
        target_index: slots[0],
        n_objects: k,
        distractor_similarity: max_sim,
    })
}

/// `n` tasks, task `i` drawn from its own stream derived from `(seed, i)`.
pub fn generate_dataset(seed: u64, n: usize, spec: &EnvSpec) -> Result<Vec<TaskInstance>> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    (0..n as u64)
        .map(|i| generate_task(&mut rng_for(seed, &[stream::DATASET, i]), spec))
        .collect()
}

/// Box of the object whose attribute best matches the instruction.
pub fn oracle_solve(task: &TaskInstance, spec: &EnvSpec) -> BBox {
    oracle_slot(task, spec)
        .map(|slot| {
            let o = spec.boxes_offset(slot);
            let f = &task.features;
            BBox::new(f[o], f[o + 1], f[o + 2], f[o + 3])
        })
        .unwrap_or(BBox::new(0.0, 0.0, 0.0, 0.0))
}

pub fn oracle_slot(task: &TaskInstance, spec: &EnvSpec) -> Option<usize> {
    let f = &task.features;
    let io = spec.instruction_offset();
    let instruction = &f[io..io + spec.attr_dim];
    (0..spec.n_objects_max)
        .filter(|&s| {
            let o = spec.attr_offset(s);
            f[o..o + spec.attr_dim].iter().any(|x| *x != 0.0)
        })
        .map(|s| {
            let o = spec.attr_offset(s);
            (s, dot(&f[o..o + spec.attr_dim], instruction))
        })
        .fold(None, |best: Option<(usize, f64)>, (s, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((s, v)),
        })
        .map(|(s, _)| s)
}

/// Either a single spec or a two-spec mixture. All specs in a mixture share
/// the same feature layout and bin count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskMix {
    pub primary: EnvSpec,
    pub secondary: Option<EnvSpec>,
    /// Probability of drawing a task from `secondary`.
    pub secondary_fraction: f64,
}

impl TaskMix {
    pub fn single(spec: EnvSpec) -> Self {
        Self {
            primary: spec,
            secondary: None,
            secondary_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.primary.validate()?;
        if let Some(s) = &self.secondary {
            s.validate()?;
            if s.feature_dim() != self.primary.feature_dim() || s.g != self.primary.g {
                return Err(Error::Config(
                    "mixture specs must share feature layout and bin count".into(),
                ));
            }
            if !(0.0..=1.0).contains(&self.secondary_fraction) {
                return Err(Error::Config(format!(
                    "secondary_fraction must lie in [0, 1], got {}",
                    self.secondary_fraction
                )));
            }
        }
        Ok(())
    }

    pub fn spec_for<R: Rng + ?Sized>(&self, rng: &mut R) -> &EnvSpec {
        match &self.secondary {
            Some(s) if rng.random::<f64>() < self.secondary_fraction => s,
            _ => &self.primary,
        }
    }

    /// Task drawn from the stream `(seed, path)`.
    pub fn task(&self, seed: u64, path: &[u64]) -> Result<TaskInstance> {
        let mut rng = rng_for(derive_seed(seed, path), &[]);
        let spec = *self.spec_for(&mut rng);
        generate_task(&mut rng, &spec)
    }

    pub fn tasks(&self, seed: u64, tag: u64, n: usize) -> Result<Vec<TaskInstance>> {
        (0..n as u64).map(|i| self.task(seed, &[tag, i])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub seed: u64,
    pub n: usize,
    pub spec: EnvSpec,
}

pub fn write_dataset<W: Write>(
    mut w: W,
    seed: u64,
    spec: &EnvSpec,
    tasks: &[TaskInstance],
) -> Result<()> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        seed,
        n: tasks.len(),
        spec: *spec,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for t in tasks {
        writeln!(w, "{}", serde_json::to_string(t)?)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(DatasetHeader, Vec<TaskInstance>)> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (_, first) = lines.next().ok_or(Error::Malformed {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header: DatasetHeader = serde_json::from_str(&first?).map_err(|e| Error::Malformed {
        line: 1,
        msg: e.to_string(),
    })?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Malformed {
            line: 1,
            msg: format!("unsupported dataset format {:?}", header.format),
        });
    }
    let mut tasks = Vec::new();
    for (i, line) in lines {
        let t: TaskInstance = serde_json::from_str(&line?).map_err(|e| Error::Malformed {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if t.features.len() != header.spec.feature_dim() {
            return Err(Error::Malformed {
                line: i + 1,
                msg: format!(
                    "features have length {}, spec expects {}",
                    t.features.len(),
                    header.spec.feature_dim()
                ),
            });
        }
        tasks.push(t);
    }
    Ok((header, tasks))
}
