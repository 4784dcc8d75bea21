//! Two-stage training: cold-start supervised fine-tuning followed by GRPO,
//! plus evaluation and the stage ablation driver.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::env::{EnvSpec, TaskInstance, TaskMix};
use crate::error::{Error, Result};
use crate::geometry::{iou, DEFAULT_IOU_THRESHOLD};
use crate::grpo::{build_group, grpo_step, new_optimizer, GroupRollout, GrpoConfig};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::policy::{
    forward, render_tokens, sft_loss_and_grad, PolicyDims, PolicyParams, SftExample,
};
use crate::response::{box_to_bins, parse};
use crate::reward::{accuracy_reward, bucket_fractions};
use crate::seed::{rng_for, stream};

pub use crate::grpo::StepMetrics;

/// Size of the fixed stage-2 pool used at full scale (7k + 3k samples).
pub const FULL_SCALE_POOL_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StageMode {
    #[default]
    SftThenGrpo,
    PureRl,
    SftOnly,
    SftThenCotSftMore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub n_examples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            n_examples: 20_000,
            epochs: 4,
            batch_size: 32,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl SftConfig {
    pub fn steps_per_epoch(&self) -> usize {
        self.n_examples.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoStageConfig {
    pub steps: usize,
    pub tasks_per_step: usize,
    /// Draw tasks from a fixed pool of this size instead of fresh tasks.
    pub pool_size: Option<usize>,
    pub algorithm: GrpoConfig,
}

impl Default for GrpoStageConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            tasks_per_step: 8,
            pool_size: None,
            algorithm: GrpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_tasks: usize,
    pub every_k_steps: usize,
    pub tau: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_tasks: 500,
            every_k_steps: 25,
            tau: DEFAULT_IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub env: EnvSpec,
    /// Optional second task distribution mixed into every stage.
    pub mix_env: Option<EnvSpec>,
    pub mix_fraction: f64,
    pub hidden: usize,
    pub sft: SftConfig,
    pub grpo: GrpoStageConfig,
    pub eval: EvalConfig,
    pub stage_mode: StageMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: EnvSpec::default(),
            mix_env: None,
            mix_fraction: 0.0,
            hidden: 32,
            sft: SftConfig::default(),
            grpo: GrpoStageConfig::default(),
            eval: EvalConfig::default(),
            stage_mode: StageMode::default(),
        }
    }
}

impl TrainConfig {
    pub fn task_mix(&self) -> TaskMix {
        TaskMix {
            primary: self.env,
            secondary: self.mix_env,
            secondary_fraction: if self.mix_env.is_some() {
                self.mix_fraction
            } else {
                0.0
            },
        }
    }

    pub fn dims(&self) -> Result<PolicyDims> {
        PolicyDims::new(self.env.feature_dim(), self.hidden, self.env.g)
    }

    pub fn validate(&self) -> Result<()> {
        self.task_mix().validate()?;
        self.dims()?;
        self.grpo.algorithm.validate()?;
        let positive = [
            ("sft.n_examples", self.sft.n_examples),
            ("sft.batch_size", self.sft.batch_size),
            ("grpo.tasks_per_step", self.grpo.tasks_per_step),
            ("eval.n_tasks", self.eval.n_tasks),
            ("eval.every_k_steps", self.eval.every_k_steps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.grpo.pool_size == Some(0) {
            return Err(Error::Config("grpo.pool_size must be positive".into()));
        }
        if !(self.sft.learning_rate >= 0.0 && self.sft.learning_rate.is_finite()) {
            return Err(Error::Config(
                "sft.learning_rate must be non-negative".into(),
            ));
        }
        if !(self.eval.tau > 0.0 && self.eval.tau < 1.0) {
            return Err(Error::Config("eval.tau must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Gradient steps the configured stage mode will take.
    pub fn total_gradient_steps(&self) -> usize {
        match self.stage_mode {
            StageMode::SftOnly => self.sft.total_steps(),
            StageMode::PureRl => self.grpo.steps,
            StageMode::SftThenGrpo | StageMode::SftThenCotSftMore => {
                self.sft.total_steps() + self.grpo.steps
            }
        }
    }

    /// SHA-256 of the canonical JSON form, stamped into emitted files.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn eval_tasks(&self) -> Result<Vec<TaskInstance>> {
        self.task_mix()
            .tasks(self.seed, stream::EVAL_DATA, self.eval.n_tasks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalResult {
    pub acc_at_tau: f64,
    pub tau: f64,
    pub mean_iou: f64,
    pub format_rate: f64,
    pub n: usize,
}

/// Greedy-decodes every task, renders and re-parses the response, and scores it.
pub fn evaluate(params: &PolicyParams, tasks: &[TaskInstance], tau: f64) -> Result<EvalResult> {
    if tasks.is_empty() {
        return Err(Error::NoSamples);
    }
    let g = params.dims.g;
    let scored = tasks
        .par_iter()
        .map(|t| {
            let (bins, fmt) = forward(params, &t.features)?.greedy();
            let parsed = parse(&render_tokens(bins, fmt), g);
            let iou_v = accuracy_reward(&parsed, &t.gt_box, true);
            Ok((iou_v, parsed.format_ok))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = scored.len() as f64;
    Ok(EvalResult {
        acc_at_tau: scored.iter().filter(|(v, _)| *v > tau).count() as f64 / n,
        tau,
        mean_iou: scored.iter().map(|(v, _)| v).sum::<f64>() / n,
        format_rate: scored.iter().filter(|(_, ok)| *ok).count() as f64 / n,
        n: scored.len(),
    })
}

/// Acc@τ of a policy that picks every bin uniformly at random, as a Monte
/// Carlo estimate with a normal-approximation 95% interval.
pub fn random_policy_baseline(
    tasks: &[TaskInstance],
    g: usize,
    samples: usize,
    seed: u64,
    tau: f64,
) -> (f64, f64) {
    let mut rng = rng_for(seed, &[]);
    let mut hits = 0usize;
    for i in 0..samples {
        let t = &tasks[i % tasks.len()];
        let b: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..g));
        if iou(&crate::response::bins_to_box(b, g), &t.gt_box) > tau {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    (p, 1.96 * (p * (1.0 - p) / samples as f64).sqrt())
}

pub fn difficulty_proportions(groups: &[GroupRollout]) -> Result<(f64, f64, f64)> {
    let mious: Vec<f64> = groups.iter().map(|g| g.miou).collect();
    bucket_fractions(&mious)
}

pub fn sft_example(task: &TaskInstance, g: usize) -> SftExample {
    SftExample {
        features: task.features.clone(),
        bins: box_to_bins(&task.gt_box, g),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftMetrics {
    pub stage: String,
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub eval_acc_at_05: f64,
}

/// Mini-batch SFT over a fixed dataset, reshuffled every epoch.
pub struct SftRunner<'a> {
    config: &'a TrainConfig,
    data: Vec<SftExample>,
    eval_tasks: &'a [TaskInstance],
    pub params: PolicyParams,
    optimizer: OptimizerState,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    pub steps: usize,
    epoch_loss: f64,
    epoch_batches: usize,
}

impl<'a> SftRunner<'a> {
    pub fn new(
        config: &'a TrainConfig,
        params: PolicyParams,
        eval_tasks: &'a [TaskInstance],
    ) -> Result<Self> {
        let g = config.env.g;
        let data = config
            .task_mix()
            .tasks(config.seed, stream::SFT_DATA, config.sft.n_examples)?
            .iter()
            .map(|t| sft_example(t, g))
            .collect();
        let optimizer = OptimizerState::new(config.sft.optimizer, params.len());
        Ok(Self {
            config,
            data,
            eval_tasks,
            params,
            optimizer,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            steps: 0,
            epoch_loss: 0.0,
            epoch_batches: 0,
        })
    }

    pub fn examples(&self) -> &[SftExample] {
        &self.data
    }

    /// One mini-batch update; returns a metrics record when it closes an epoch.
    fn step(&mut self, stage: &str) -> Result<Option<SftMetrics>> {
        if self.cursor == 0 {
            self.order = (0..self.data.len()).collect();
            self.order.shuffle(&mut rng_for(
                self.config.seed,
                &[stream::SFT_SHUFFLE, self.epoch as u64],
            ));
        }
        let end = (self.cursor + self.config.sft.batch_size).min(self.data.len());
        let batch: Vec<SftExample> = self.order[self.cursor..end]
            .iter()
            .map(|&i| self.data[i].clone())
            .collect();
        let (loss, mut grads) = sft_loss_and_grad(&self.params, &batch)?;
        grads.scale(-1.0);
        self.optimizer
            .apply(&mut self.params, &grads, self.config.sft.learning_rate);
        self.steps += 1;
        self.epoch_loss += loss;
        self.epoch_batches += 1;
        self.cursor = end;
        if self.cursor < self.data.len() {
            return Ok(None);
        }
        let eval = evaluate(&self.params, self.eval_tasks, self.config.eval.tau)?;
        let record = SftMetrics {
            stage: stage.to_string(),
            epoch: self.epoch,
            steps: self.steps,
            loss: self.epoch_loss / self.epoch_batches as f64,
            eval_acc_at_05: eval.acc_at_tau,
        };
        self.cursor = 0;
        self.epoch += 1;
        self.epoch_loss = 0.0;
        self.epoch_batches = 0;
        Ok(Some(record))
    }

    pub fn run_epochs(&mut self, epochs: usize, stage: &str) -> Result<Vec<SftMetrics>> {
        let mut out = Vec::new();
        let target = self.epoch + epochs;
        while self.epoch < target {
            if let Some(m) = self.step(stage)? {
                out.push(m);
            }
        }
        Ok(out)
    }

    /// Exactly `steps` further mini-batch updates; a trailing partial epoch
    /// gets its own record.
    pub fn run_steps(&mut self, steps: usize, stage: &str) -> Result<Vec<SftMetrics>> {
        let mut out = Vec::new();
        for _ in 0..steps {
            if let Some(m) = self.step(stage)? {
                out.push(m);
            }
        }
        if self.epoch_batches > 0 {
            let eval = evaluate(&self.params, self.eval_tasks, self.config.eval.tau)?;
            out.push(SftMetrics {
                stage: stage.to_string(),
                epoch: self.epoch,
                steps: self.steps,
                loss: self.epoch_loss / self.epoch_batches as f64,
                eval_acc_at_05: eval.acc_at_tau,
            });
        }
        Ok(out)
    }
}

pub fn init_params(config: &TrainConfig) -> Result<PolicyParams> {
    Ok(PolicyParams::init(
        config.dims()?,
        crate::seed::derive_seed(config.seed, &[stream::INIT]),
    ))
}

/// Stage 1: seeded initialization, then `sft.epochs` epochs of mini-batch
/// cross-entropy training.
pub fn run_sft(config: &TrainConfig) -> Result<(PolicyParams, Vec<SftMetrics>)> {
    config.validate()?;
    let eval_tasks = config.eval_tasks()?;
    let mut runner = SftRunner::new(config, init_params(config)?, &eval_tasks)?;
    let metrics = runner.run_epochs(config.sft.epochs, "sft")?;
    Ok((runner.params, metrics))
}

/// Stage 2: GRPO from `initial`, which also serves as the frozen KL reference.
pub fn run_grpo(
    config: &TrainConfig,
    initial: &PolicyParams,
) -> Result<(PolicyParams, Vec<StepMetrics>)> {
    let eval_tasks = config.eval_tasks()?;
    run_grpo_with(config, initial, &eval_tasks, |_, _, _| {})
}

/// [`run_grpo`] with a hook that sees each step's groups and the frozen
/// reference before the update.
pub fn run_grpo_with<F>(
    config: &TrainConfig,
    initial: &PolicyParams,
    eval_tasks: &[TaskInstance],
    mut on_step: F,
) -> Result<(PolicyParams, Vec<StepMetrics>)>
where
    F: FnMut(usize, &[GroupRollout], &PolicyParams),
{
    config.validate()?;
    let expected = config.dims()?;
    if initial.dims != expected {
        return Err(Error::DimensionMismatch {
            expected: expected.num_params(),
            got: initial.len(),
        });
    }
    let algo = config.grpo.algorithm;
    let mix = config.task_mix();
    let reference = initial.clone_snapshot();
    let mut params = initial.clone();
    let mut optimizer = new_optimizer(&params, &algo);
    let pool = match config.grpo.pool_size {
        Some(n) => Some(mix.tasks(config.seed, stream::POOL, n)?),
        None => None,
    };
    let mut metrics = Vec::with_capacity(config.grpo.steps);
    for step in 0..config.grpo.steps {
        let tasks: Vec<TaskInstance> = match &pool {
            Some(pool) => {
                let mut rng = rng_for(config.seed, &[stream::POOL, step as u64]);
                (0..config.grpo.tasks_per_step)
                    .map(|_| pool[rng.random_range(0..pool.len())].clone())
                    .collect()
            }
            None => (0..config.grpo.tasks_per_step)
                .map(|slot| mix.task(config.seed, &[stream::GRPO_TASK, step as u64, slot as u64]))
                .collect::<Result<_>>()?,
        };
        let snapshot = &params;
        let groups = tasks
            .par_iter()
            .enumerate()
            .map(|(slot, task)| {
                let mut rng = rng_for(
                    config.seed,
                    &[stream::GRPO_SAMPLE, step as u64, slot as u64],
                );
                build_group(task, snapshot, &algo, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        on_step(step, &groups, &reference);
        let eval = if step % config.eval.every_k_steps == 0 {
            Some(evaluate(&params, eval_tasks, config.eval.tau)?.acc_at_tau)
        } else {
            None
        };
        let mut m = grpo_step(
            &mut params,
            &reference,
            &groups,
            &mut optimizer,
            &algo,
            step,
        )?;
        m.eval_acc_at_05 = eval;
        metrics.push(m);
    }
    Ok((params, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub generated_by: String,
    pub config: TrainConfig,
    pub stage_mode: StageMode,
    pub total_gradient_steps: usize,
    pub stage1_eval: Option<EvalResult>,
    pub final_eval: EvalResult,
    pub final_grpo_metrics: Option<StepMetrics>,
    pub final_checksum: u64,
    pub files: Vec<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub params: PolicyParams,
    pub stage1_params: Option<PolicyParams>,
    pub sft_metrics: Vec<SftMetrics>,
    pub grpo_metrics: Vec<StepMetrics>,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SFT_METRICS_FILE: &str = "sft_metrics.jsonl";
pub const STAGE1_CHECKPOINT: &str = "checkpoint_stage1.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";
pub const REPORT_FILE: &str = "report.json";

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in rows {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

/// Runs the configured stage mode. With `out_dir`, writes metrics, a
/// checkpoint at each stage boundary and the report.
pub fn run_experiment(config: &TrainConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    config.validate()?;
    let eval_tasks = config.eval_tasks()?;
    let mut sft_metrics = Vec::new();
    let mut grpo_metrics = Vec::new();
    let mut stage1 = None;
    let params = match config.stage_mode {
        StageMode::SftOnly | StageMode::SftThenGrpo | StageMode::SftThenCotSftMore => {
            let mut runner = SftRunner::new(config, init_params(config)?, &eval_tasks)?;
            sft_metrics = runner.run_epochs(config.sft.epochs, "sft")?;
            stage1 = Some(runner.params.clone());
            match config.stage_mode {
                StageMode::SftOnly => runner.params,
                StageMode::SftThenCotSftMore => {
                    sft_metrics.extend(runner.run_steps(config.grpo.steps, "sft_more")?);
                    runner.params
                }
                _ => {
                    let (p, m) = run_grpo_with(config, &runner.params, &eval_tasks, |_, _, _| {})?;
                    grpo_metrics = m;
                    p
                }
            }
        }
        StageMode::PureRl => {
            let (p, m) = run_grpo_with(config, &init_params(config)?, &eval_tasks, |_, _, _| {})?;
            grpo_metrics = m;
            p
        }
    };
    let stage1_eval = stage1
        .as_ref()
        .map(|p| evaluate(p, &eval_tasks, config.eval.tau))
        .transpose()?;
    let final_eval = evaluate(&params, &eval_tasks, config.eval.tau)?;

    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut put = |name: &str| -> PathBuf {
            files.push(name.to_string());
            dir.join(name)
        };
        write_jsonl(&put(METRICS_FILE), &grpo_metrics)?;
        write_jsonl(&put(SFT_METRICS_FILE), &sft_metrics)?;
        if let Some(p) = &stage1 {
            checkpoint::save(&put(STAGE1_CHECKPOINT), p, config.seed, "sft")?;
        }
        let stage = match config.stage_mode {
            StageMode::SftOnly => "sft",
            StageMode::SftThenCotSftMore => "sft_more",
            _ => "grpo",
        };
        checkpoint::save(&put(FINAL_CHECKPOINT), &params, config.seed, stage)?;
        files.push(REPORT_FILE.to_string());
    }
    let report = ExperimentReport {
        generated_by: config.hash(),
        config: *config,
        stage_mode: config.stage_mode,
        total_gradient_steps: config.total_gradient_steps(),
        stage1_eval,
        final_eval,
        final_grpo_metrics: grpo_metrics.last().cloned(),
        final_checksum: params.checksum(),
        files,
    };
    if let Some(dir) = out_dir {
        let mut s = report.to_json()?;
        s.push('\n');
        fs::write(dir.join(REPORT_FILE), s)?;
    }
    Ok(ExperimentOutcome {
        report,
        params,
        stage1_params: stage1,
        sft_metrics,
        grpo_metrics,
    })
}
