//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails. Tolerances and budgets are pinned
//! below as constants.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use grpo_ground::env::{EnvSpec, TaskInstance};
use grpo_ground::grpo::{
    advantages, build_group, grpo_grad, grpo_objective, kl_estimate, GroupRollout, GrpoConfig,
};
use grpo_ground::policy::{
    forward, logprob, sft_loss_and_grad, FormatToken, SampledResponse, SftExample,
};
use grpo_ground::response::{bins_to_box, render, THINK_PLACEHOLDER};
use grpo_ground::reward::{phi, PhiKind};
use grpo_ground::trainer::{
    run_experiment, ExperimentOutcome, StageMode, StepMetrics, TrainConfig,
};
use grpo_ground::{iou, BBox, PolicyDims, PolicyParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IOU_PAIRS: usize = 1000;
const RASTER: usize = 2000;
const IOU_TOL: f64 = 2e-3;
const IOU_BUDGET: Duration = Duration::from_secs(30);

const FD_INSTANCES: u64 = 20;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
// Relative error denominator floor for entries whose true gradient is ~0.
const FD_FLOOR: f64 = 1e-6;
const FD_BUDGET: Duration = Duration::from_secs(60);

const ADV_VECTORS: usize = 10_000;
const ADV_TOL: f64 = 1e-9;
const ADV_BUDGET: Duration = Duration::from_secs(10);

const KL_PAIRS: usize = 10_000;
const KL_ENUM_PAIRS: u64 = 50;
const KL_TOL: f64 = 1e-9;
const KL_BUDGET: Duration = Duration::from_secs(60);

const PHI_GRID: usize = 1000;
const PHI_TOL: f64 = 1e-12;

const VANILLA_GROUPS: u64 = 100;

const SEEDS: u64 = 5;
const MIN_SEED_WINS: usize = 4;
const BENCH_SIMILARITY: f64 = 0.7;
const HARD_SIMILARITY: f64 = 0.9;
const HARD_FRACTION: f64 = 0.5;
const POOL_SIZE: usize = 1000;
const POOL_STEPS: usize = 400;
const ARM_BUDGET: Duration = Duration::from_secs(600);

const SCORE_RECORDS: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("C1 IoU raster-oracle equivalence", c1_iou_oracle),
        ("C2 gradient correctness", c2_gradients),
        ("C3 advantage normalization", c3_advantages),
        ("C4 KL estimator", c4_kl),
        ("C5 difficulty coefficient family", c5_phi),
        ("C6 vanilla recovery", c6_vanilla),
        ("C7 cold-start beats pure RL", c7_stage_ablation),
        (
            "C8 difficulty weighting on hard mix",
            c8_difficulty_weighting,
        ),
        ("C9 easy-fraction drift on a fixed pool", c9_drift),
        ("C10 GRPO improves over SFT", c10_grpo_over_sft),
        ("C11 training determinism", c11_determinism),
        ("C12 scoring round trip", c12_score_round_trip),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {name}: {} ({:.1}s)",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- C1

// Cell-center counting on an n×n grid. Because both boxes are axis aligned,
// the 2-D count factorizes into per-axis counts.
fn centers_in(lo: f64, hi: f64, n: usize) -> usize {
    (0..n)
        .filter(|&i| {
            let c = (i as f64 + 0.5) / n as f64;
            lo <= c && c < hi
        })
        .count()
}

fn raster_iou(a: &BBox, b: &BBox, n: usize) -> f64 {
    let cells =
        |x1: f64, y1: f64, x2: f64, y2: f64| (centers_in(x1, x2, n) * centers_in(y1, y2, n)) as f64;
    let ca = cells(a.x1, a.y1, a.x2, a.y2);
    let cb = cells(b.x1, b.y1, b.x2, b.y2);
    let ci = cells(
        a.x1.max(b.x1),
        a.y1.max(b.y1),
        a.x2.min(b.x2),
        a.y2.min(b.y2),
    );
    let union = ca + cb - ci;
    if union == 0.0 {
        0.0
    } else {
        ci / union
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    let (c, d): (f64, f64) = (rng.random(), rng.random());
    BBox::new(a.min(b), c.min(d), a.max(b), c.max(d))
}

fn c1_iou_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < IOU_PAIRS {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        // both boxes must cover at least one cell for the oracle to be meaningful
        if a.area() < 2.5e-3 || b.area() < 2.5e-3 {
            continue;
        }
        worst = worst.max((iou(&a, &b) - raster_iou(&a, &b, RASTER)).abs());
        n += 1;
    }
    let elapsed = t.elapsed();
    outcome(
        worst <= IOU_TOL && elapsed < IOU_BUDGET,
        format!("max |iou - raster| = {worst:.2e} over {n} pairs (tol {IOU_TOL:.0e})"),
    )
}

// ---------------------------------------------------------------- C2

fn random_params(dims: PolicyDims, rng: &mut ChaCha8Rng, scale: f64) -> PolicyParams {
    let data = (0..dims.num_params())
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    PolicyParams::from_flat(dims, data).unwrap()
}

fn random_features(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn small_dims(rng: &mut ChaCha8Rng) -> PolicyDims {
    PolicyDims::new(
        rng.random_range(2..=8),
        rng.random_range(2..=8),
        rng.random_range(2..=4),
    )
    .unwrap()
}

fn synthetic_task(features: Vec<f64>, rng: &mut ChaCha8Rng) -> TaskInstance {
    let x1 = rng.random_range(0.0..0.5);
    let y1 = rng.random_range(0.0..0.5);
    TaskInstance {
        features,
        gt_box: BBox::new(
            x1,
            y1,
            x1 + rng.random_range(0.2..0.5),
            y1 + rng.random_range(0.2..0.5),
        ),
        target_index: 0,
        n_objects: 1,
        distractor_similarity: 0.0,
    }
}

fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(fd.abs()).max(FD_FLOOR)
}

fn fd_max_rel<F: Fn(&PolicyParams) -> f64>(theta: &PolicyParams, grad: &PolicyParams, f: F) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        plus.as_mut_slice()[i] += FD_STEP;
        let mut minus = theta.clone();
        minus.as_mut_slice()[i] -= FD_STEP;
        let fd = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grad.as_slice()[i], fd));
    }
    worst
}

fn c2_gradients() -> Outcome {
    let t = Instant::now();
    let (mut worst_sft, mut worst_grpo): (f64, f64) = (0.0, 0.0);
    for seed in 0..FD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let dims = small_dims(&mut rng);
        let theta = random_params(dims, &mut rng, 0.8);

        let batch: Vec<SftExample> = (0..4)
            .map(|_| SftExample {
                features: random_features(dims.d, &mut rng),
                bins: std::array::from_fn(|_| rng.random_range(0..dims.g)),
            })
            .collect();
        let (_, g) = sft_loss_and_grad(&theta, &batch).unwrap();
        worst_sft = worst_sft.max(fd_max_rel(&theta, &g, |p| {
            sft_loss_and_grad(p, &batch).unwrap().0
        }));

        let cfg = GrpoConfig {
            n: 4,
            beta: 0.2,
            ..GrpoConfig::default()
        };
        let old = random_params(dims, &mut rng, 0.8);
        let reference = random_params(dims, &mut rng, 0.8);
        let task = synthetic_task(random_features(dims.d, &mut rng), &mut rng);
        let mut group = build_group(&task, &old, &cfg, &mut rng).unwrap();
        if group.advantages.iter().all(|a| *a == 0.0) {
            group.advantages = vec![1.0, -1.0, 0.5, -0.5];
        }
        let g = grpo_grad(&group, &theta, &old, &reference, &cfg).unwrap();
        worst_grpo = worst_grpo.max(fd_max_rel(&theta, &g, |p| {
            grpo_objective(&group, p, &old, &reference, &cfg).unwrap()
        }));
    }
    let elapsed = t.elapsed();
    outcome(
        worst_sft < FD_REL_TOL && worst_grpo < FD_REL_TOL && elapsed < FD_BUDGET,
        format!(
            "max rel err sft {worst_sft:.2e}, grpo {worst_grpo:.2e} over {FD_INSTANCES} instances (tol {FD_REL_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------- C3

fn c3_advantages() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    let mut zero_groups = 0;
    let mut zero_ok = true;
    for i in 0..ADV_VECTORS {
        let n = rng.random_range(2..=16);
        let rewards: Vec<f64> = if i % 10 == 0 {
            vec![rng.random_range(0.0..2.0); n]
        } else {
            (0..n).map(|_| rng.random_range(0.0..2.0)).collect()
        };
        let mean = rewards.iter().sum::<f64>() / n as f64;
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let adv = advantages(&rewards, 1e-8).unwrap();
        if std > 1e-8 {
            let m = adv.iter().sum::<f64>() / n as f64;
            let s = (adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst_mean = worst_mean.max(m.abs());
            worst_std = worst_std.max((s - 1.0).abs());
        } else {
            zero_groups += 1;
            zero_ok &= adv.iter().all(|a| *a == 0.0);
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst_mean <= ADV_TOL && worst_std <= ADV_TOL && zero_ok && zero_groups > 0 && elapsed < ADV_BUDGET,
        format!(
            "max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}, {zero_groups} zero-variance groups all-zero: {zero_ok}"
        ),
    )
}

// ---------------------------------------------------------------- C4

fn c4_kl() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut nonneg = true;
    let mut equality = true;
    for i in 0..KL_PAIRS {
        let a = rng.random_range(-20.0..0.0);
        let b = if i % 7 == 0 {
            a
        } else {
            rng.random_range(-20.0..0.0)
        };
        let k = kl_estimate(a, b).unwrap();
        nonneg &= k >= 0.0;
        equality &= (k == 0.0) == (a == b);
    }

    let mut worst: f64 = 0.0;
    for seed in 0..KL_ENUM_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let dims = PolicyDims::new(4, 3, 3).unwrap();
        let theta = random_params(dims, &mut rng, 1.5);
        let reference = random_params(dims, &mut rng, 1.5);
        let x = random_features(4, &mut rng);
        let (ft, fr) = (
            forward(&theta, &x).unwrap(),
            forward(&reference, &x).unwrap(),
        );
        // analytic KL of a product of independent categoricals: sum of head KLs
        let analytic: f64 = (0..5)
            .map(|k| {
                let (p, q) = (ft.probs(k), fr.probs(k));
                p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum::<f64>()
            })
            .sum();
        let mut expected = 0.0;
        for b0 in 0..3 {
            for b1 in 0..3 {
                for b2 in 0..3 {
                    for b3 in 0..3 {
                        for f in [FormatToken::Ok, FormatToken::Broken] {
                            let r = SampledResponse {
                                bins: [b0, b1, b2, b3],
                                format_token: f,
                                logprob_old: 0.0,
                                rendered: String::new(),
                            };
                            let lt = logprob(&theta, &x, &r).unwrap();
                            let lr = logprob(&reference, &x, &r).unwrap();
                            expected += lt.exp() * kl_estimate(lt, lr).unwrap();
                        }
                    }
                }
            }
        }
        worst = worst.max((expected - analytic).abs());
    }
    let elapsed = t.elapsed();
    outcome(
        nonneg && equality && worst <= KL_TOL && elapsed < KL_BUDGET,
        format!(
            "non-negative: {nonneg}, zero iff equal: {equality}, max |E[k3] - KL| = {worst:.1e} over {KL_ENUM_PAIRS} enumerated pairs"
        ),
    )
}

// ---------------------------------------------------------------- C5

fn c5_phi() -> Outcome {
    let kinds = [
        PhiKind::NegLog,
        PhiKind::SquaredComplement,
        PhiKind::ExpComplement,
    ];
    let monotone = kinds.iter().all(|&k| {
        (1..=PHI_GRID).all(|i| {
            let (a, b) = ((i - 1) as f64 / PHI_GRID as f64, i as f64 / PHI_GRID as f64);
            phi(k, a) >= phi(k, b)
        })
    });
    let pinned = [
        (phi(PhiKind::ExpComplement, 0.0), std::f64::consts::E),
        (phi(PhiKind::ExpComplement, 1.0), 1.0),
        (phi(PhiKind::NegLog, 1.0), 0.0),
        (phi(PhiKind::SquaredComplement, 0.5), 0.25),
    ];
    let pinned_ok = pinned
        .iter()
        .all(|(got, want)| (got - want).abs() <= PHI_TOL);
    let neglog0 = phi(PhiKind::NegLog, 0.0);
    outcome(
        monotone && pinned_ok && neglog0.is_finite(),
        format!("monotone on {PHI_GRID}-point grid: {monotone}, pinned values: {pinned_ok}, NegLog(0) = {neglog0:.4}"),
    )
}

// ---------------------------------------------------------------- C6

// Unweighted objective written out directly: mean of ratio·A − β·k3.
fn plain_objective(
    group: &GroupRollout,
    theta: &PolicyParams,
    old: &PolicyParams,
    reference: &PolicyParams,
    beta: f64,
) -> f64 {
    let x = &group.task.features;
    let mut total = 0.0;
    for (r, a) in group.responses.iter().zip(&group.advantages) {
        let lt = logprob(theta, x, r).unwrap();
        let lo = logprob(old, x, r).unwrap();
        let lr = logprob(reference, x, r).unwrap();
        total += (lt - lo).exp() * a - beta * kl_estimate(lt, lr).unwrap();
    }
    total / group.responses.len() as f64
}

fn c6_vanilla() -> Outcome {
    let spec = EnvSpec::default();
    let cfg = GrpoConfig {
        phi_kind: PhiKind::None,
        ..GrpoConfig::default()
    };
    let mut mismatches = 0;
    for seed in 0..VANILLA_GROUPS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let task = grpo_ground::env::generate_task(&mut rng, &spec).unwrap();
        let dims = PolicyDims::new(spec.feature_dim(), 6, spec.g).unwrap();
        let old = random_params(dims, &mut rng, 0.5);
        let theta = random_params(dims, &mut rng, 0.5);
        let reference = random_params(dims, &mut rng, 0.5);
        let group = build_group(&task, &old, &cfg, &mut rng).unwrap();
        let got = grpo_objective(&group, &theta, &old, &reference, &cfg).unwrap();
        let want = plain_objective(&group, &theta, &old, &reference, cfg.beta);
        if got.to_bits() != want.to_bits() || group.weight != 1.0 {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!(
            "{mismatches} of {VANILLA_GROUPS} groups differ bit-wise from the unweighted objective"
        ),
    )
}

// ---------------------------------------------------------------- C7-C10

fn bench_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    c.env.distractor_similarity = BENCH_SIMILARITY;
    c
}

fn run(c: &TrainConfig) -> (ExperimentOutcome, Duration) {
    let t = Instant::now();
    let o = run_experiment(c, None).expect("experiment runs");
    (o, t.elapsed())
}

fn benchmark_runs() -> &'static [(ExperimentOutcome, Duration)] {
    use std::sync::OnceLock;
    static RUNS: OnceLock<Vec<(ExperimentOutcome, Duration)>> = OnceLock::new();
    RUNS.get_or_init(|| (0..SEEDS).map(|s| run(&bench_config(s))).collect())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c7_stage_ablation() -> Outcome {
    let staged = benchmark_runs();
    let mut wins = 0;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut slowest = Duration::ZERO;
    for (seed, (s, ts)) in staged.iter().enumerate() {
        let mut pure = bench_config(seed as u64);
        pure.stage_mode = StageMode::PureRl;
        pure.grpo.steps = bench_config(seed as u64).total_gradient_steps();
        assert_eq!(pure.total_gradient_steps(), s.report.total_gradient_steps);
        let (p, tp) = run(&pure);
        slowest = slowest.max(*ts).max(tp);
        let (x, y) = (
            s.report.final_eval.acc_at_tau,
            p.report.final_eval.acc_at_tau,
        );
        wins += usize::from(x > y);
        a.push(x);
        b.push(y);
    }
    outcome(
        wins >= MIN_SEED_WINS && slowest < ARM_BUDGET,
        format!(
            "SFT+GRPO > PureRL on {wins}/{SEEDS} seeds at {} steps each; acc [{}] vs [{}]",
            staged[0].0.report.total_gradient_steps,
            fmt_list(&a),
            fmt_list(&b)
        ),
    )
}

fn c8_difficulty_weighting() -> Outcome {
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..SEEDS {
        let mut weighted = bench_config(seed);
        weighted.mix_env = Some(EnvSpec {
            distractor_similarity: HARD_SIMILARITY,
            ..weighted.env
        });
        weighted.mix_fraction = HARD_FRACTION;
        weighted.grpo.algorithm.phi_kind = PhiKind::ExpComplement;
        let mut vanilla = weighted;
        vanilla.grpo.algorithm.phi_kind = PhiKind::None;
        let (w, _) = run(&weighted);
        let (v, _) = run(&vanilla);
        let gap = w.report.final_eval.acc_at_tau - v.report.final_eval.acc_at_tau;
        wins += usize::from(gap >= 0.0);
        gaps.push(gap);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    outcome(
        wins >= MIN_SEED_WINS,
        format!(
            "ExpComplement >= vanilla on {wins}/{SEEDS} seeds, mean gap {mean:+.4}, gaps [{}]",
            gaps.iter()
                .map(|g| format!("{g:+.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

fn window_mean(m: &[StepMetrics], f: fn(&StepMetrics) -> f64) -> f64 {
    m.iter().map(f).sum::<f64>() / m.len() as f64
}

fn c9_drift() -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..SEEDS {
        let mut c = bench_config(seed);
        c.grpo.pool_size = Some(POOL_SIZE);
        c.grpo.steps = POOL_STEPS;
        let (o, _) = run(&c);
        let m = &o.grpo_metrics;
        let k = POOL_STEPS / 10;
        let (first, last) = (&m[..k], &m[m.len() - k..]);
        let (e0, e1) = (
            window_mean(first, |s| s.easy_frac),
            window_mean(last, |s| s.easy_frac),
        );
        let (h0, h1) = (
            window_mean(first, |s| s.hard_frac),
            window_mean(last, |s| s.hard_frac),
        );
        wins += usize::from(e1 > e0 && h1 < h0);
        lines.push(format!("easy {e0:.3}->{e1:.3} hard {h0:.3}->{h1:.3}"));
    }
    outcome(
        wins >= MIN_SEED_WINS,
        format!("drift holds on {wins}/{SEEDS} seeds; {}", lines.join("; ")),
    )
}

fn c10_grpo_over_sft() -> Outcome {
    let runs = benchmark_runs();
    let gains: Vec<f64> = runs
        .iter()
        .map(|(o, _)| {
            o.report.final_eval.acc_at_tau - o.report.stage1_eval.expect("stage 1 ran").acc_at_tau
        })
        .collect();
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let wins = gains.iter().filter(|g| **g > 0.0).count();
    outcome(
        mean > 0.0 && wins >= MIN_SEED_WINS,
        format!(
            "final > stage 1 on {wins}/{SEEDS} seeds, mean gain {mean:+.4}, gains [{}]",
            gains
                .iter()
                .map(|g| format!("{g:+.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    )
}

// ---------------------------------------------------------------- C11, C12

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grpo-ground"))
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"seed": 11, "sft": {"n_examples": 256, "epochs": 2}, "grpo": {"steps": 12, "pool_size": 64}, "eval": {"n_tasks": 64, "every_k_steps": 4}}"#,
    )
    .unwrap();
    let train = |out: &Path| {
        bin()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(out)
            .output()
            .unwrap()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (ra, rb) = (train(&a), train(&b));
    if !ra.status.success() || !rb.status.success() {
        return outcome(
            false,
            format!("train failed: {}", String::from_utf8_lossy(&ra.stderr)),
        );
    }
    let files = [
        "metrics.jsonl",
        "sft_metrics.jsonl",
        "checkpoint_stage1.json",
        "checkpoint_final.json",
        "report.json",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok() || !a.join(f).exists())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} files compared, differing: {:?}", files.len(), differing),
    )
}

fn score(path: &Path, salvage: bool) -> serde_json::Value {
    let mut cmd = bin();
    cmd.args(["score", "--predictions"]).arg(path);
    if !salvage {
        cmd.arg("--no-salvage");
    }
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn c12_score_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let g = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut clean, mut broken) = (String::new(), String::new());
    for i in 0..SCORE_RECORDS {
        let (a, b) = (rng.random_range(0..g - 1), rng.random_range(0..g - 1));
        let bins = [a, b, rng.random_range(a + 1..g), rng.random_range(b + 1..g)];
        let gt = bins_to_box(bins, g).to_array();
        for (buf, corrupt) in [(&mut clean, false), (&mut broken, true)] {
            let rec = serde_json::json!({
                "id": format!("r{i}"),
                "prediction_text": render(THINK_PLACEHOLDER, bins, corrupt).unwrap(),
                "gt": gt,
            });
            buf.push_str(&rec.to_string());
            buf.push('\n');
        }
    }
    let (p_clean, p_broken) = (
        dir.path().join("clean.jsonl"),
        dir.path().join("broken.jsonl"),
    );
    fs::write(&p_clean, clean).unwrap();
    fs::write(&p_broken, broken).unwrap();
    let key = "acc_at_0.5";
    let c = score(&p_clean, true);
    let bs = score(&p_broken, true);
    let bn = score(&p_broken, false);
    let pass = c[key] == 1.0
        && c["format_rate"] == 1.0
        && bs["format_rate"] == 0.0
        && bs[key] == 1.0
        && bn["format_rate"] == 0.0
        && bn[key] == 0.0
        && c["n"] == SCORE_RECORDS;
    outcome(
        pass,
        format!(
            "clean acc {} fmt {}; corrupted+salvage acc {} fmt {}; corrupted no-salvage acc {} fmt {}",
            c[key], c["format_rate"], bs[key], bs["format_rate"], bn[key], bn["format_rate"]
        ),
    )
}
