//! Trains on a fixed task pool and writes the bucket-fraction chart and CSV
//! to the directory given as the first argument (default: the system temp dir).

use std::path::PathBuf;

use grpo_ground::report::{to_csv, to_svg};
use grpo_ground::trainer::{run_experiment, StepMetrics, TrainConfig};

fn main() -> grpo_ground::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir);
    let mut cfg = TrainConfig::default();
    cfg.env.distractor_similarity = 0.7;
    cfg.grpo.pool_size = Some(1000);
    cfg.grpo.steps = 400;
    let o = run_experiment(&cfg, None)?;

    let svg = out.join("buckets.svg");
    let csv = out.join("buckets.csv");
    std::fs::write(&svg, to_svg(&[("pool", &o.grpo_metrics)]))?;
    std::fs::write(&csv, to_csv(&o.grpo_metrics))?;
    let k = o.grpo_metrics.len() / 10;
    let mean = |m: &[StepMetrics], f: fn(&StepMetrics) -> f64| {
        m.iter().map(f).sum::<f64>() / m.len() as f64
    };
    let (head, tail) = (
        &o.grpo_metrics[..k],
        &o.grpo_metrics[o.grpo_metrics.len() - k..],
    );
    println!(
        "first/last {k} steps: easy {:.3} -> {:.3}, hard {:.3} -> {:.3}",
        mean(head, |s| s.easy_frac),
        mean(tail, |s| s.easy_frac),
        mean(head, |s| s.hard_frac),
        mean(tail, |s| s.hard_frac)
    );
    println!("wrote {} and {}", svg.display(), csv.display());
    Ok(())
}
