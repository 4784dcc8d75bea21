//! Cold-start SFT followed by GRPO, compared with pure RL and with vanilla
//! (unweighted) GRPO at the same step budget. Pass a seed as the first
//! argument; the default is 0.

use grpo_ground::trainer::{run_experiment, StageMode, TrainConfig};
use grpo_ground::PhiKind;

fn main() -> grpo_ground::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let mut base = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    base.env.distractor_similarity = 0.7;

    let mut pure = base;
    pure.stage_mode = StageMode::PureRl;
    pure.grpo.steps = base.total_gradient_steps();
    let mut vanilla = base;
    vanilla.grpo.algorithm.phi_kind = PhiKind::None;
    let mut sft_only = base;
    sft_only.stage_mode = StageMode::SftOnly;

    for (name, cfg) in [
        ("sft only", sft_only),
        ("sft + grpo", base),
        ("sft + vanilla grpo", vanilla),
        ("pure rl", pure),
    ] {
        let o = run_experiment(&cfg, None)?;
        let r = &o.report;
        println!(
            "{name:>18}: {:>5} steps  Acc@0.5 {:.3}  mean IoU {:.3}  format {:.3}",
            r.total_gradient_steps,
            r.final_eval.acc_at_tau,
            r.final_eval.mean_iou,
            r.final_eval.format_rate
        );
    }
    Ok(())
}
