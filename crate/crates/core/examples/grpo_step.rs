//! One GRPO update by hand: build groups, inspect rewards and advantages,
//! then apply the step against a frozen reference.

use grpo_ground::env::{generate_dataset, EnvSpec};
use grpo_ground::grpo::{build_group, grpo_step, new_optimizer, GrpoConfig};
use grpo_ground::{PolicyDims, PolicyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> grpo_ground::Result<()> {
    let spec = EnvSpec::default();
    let cfg = GrpoConfig::default();
    let mut params = PolicyParams::init(PolicyDims::new(spec.feature_dim(), 32, spec.g)?, 1);
    let reference = params.clone_snapshot();
    let mut opt = new_optimizer(&params, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let tasks = generate_dataset(1, 4, &spec)?;
    let groups = tasks
        .iter()
        .map(|t| build_group(t, &params, &cfg, &mut rng))
        .collect::<grpo_ground::Result<Vec<_>>>()?;
    for (i, g) in groups.iter().enumerate() {
        let totals: Vec<String> = g
            .rewards
            .iter()
            .map(|r| format!("{:.2}", r.total))
            .collect();
        let adv: Vec<String> = g.advantages.iter().map(|a| format!("{a:+.2}")).collect();
        println!("group {i}: mIoU {:.3} weight {:.3}", g.miou, g.weight);
        println!("  rewards    [{}]", totals.join(" "));
        println!("  advantages [{}]", adv.join(" "));
    }

    let before = params.checksum();
    let m = grpo_step(&mut params, &reference, &groups, &mut opt, &cfg, 0)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&m).expect("metrics serialize")
    );
    println!("params changed: {}", before != params.checksum());
    Ok(())
}
