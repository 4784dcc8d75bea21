//! Sampling a group of responses from a freshly initialized policy and
//! checking their log-probabilities.

use grpo_ground::env::{generate_task, EnvSpec};
use grpo_ground::policy::{forward, logprob, sample};
use grpo_ground::{PolicyDims, PolicyParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> grpo_ground::Result<()> {
    let spec = EnvSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let task = generate_task(&mut rng, &spec)?;
    let params = PolicyParams::init(PolicyDims::new(spec.feature_dim(), 32, spec.g)?, 7);

    let fwd = forward(&params, &task.features)?;
    let (greedy, fmt) = fwd.greedy();
    println!("greedy bins {greedy:?}, format {fmt:?}");
    for r in sample(&params, &task.features, &mut rng, 8)? {
        let lp = logprob(&params, &task.features, &r)?;
        println!(
            "{:?} {:?} logp {:.4} (recomputed {:.4})",
            r.bins, r.format_token, r.logprob_old, lp
        );
    }
    Ok(())
}
