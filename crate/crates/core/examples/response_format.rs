//! Rendering answers, parsing them back, and what salvage does with a
//! malformed response.

use grpo_ground::response::{bins_to_box, parse, render, THINK_PLACEHOLDER};
use grpo_ground::reward::total_reward;

fn main() -> grpo_ground::Result<()> {
    let g = 16;
    let bins = [2, 4, 11, 13];
    let gt = bins_to_box(bins, g);

    let texts = [
        render(THINK_PLACEHOLDER, bins, false)?,
        render(THINK_PLACEHOLDER, bins, true)?,
        "<think>scan left to right</think><answer>(0.125, 0.25), (0.75, 0.875)</answer>"
            .to_string(),
        "the box is probably (2, 4), (11, 13)".to_string(),
    ];
    for text in &texts {
        let parsed = parse(text, g);
        println!("{text}");
        for salvage in [true, false] {
            let r = total_reward(&parsed, &gt, salvage);
            println!(
                "  salvage={salvage:<5} format={} acc={:.3} total={:.3}",
                r.format, r.acc, r.total
            );
        }
    }
    Ok(())
}
