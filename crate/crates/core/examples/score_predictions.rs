//! Scoring external responses the way the `score` command does.

use grpo_ground::cli::{score_record, summarize, ScoreRecord};

fn main() -> grpo_ground::Result<()> {
    let records = [
        ("clean", "<think>a</think><answer>(2, 2), (10, 12)</answer>"),
        (
            "decimals",
            "<think>b</think><answer>(0.13, 0.13), (0.67, 0.8)</answer>",
        ),
        ("no tags", "(2, 2), (10, 12)"),
        (
            "wrong place",
            "<think>c</think><answer>(12, 12), (15, 15)</answer>",
        ),
    ];
    let gt = [2.0 / 15.0, 2.0 / 15.0, 10.0 / 15.0, 12.0 / 15.0];
    for salvage in [true, false] {
        let scores: Vec<_> = records
            .iter()
            .map(|(id, text)| {
                let rec = ScoreRecord {
                    id: id.to_string(),
                    prediction_text: text.to_string(),
                    gt,
                };
                score_record(&rec, 16, salvage)
            })
            .collect::<grpo_ground::Result<Vec<_>>>()?;
        println!("salvage = {salvage}");
        for s in &scores {
            println!("  {:>11}: iou {:.3} format {}", s.id, s.iou, s.format);
        }
        println!("  {}", summarize(&scores, 0.5).to_json());
    }
    Ok(())
}
