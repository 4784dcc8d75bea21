//! Box overlap and Acc@τ on a handful of hand-picked pairs.

use grpo_ground::{acc_at_threshold, iou, BBox};

fn main() -> grpo_ground::Result<()> {
    let gt = BBox::ground_truth(0.2, 0.2, 0.6, 0.7, 0.0025)?;
    let preds = [
        ("exact", gt),
        ("shifted", BBox::new(0.25, 0.25, 0.65, 0.75)),
        ("half width", BBox::new(0.2, 0.2, 0.4, 0.7)),
        ("disjoint", BBox::new(0.7, 0.7, 0.9, 0.9)),
        ("inverted", BBox::new(0.6, 0.7, 0.2, 0.2)),
    ];
    for (name, p) in &preds {
        println!("{name:>10}: iou {:.4}", iou(p, &gt));
    }
    let pairs: Vec<_> = preds.iter().map(|(_, p)| (*p, gt)).collect();
    for tau in [0.3, 0.5, 0.7] {
        println!("Acc@{tau}: {:.2}", acc_at_threshold(&pairs, tau)?);
    }
    Ok(())
}
