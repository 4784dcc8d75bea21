//! The difficulty coefficient family over a group's mean IoU, with the
//! bucket each value falls into.

use grpo_ground::reward::{bucket, phi};
use grpo_ground::PhiKind;

fn main() {
    print!("{:>6} {:>7}", "mIoU", "bucket");
    for k in PhiKind::ALL {
        print!(" {:>18}", format!("{k:?}"));
    }
    println!();
    for i in 0..=10 {
        let m = i as f64 / 10.0;
        print!("{m:>6.1} {:>7}", format!("{:?}", bucket(m)));
        for k in PhiKind::ALL {
            print!(" {:>18.4}", phi(k, m));
        }
        println!();
    }
}
