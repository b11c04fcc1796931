//! Train on phantom slices and score held-out phantom volumes.
//!
//! ```text
//! cargo run --release -p flexconn --example phantom_experiment -- \
//!     [depth] [last_filters] [patch] [epochs] [batch] [learning_rate] [seed]
//! ```
//!
//! Loop over `depth` or `patch` from a shell to reproduce depth and patch
//! size sweeps.

use flexconn::experiment::PhantomExperiment;
use flexconn::training::TrainingConfig;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let exp = PhantomExperiment {
        depth: arg(&args, 0, 2),
        last_filters: arg(&args, 1, 8),
        training: TrainingConfig {
            patch: arg(&args, 2, 35),
            epochs: arg(&args, 3, 10),
            batch_size: arg(&args, 4, 32),
            learning_rate: arg(&args, 5, 1e-3),
            seed: arg(&args, 6, 0),
            ..TrainingConfig::default()
        },
        ..PhantomExperiment::default()
    };
    let out = exp
        .run(|r| eprintln!("epoch {:>3}  train {:.5}  val {:.5}  {:.1}s", r.epoch, r.train_loss, r.val_loss, r.seconds))
        .unwrap_or_else(|e| {
            eprintln!("error: {e}");
            std::process::exit(2);
        });
    println!("train slices {}, patches {}, {:.1}s", out.train_slices, out.train_patches, out.train_seconds);
    println!("dice at {}: {:?}", exp.threshold, out.test_dice);
    println!("median dice {:.4}", out.median_dice);
    println!("threshold,median_dice");
    for r in &out.sweep {
        println!("{:.2},{:.4}", r.threshold, r.dice);
    }
    println!("best threshold {:.2} ({:.4})", out.best.threshold, out.best.dice);
}
