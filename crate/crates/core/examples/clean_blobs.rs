//! Runs the full pipeline on the default blob fixture and prints the label
//! accuracy after each cleaning step.
//!
//! `cargo run --release --example clean_blobs -- [seed] [policy_epochs]`

use relabel_core::experiment::{run_pipeline, BlobFixture};
use relabel_core::TrainConfig;

fn main() -> relabel_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let policy_epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);

    let fx = BlobFixture { seed, ..BlobFixture::default() }.build()?;
    let config = TrainConfig { seed, policy_epochs, ..TrainConfig::default() };
    let out = run_pipeline(&config, &fx.train, Some(&fx.train_truth), Some((&fx.test, &fx.test_truth)))?;

    for (step, acc) in out.metrics.correction_accuracy.iter().enumerate() {
        println!("step {step:>2}  label accuracy {acc:.3}");
    }
    if let Some(acc) = out.metrics.test_accuracy {
        println!("test accuracy {acc:.3}");
    }
    Ok(())
}
