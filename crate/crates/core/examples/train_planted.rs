//! Trains the base model and the fully regularized model on the planted
//! synthetic set and compares retrieval quality and interest diversity.
//!
//! cargo run --release --example train_planted -- [seeds] [epochs]

use std::time::Instant;

use multi_interest::data::SyntheticSpec;
use multi_interest::planted::{planted_hyper_params, planted_train_config, run_planted, without_backward_flows};

fn main() -> multi_interest::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);

    let full = planted_hyper_params();
    let base = without_backward_flows(&full);
    println!("seed\tmodel\trecall@20\tndcg@20\thit@20\tintra_cos\tintra\tinter\tbest_epoch\tsecs");
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            seed: 100 + seed,
            ..SyntheticSpec::default()
        };
        for (name, hp) in [("base", &base), ("re4", &full)] {
            let cfg = multi_interest::trainer::TrainConfig {
                epochs,
                ..planted_train_config(seed)
            };
            let t = Instant::now();
            let out = run_planted(&spec, hp, &cfg)?;
            println!(
                "{seed}\t{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.1}",
                out.test.recall(20),
                out.test.ndcg(20),
                out.test.hitrate(20),
                out.diagnostics.mean_intra_cosine,
                out.diagnostics.intra.value,
                out.diagnostics.inter.value,
                out.best_epoch,
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
