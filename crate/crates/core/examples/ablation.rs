//! Adds the backward flows one at a time on the planted set, in the order
//! base, +L_Att, +L_CL, +L_CT.
//!
//! cargo run --release --example ablation -- [seeds]

use multi_interest::data::SyntheticSpec;
use multi_interest::model::HyperParams;
use multi_interest::planted::{median, planted_hyper_params, planted_train_config, run_planted};

fn main() -> multi_interest::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let full = planted_hyper_params();
    let with = |cl: bool, att: bool, ct: bool| HyperParams {
        lambda_cl: if cl { full.lambda_cl } else { 0.0 },
        lambda_att: if att { full.lambda_att } else { 0.0 },
        lambda_ct: if ct { full.lambda_ct } else { 0.0 },
        ..full.clone()
    };
    let variants = [
        ("base", with(false, false, false)),
        ("+L_Att", with(false, true, false)),
        ("+L_CL", with(true, true, false)),
        ("+L_CT", with(true, true, true)),
    ];
    println!("variant\trecall@20\tndcg@20\tintra_cos\t(medians over {seeds} seeds)");
    for (name, hp) in &variants {
        let mut recall = Vec::new();
        let mut ndcg = Vec::new();
        let mut cos = Vec::new();
        for seed in 0..seeds {
            let spec = SyntheticSpec {
                seed: 100 + seed,
                ..SyntheticSpec::default()
            };
            let out = run_planted(&spec, hp, &planted_train_config(seed))?;
            recall.push(out.test.recall(20));
            ndcg.push(out.test.ndcg(20));
            cos.push(out.diagnostics.mean_intra_cosine);
        }
        println!("{name}\t{:.4}\t{:.4}\t{:.4}", median(&recall), median(&ndcg), median(&cos));
    }
    Ok(())
}
