//! Trains briefly on planted data, then scores how well interests line up
//! with item clusters (INTER and INTRA) and exports the embeddings.
//!
//! cargo run --release --example diagnostics -- [epochs]

use multi_interest::data::{generate_synthetic, split, SplitConfig, SplitTag, SyntheticSpec};
use multi_interest::diagnostics::{diagnose, export_embeddings, DiagnosticsConfig};
use multi_interest::planted::{planted_hyper_params, planted_train_config};
use multi_interest::trainer::{fit, TrainConfig};

fn main() -> multi_interest::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let s = split(&data.log, &SplitConfig::default(), 0)?;
    let hp = planted_hyper_params();
    let train = TrainConfig {
        epochs,
        ..planted_train_config(0)
    };
    let fitted = fit(&s.train_sequences(), data.log.num_items(), &[], &hp, &train, &mut std::io::sink())?;

    let users = s.held_out(SplitTag::Test);
    let (report, embeddings) = diagnose(&fitted.params, &hp, &users, &DiagnosticsConfig::default())?;
    print!("{}", report.to_text());

    let path = std::env::temp_dir().join("mirec-embeddings.tsv");
    let rows = export_embeddings(&path, &fitted.params, &embeddings, &data.log.users)?;
    println!("exported {rows} rows to {}", path.display());
    Ok(())
}
