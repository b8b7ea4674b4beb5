//! Generates the planted-cluster dataset and checks how often each position
//! follows its planted interest.
//!
//! cargo run --example synth_dataset -- [out_dir]

use std::path::PathBuf;

use multi_interest::cli::cmd_synth;
use multi_interest::data::{generate_synthetic, SyntheticSpec};

fn main() -> multi_interest::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mirec-synth"), PathBuf::from);
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    println!(
        "{} users, {} items, {} interactions",
        data.log.num_users(),
        data.log.num_items(),
        data.log.len()
    );

    let noise = data.labels.iter().filter(|l| l.source.is_none()).count();
    println!(
        "noise positions: {noise} ({:.3} of all, configured {})",
        noise as f64 / data.labels.len() as f64,
        spec.noise_rate
    );
    let on_cluster = data
        .labels
        .iter()
        .filter(|l| l.source.is_some_and(|c| spec.cluster_of(l.item) == c))
        .count();
    println!("planted positions landing in their cluster: {on_cluster}");
    println!("user 0 clusters: {:?}", data.user_clusters[0]);

    let written = cmd_synth(&spec, &out)?;
    println!("wrote {} and {}", written.interactions.display(), written.labels.display());
    Ok(())
}
