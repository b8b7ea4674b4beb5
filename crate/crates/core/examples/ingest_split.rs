//! Reads a small CSV log, applies a 2-core filter and splits users into
//! train/valid/test with profile/holdout halves for the held-out users.
//!
//! cargo run --example ingest_split

use multi_interest::data::{ingest, split, Format, SplitConfig, SplitTag};

fn main() -> multi_interest::Result<()> {
    let dir = std::env::temp_dir().join("mirec-ingest");
    std::fs::create_dir_all(&dir).map_err(|e| multi_interest::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("log.csv");
    let mut text = String::from("user,item,timestamp\n");
    for u in 0..30 {
        for t in 0..8 {
            text.push_str(&format!("alice{u},movie{},{}\n", (u * 3 + t * 7) % 25, 1000 + t));
        }
    }
    text.push_str("loner,rare_item,5\n");
    std::fs::write(&path, text).map_err(|e| multi_interest::Error::Io { path: path.clone(), source: e })?;

    let log = ingest(&path, Format::from_path(&path))?;
    println!("ingested {} users, {} items, {} rows", log.num_users(), log.num_items(), log.len());
    let log = log.k_core(2);
    println!("after 2-core: {} users, {} items", log.num_users(), log.num_items());

    let cfg = SplitConfig {
        min_interactions: 5,
        ..SplitConfig::default()
    };
    let s = split(&log, &cfg, 0)?;
    for tag in [SplitTag::Train, SplitTag::Valid, SplitTag::Test] {
        println!("{}: {} users", tag.name(), s.users(tag).len());
    }
    if let Some(u) = s.held_out(SplitTag::Test).first() {
        println!("test user {}: profile {:?} holdout {:?}", log.users[u.user], u.profile, u.holdout);
    }
    Ok(())
}
