//! Max-over-interests top-N retrieval for one user history, next to the
//! ranking each interest would give on its own.
//!
//! cargo run --example retrieve_topn

use multi_interest::eval::retrieve_topn;
use multi_interest::gradcore::DenseMatrix;
use multi_interest::model::{user_interests, HyperParams, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> multi_interest::Result<()> {
    let hp = HyperParams {
        d: 16,
        d_h: 32,
        d_b: 8,
        n_z: 3,
        n_x: 10,
        ..HyperParams::default()
    };
    let params = ModelParams::init(200, &hp, &mut ChaCha8Rng::seed_from_u64(4))?;
    let history = [12, 40, 41, 77, 150, 151, 152];
    let set = user_interests(&params, &hp, &history)?;

    let top = retrieve_topn(&set.interests, &params.item_emb, 10, &history)?;
    println!("merged top-10 (history excluded):");
    for (item, score) in top.items.iter().zip(&top.scores) {
        println!("  item {item:>3}  score {score:+.4}");
    }
    for k in 0..hp.n_z {
        let one = DenseMatrix::from_vec(1, hp.d, set.interest(k).to_vec())?;
        let r = retrieve_topn(&one, &params.item_emb, 5, &history)?;
        println!("interest {k} alone: {:?}", r.items);
    }
    Ok(())
}
