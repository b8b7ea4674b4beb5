//! Finite-difference check of the full training objective on a tiny model.
//!
//! cargo run --example gradient_check

use multi_interest::gradcore::{check_gradient, Coords, FnObjective, DEFAULT_STEP};
use multi_interest::losses::{example_objective, Example, ExampleSamples};
use multi_interest::model::{BehaviorSequence, HyperParams, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> multi_interest::Result<()> {
    let hp = HyperParams {
        d: 8,
        d_h: 6,
        d_b: 4,
        n_z: 3,
        n_x: 5,
        s_neg: 6,
        ..HyperParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params = ModelParams::init(50, &hp, &mut rng)?;
    params.scale(2.0);
    let seq = BehaviorSequence::new(0, &[3, 17, 42, 8], hp.n_x);
    let samples = ExampleSamples {
        rec_negatives: vec![1, 5, 9, 20, 33, 47],
        seq_negatives: vec![vec![2, 4, 6, 10], vec![11, 12, 13, 14], vec![30, 31, 32, 34]],
    };
    let ex = Example {
        seq: &seq,
        target: 25,
        samples: &samples,
    };

    // Freeze the positive sets, the selected interest and the stop-gradient
    // targets so the objective is smooth around `params`.
    let (values, frozen) = example_objective(&params, &hp, ex, None, None)?;
    println!(
        "L_Rec {:.4}  L_CL {:.4}  L_Att {:.4}  L_CT {:.4}  total {:.4}",
        values.rec,
        values.cl,
        values.att,
        values.ct,
        values.total(&hp)
    );
    println!("positives per interest: {:?}", frozen.sets.positives);

    let obj = FnObjective::new(
        |p: &ModelParams| Ok(example_objective(p, &hp, ex, Some(&frozen), None)?.0.total(&hp)),
        |p: &ModelParams| {
            let mut g = p.zeros_like();
            example_objective(p, &hp, ex, Some(&frozen), Some(&mut g))?;
            Ok(g)
        },
    );
    let err = check_gradient(&obj, &params, DEFAULT_STEP, Coords::All)?;
    println!("max relative error over all coordinates: {err:.2e}");
    Ok(())
}
