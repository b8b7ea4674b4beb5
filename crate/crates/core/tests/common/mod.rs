#![allow(dead_code)]

use multi_interest::losses::{example_objective, Example, ExampleSamples, LossValues, Selections};
use multi_interest::model::{BehaviorSequence, HyperParams, ModelParams};
use multi_interest::Result;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VOCAB: usize = 50;

/// d=8, N_x=5, N_z=3, small hidden sizes.
pub fn tiny_hp() -> HyperParams {
    HyperParams {
        d: 8,
        d_h: 6,
        d_b: 4,
        n_z: 3,
        n_x: 5,
        s_neg: 6,
        ..HyperParams::default()
    }
}

pub struct Instance {
    pub params: ModelParams,
    pub seq: BehaviorSequence,
    pub target: usize,
    pub samples: ExampleSamples,
}

impl Instance {
    pub fn example(&self) -> Example<'_> {
        Example {
            seq: &self.seq,
            target: self.target,
            samples: &self.samples,
        }
    }
}

/// Random parameters (scaled up so attention is far from uniform), a
/// sequence of 3 to N_x distinct items, a target, and sampled negatives.
pub fn instance(seed: u64, hp: &HyperParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(VOCAB, hp, &mut rng).unwrap();
    params.scale(2.0);
    let len = rng.random_range(3..=hp.n_x);
    let ids = sample(&mut rng, VOCAB, len + 1).into_vec();
    let (history, target) = (ids[..len].to_vec(), ids[len]);
    let outside: Vec<usize> = (0..VOCAB).filter(|i| !ids.contains(i)).collect();
    let pick = |n: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        sample(rng, outside.len(), n).into_iter().map(|i| outside[i]).collect()
    };
    let rec_negatives = pick(hp.s_neg, &mut rng);
    let seq_negatives = (0..hp.n_z).map(|_| pick(len, &mut rng)).collect();
    Instance {
        params,
        seq: BehaviorSequence::new(0, &history, hp.n_x),
        target,
        samples: ExampleSamples {
            rec_negatives,
            seq_negatives,
        },
    }
}

/// Forward pass that records the selections to freeze.
pub fn selections(inst: &Instance, hp: &HyperParams) -> Selections {
    example_objective(&inst.params, hp, inst.example(), None, None).unwrap().1
}

pub fn frozen_values(p: &ModelParams, hp: &HyperParams, inst: &Instance, sel: &Selections) -> Result<LossValues> {
    Ok(example_objective(p, hp, inst.example(), Some(sel), None)?.0)
}

pub fn frozen_grad(p: &ModelParams, hp: &HyperParams, inst: &Instance, sel: &Selections) -> Result<ModelParams> {
    let mut g = p.zeros_like();
    example_objective(p, hp, inst.example(), Some(sel), Some(&mut g))?;
    Ok(g)
}

/// Which scalar of the objective to check.
#[derive(Clone, Copy, Debug)]
pub enum Term {
    Rec,
    Contrast,
    Attend,
    Construct,
    Total,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Rec, Term::Contrast, Term::Attend, Term::Construct, Term::Total];

    pub fn name(self) -> &'static str {
        match self {
            Term::Rec => "L_Rec",
            Term::Contrast => "L_CL",
            Term::Attend => "L_Att",
            Term::Construct => "L_CT",
            Term::Total => "L_Re4",
        }
    }

    /// Coefficients whose weighted total, minus the plain next-item loss,
    /// isolates this term.
    pub fn weights(self, hp: &HyperParams) -> HyperParams {
        let (cl, att, ct) = match self {
            Term::Rec => (0.0, 0.0, 0.0),
            Term::Contrast => (1.0, 0.0, 0.0),
            Term::Attend => (0.0, 1.0, 0.0),
            Term::Construct => (0.0, 0.0, 1.0),
            Term::Total => (hp.lambda_cl, hp.lambda_att, hp.lambda_ct),
        };
        HyperParams {
            lambda_cl: cl,
            lambda_att: att,
            lambda_ct: ct,
            ..hp.clone()
        }
    }

    pub fn pick(self, v: &LossValues, hp: &HyperParams) -> f64 {
        match self {
            Term::Rec => v.rec,
            Term::Contrast => v.cl,
            Term::Attend => v.att,
            Term::Construct => v.ct,
            Term::Total => v.total(hp),
        }
    }
}

/// Max relative error of the analytic gradient of `term` against central
/// differences over every coordinate, with selections frozen at `inst`.
pub fn fd_error(inst: &Instance, hp: &HyperParams, term: Term, h: f64) -> f64 {
    use multi_interest::gradcore::{check_gradient, Coords, FnObjective};
    let weighted = term.weights(hp);
    let plain = Term::Rec.weights(hp);
    let sel = selections(inst, hp);
    let obj = FnObjective::new(
        |p: &ModelParams| Ok(term.pick(&frozen_values(p, hp, inst, &sel)?, &weighted)),
        |p: &ModelParams| {
            let mut g = frozen_grad(p, &weighted, inst, &sel)?;
            if !matches!(term, Term::Rec | Term::Total) {
                g.axpy(-1.0, &frozen_grad(p, &plain, inst, &sel)?)?;
            }
            Ok(g)
        },
    );
    check_gradient(&obj, &inst.params, h, Coords::All).unwrap()
}
