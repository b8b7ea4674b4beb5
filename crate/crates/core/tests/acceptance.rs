//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 5 needs MovieLens-1M: point MIREC_ML1M at its ratings.dat.

mod common;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use common::{fd_error, instance, tiny_hp, Term};
use multi_interest::cli::{cmd_train, CHECKPOINT_FILE, RECORD_FILE, REPORT_FILE, TRAIN_LOG_FILE};
use multi_interest::config::RunConfig;
use multi_interest::data::{generate_synthetic, Format, SyntheticSpec};
use multi_interest::eval::{metric_hitrate, metric_ndcg, metric_recall, retrieve_topn};
use multi_interest::gradcore::DenseMatrix;
use multi_interest::losses::{loss_reconstruct, loss_recontrast, ContrastSets};
use multi_interest::model::{HyperParams, ModelParams};
use multi_interest::planted::{median, planted_hyper_params, planted_train_config, run_planted, without_backward_flows};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static FAILED: AtomicBool = AtomicBool::new(false);

fn report(id: &str, name: &str, pass: bool, detail: String) {
    if !pass {
        FAILED.store(true, Ordering::SeqCst);
    }
    println!("criterion {id} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn gradient_suite() {
    const H: f64 = 1e-4;
    const TOL: f64 = 1e-4;
    let hp = tiny_hp();
    let t = Instant::now();
    let mut worst = vec![0.0f64; Term::ALL.len()];
    for seed in 0..20 {
        let inst = instance(seed, &hp);
        for (w, term) in worst.iter_mut().zip(Term::ALL) {
            *w = w.max(fd_error(&inst, &hp, term, H));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let per: Vec<String> = Term::ALL.iter().zip(&worst).map(|(t, w)| format!("{} {w:.1e}", t.name())).collect();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    report(
        "1",
        "finite-difference gradients",
        max <= TOL && secs < 60.0,
        format!("20 instances, h={H:e}, tau={}, max rel err {} <= {TOL:e}, {secs:.1}s < 60s", hp.tau, per.join(", ")),
    );
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

fn brute_topn(z: &DenseMatrix, emb: &DenseMatrix, n: usize, exclude: &[usize]) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..emb.rows())
        .filter(|i| !exclude.contains(i))
        .map(|i| {
            let best = (0..z.rows())
                .map(|k| z.row(k).iter().zip(emb.row(i)).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            (best, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(n).map(|(_, i)| i).collect()
}

fn naive_user_metrics(ranked: &[usize], relevant: &[usize], n: usize) -> (f64, f64, f64) {
    let rel: HashSet<usize> = relevant.iter().copied().collect();
    let mut found = 0.0;
    let mut dcg = 0.0;
    for (r, i) in ranked.iter().take(n).enumerate() {
        if rel.contains(i) {
            found += 1.0;
            dcg += 1.0 / ((r + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for r in 0..found as usize {
        idcg += 1.0 / ((r + 2) as f64).log2();
    }
    let ndcg = if found > 0.0 { dcg / idcg } else { 0.0 };
    (found / rel.len() as f64, ndcg, if found > 0.0 { 1.0 } else { 0.0 })
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    unit(a).iter().zip(unit(b)).map(|(x, y)| x * y).sum()
}

fn naive_infonce(z: &DenseMatrix, x: &DenseMatrix, sets: &ContrastSets, sampled: &[DenseMatrix], tau: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..z.rows() {
        for &i in &sets.positives[k] {
            let pos = (cos(z.row(k), x.row(i)) / tau).exp();
            let mut neg = 0.0;
            for &j in &sets.in_seq_negatives[k] {
                neg += (cos(z.row(k), x.row(j)) / tau).exp();
            }
            for o in (0..z.rows()).filter(|&o| o != k) {
                neg += (cos(z.row(k), z.row(o)) / tau).exp();
            }
            for r in 0..sampled[k].rows() {
                neg += (cos(z.row(k), sampled[k].row(r)) / tau).exp();
            }
            total += -(pos / (pos + neg)).ln();
        }
    }
    total
}

fn naive_reconstruct(z: &DenseMatrix, x: &DenseMatrix, sets: &ContrastSets, p: &ModelParams, hp: &HyperParams) -> f64 {
    let (n_x, d_b, d) = (hp.n_x, hp.d_b, hp.d);
    let mut total = 0.0;
    for k in 0..z.rows() {
        // c[i][m] = Σ_t W4[i*d_b + m][t] z[t]
        let mut c = vec![vec![0.0; d_b]; n_x];
        for i in 0..n_x {
            for m in 0..d_b {
                for t in 0..d {
                    c[i][m] += p.recon_w4[(i * d_b + m, t)] * z[(k, t)];
                }
            }
        }
        for &j in &sets.positives[k] {
            let mut e = vec![0.0; n_x];
            for i in 0..n_x {
                for m in 0..d_b {
                    let mut g = 0.0;
                    for t in 0..d_b {
                        g += p.recon_w3[(m, t)] * c[i][t];
                    }
                    e[i] += p.position_query[(j, m)] * g.tanh();
                }
            }
            let denom: f64 = e.iter().map(|v| v.exp()).sum();
            for r in 0..d {
                let mut xhat = 0.0;
                for i in 0..n_x {
                    let mut out = 0.0;
                    for t in 0..d_b {
                        out += p.recon_w5[(r, t)] * c[i][t];
                    }
                    xhat += e[i].exp() / denom * out;
                }
                total += (xhat - x[(j, r)]).powi(2);
            }
        }
    }
    total
}

fn random_sets(rng: &mut ChaCha8Rng, n_z: usize, n_x: usize) -> ContrastSets {
    let mut sets = ContrastSets::empty(n_z);
    for k in 0..n_z {
        for j in 0..n_x {
            match rng.random_range(0..3) {
                0 => sets.positives[k].push(j),
                1 => sets.in_seq_negatives[k].push(j),
                _ => {}
            }
        }
    }
    sets
}

fn oracles() {
    const TOL: f64 = 1e-10;
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut topn_ok = 0;
    let mut metric_err = 0.0f64;
    let mut nce_err = 0.0f64;
    let mut ct_err = 0.0f64;
    for _ in 0..50 {
        // retrieval, with ties from duplicated rows
        let v = rng.random_range(5..60);
        let n_z = rng.random_range(1..5);
        let z = random_matrix(&mut rng, n_z, 6, 1.0);
        let mut emb = random_matrix(&mut rng, v, 6, 1.0);
        for _ in 0..3 {
            let (a, b) = (rng.random_range(0..v), rng.random_range(0..v));
            let row = emb.row(a).to_vec();
            emb.row_mut(b).copy_from_slice(&row);
        }
        let n = rng.random_range(1..v + 5);
        let n_ex = rng.random_range(0..v.min(5));
        let exclude = sample(&mut rng, v, n_ex).into_vec();
        let got = retrieve_topn(&z, &emb, n, &exclude).unwrap().items;
        if got == brute_topn(&z, &emb, n, &exclude) {
            topn_ok += 1;
        }

        // metrics over a batch of users
        let users = rng.random_range(1..8);
        let mut rankings = Vec::new();
        let mut relevant = Vec::new();
        for _ in 0..users {
            rankings.push(sample(&mut rng, 100, 40).into_vec());
            let h = rng.random_range(0..6);
            relevant.push(sample(&mut rng, 100, h).into_vec());
        }
        let cutoff = rng.random_range(1..45);
        let mut sums = (0.0, 0.0, 0.0);
        let mut counted = 0.0;
        for (r, rel) in rankings.iter().zip(&relevant) {
            if rel.is_empty() {
                continue;
            }
            let (a, b, c) = naive_user_metrics(r, rel, cutoff);
            sums = (sums.0 + a, sums.1 + b, sums.2 + c);
            counted += 1.0;
        }
        let mean = |s: f64| if counted > 0.0 { s / counted } else { 0.0 };
        metric_err = metric_err
            .max((metric_recall(&rankings, &relevant, cutoff).unwrap().value - mean(sums.0)).abs())
            .max((metric_ndcg(&rankings, &relevant, cutoff).unwrap().value - mean(sums.1)).abs())
            .max((metric_hitrate(&rankings, &relevant, cutoff).unwrap().value - mean(sums.2)).abs());

        // InfoNCE
        let (n_z, n_x, d) = (rng.random_range(1..4), rng.random_range(2..6), rng.random_range(2..6));
        let z = random_matrix(&mut rng, n_z, d, 1.0);
        let x = random_matrix(&mut rng, n_x, d, 1.0);
        let mut sets = random_sets(&mut rng, n_z, n_x);
        let sampled: Vec<DenseMatrix> = (0..n_z)
            .map(|_| {
                let rows = rng.random_range(0..4);
                random_matrix(&mut rng, rows, d, 1.0)
            })
            .collect();
        sets.out_of_seq = sampled.iter().map(|s| (0..s.rows()).collect()).collect();
        let tau = rng.random_range(0.1..1.0);
        let got = loss_recontrast(&z, &x, &sets, &sampled, tau).unwrap();
        let want = naive_infonce(&z, &x, &sets, &sampled, tau);
        nce_err = nce_err.max((got - want).abs() / want.abs().max(1.0));

        // Re-construct
        let hp = HyperParams {
            d,
            d_h: 3,
            d_b: rng.random_range(1..4),
            n_z,
            n_x,
            ..HyperParams::default()
        };
        let params = ModelParams::init(7, &hp, &mut rng).unwrap();
        let got = loss_reconstruct(&z, &x, &sets, &params, &hp).unwrap();
        let want = naive_reconstruct(&z, &x, &sets, &params, &hp);
        ct_err = ct_err.max((got - want).abs() / want.abs().max(1.0));
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = topn_ok == 50 && metric_err <= TOL && nce_err <= TOL && ct_err <= TOL && secs < 60.0;
    report(
        "2",
        "brute-force oracles",
        pass,
        format!(
            "50 instances each; top-N exact {topn_ok}/50; metrics {metric_err:.1e}, InfoNCE {nce_err:.1e}, \
             Re-construct {ct_err:.1e} <= {TOL:e}; {secs:.1}s < 60s"
        ),
    );
}

struct PlantedRow {
    recall: f64,
    ndcg: f64,
    cosine: f64,
    intra: f64,
}

fn planted_runs(hp: &HyperParams) -> Vec<PlantedRow> {
    (0..5u64)
        .map(|seed| {
            let spec = SyntheticSpec {
                seed: 100 + seed,
                ..SyntheticSpec::default()
            };
            let out = run_planted(&spec, hp, &planted_train_config(seed)).unwrap();
            PlantedRow {
                recall: out.test.recall(20),
                ndcg: out.test.ndcg(20),
                cosine: out.diagnostics.mean_intra_cosine,
                intra: out.diagnostics.intra.value,
            }
        })
        .collect()
}

fn planted() {
    let t = Instant::now();
    let full = planted_hyper_params();
    let re4 = planted_runs(&full);
    let base = planted_runs(&without_backward_flows(&full));
    let secs = t.elapsed().as_secs_f64();
    let med = |rows: &[PlantedRow], f: fn(&PlantedRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    let (r_re4, r_base) = (med(&re4, |r| r.recall), med(&base, |r| r.recall));
    let (n_re4, n_base) = (med(&re4, |r| r.ndcg), med(&base, |r| r.ndcg));
    let (c_re4, c_base) = (med(&re4, |r| r.cosine), med(&base, |r| r.cosine));
    let (i_re4, i_base) = (med(&re4, |r| r.intra), med(&base, |r| r.intra));
    for (name, rows) in [("re4", &re4), ("base", &base)] {
        for (seed, r) in rows.iter().enumerate() {
            println!(
                "  planted seed {seed} {name}: recall@20 {:.4} ndcg@20 {:.4} cosine {:.4} intra {:.4}",
                r.recall, r.ndcg, r.cosine, r.intra
            );
        }
    }
    report(
        "3a",
        "planted recall",
        r_re4 >= 0.55,
        format!("median Recall@20 {r_re4:.4} >= 0.55; 5 seeds x 2 models in {secs:.0}s"),
    );
    report(
        "3b",
        "planted interest cosine",
        c_re4 <= c_base - 0.1,
        format!("median intra-user cosine Re4 {c_re4:.4} <= base {c_base:.4} - 0.1"),
    );
    report("3c", "planted INTRA", i_re4 >= i_base, format!("median INTRA Re4 {i_re4:.4} >= base {i_base:.4}"));
    report(
        "4",
        "ablation direction",
        r_re4 >= r_base - 0.02 && n_re4 >= n_base,
        format!("median Recall@20 Re4 {r_re4:.4} >= base {r_base:.4} - 0.02; median NDCG@20 Re4 {n_re4:.4} >= base {n_base:.4}"),
    );
}

fn movielens() {
    let Some(path) = std::env::var_os("MIREC_ML1M").map(PathBuf::from) else {
        println!("criterion 5 MovieLens-1M HR@20: SKIPPED (set MIREC_ML1M to ratings.dat to run; takes hours)");
        return;
    };
    let out = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        dataset: Some(path),
        format: Some(Format::Dat),
        output_dir: out.path().join("ml1m"),
        ..RunConfig::default()
    };
    cfg.hp.s_neg = 1280;
    let t = Instant::now();
    let res = cmd_train(&cfg).unwrap();
    let hr = res.report.hitrate(20);
    report(
        "5",
        "MovieLens-1M HR@20",
        hr >= 0.70,
        format!("HR@20 {hr:.4} >= 0.70; {:.0}s", t.elapsed().as_secs_f64()),
    );
}

fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticSpec {
        users: 120,
        items_per_cluster: 20,
        focus_width: 10,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let log_path = dir.path().join("interactions.tsv");
    data.log.write(&log_path, Format::Tsv).unwrap();
    let mut cfg = RunConfig {
        dataset: Some(log_path),
        output_dir: dir.path().join("run"),
        ..RunConfig::default()
    };
    cfg.apply_overrides(&["d=16", "d_h=32", "d_b=8", "n_z=2", "epochs=3", "batch_size=32", "s_neg=32"])
        .unwrap();
    let files = [CHECKPOINT_FILE, REPORT_FILE, RECORD_FILE, TRAIN_LOG_FILE];
    let run = || {
        let out = cmd_train(&cfg).unwrap();
        files.map(|f| {
            let bytes = std::fs::read(out.dir.join(f)).unwrap();
            if f != TRAIN_LOG_FILE {
                return bytes;
            }
            // last column is wall-clock seconds; the loss trajectory must match
            let text = String::from_utf8(bytes).unwrap();
            let losses: Vec<&str> = text.lines().map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head)).collect();
            losses.join("\n").into_bytes()
        })
    };
    let first = run();
    let second = run();
    let same: Vec<bool> = first.iter().zip(&second).map(|(a, b)| a == b).collect();
    let detail: Vec<String> = files
        .iter()
        .zip(&same)
        .map(|(f, s)| {
            let f = if *f == TRAIN_LOG_FILE { "train.log losses" } else { f };
            format!("{f} {}", if *s { "identical" } else { "differs" })
        })
        .collect();
    report("6", "determinism", same.iter().all(|&s| s), format!("two train runs: {}", detail.join(", ")));
}

fn main() {
    gradient_suite();
    oracles();
    planted();
    movielens();
    determinism();
    if FAILED.load(Ordering::SeqCst) {
        println!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
    println!("acceptance: all run criteria passed");
}
