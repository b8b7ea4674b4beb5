//! Max-over-interests retrieval and Recall / NDCG / HitRate.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::HeldOutUser;
use crate::error::{Error, Result};
use crate::gradcore::{dot, DenseMatrix};
use crate::model::{user_interests, HyperParams, ModelParams};

pub const DEFAULT_CUTOFFS: [usize; 2] = [20, 50];

/// Top items for one user, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fewer than `N` candidates were available.
    pub truncated: bool,
}

/// Higher score first, then lower item index.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

fn top_k(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    if cands.len() > k {
        cands.select_nth_unstable_by(k, rank_order);
        cands.truncate(k);
    }
    cands.sort_unstable_by(rank_order);
    cands
}

fn check_inputs(interests: &DenseMatrix, item_emb: &DenseMatrix, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Invalid("retrieval cutoff must be at least 1".into()));
    }
    if interests.cols() != item_emb.cols() {
        return Err(Error::shape("retrieve_topn", interests.shape_str(), item_emb.shape_str()));
    }
    Ok(())
}

fn merge(
    interests: &DenseMatrix,
    item_emb: &DenseMatrix,
    pools: Vec<Vec<(f64, usize)>>,
    n: usize,
    available: usize,
) -> Ranking {
    let mut seen = HashSet::new();
    let union: Vec<(f64, usize)> = pools
        .into_iter()
        .flatten()
        .filter(|&(_, i)| seen.insert(i))
        .map(|(_, i)| {
            let y = item_emb.row(i);
            let best = interests.iter_rows().map(|z| dot(z, y)).fold(f64::NEG_INFINITY, f64::max);
            (best, i)
        })
        .collect();
    let top = top_k(union, n);
    Ranking {
        items: top.iter().map(|&(_, i)| i).collect(),
        scores: top.iter().map(|&(s, _)| s).collect(),
        truncated: available < n,
    }
}

/// Per interest, the `pool` best items by dot product; the union is ranked
/// by `max_k z_k·y`. With `pool >= n` the result equals exhaustive
/// max-score ranking.
pub fn retrieve_topn_pooled(
    interests: &DenseMatrix,
    item_emb: &DenseMatrix,
    n: usize,
    pool: usize,
    exclude: &[usize],
) -> Result<Ranking> {
    check_inputs(interests, item_emb, n)?;
    let excluded: HashSet<usize> = exclude.iter().copied().filter(|&i| i < item_emb.rows()).collect();
    let available = item_emb.rows() - excluded.len();
    let pools = interests
        .iter_rows()
        .map(|z| {
            let cands = (0..item_emb.rows())
                .filter(|i| !excluded.contains(i))
                .map(|i| (dot(z, item_emb.row(i)), i))
                .collect();
            top_k(cands, pool.max(1))
        })
        .collect();
    Ok(merge(interests, item_emb, pools, n, available))
}

pub fn retrieve_topn(interests: &DenseMatrix, item_emb: &DenseMatrix, n: usize, exclude: &[usize]) -> Result<Ranking> {
    retrieve_topn_pooled(interests, item_emb, n, n, exclude)
}

/// Same result as [`retrieve_topn`], scanning the catalog in blocks of
/// `block` rows and keeping a bounded candidate list per interest.
pub fn retrieve_topn_blocked(
    interests: &DenseMatrix,
    item_emb: &DenseMatrix,
    n: usize,
    exclude: &[usize],
    block: usize,
) -> Result<Ranking> {
    check_inputs(interests, item_emb, n)?;
    let block = block.max(1);
    let mut excluded = vec![false; item_emb.rows()];
    for &i in exclude.iter().filter(|&&i| i < item_emb.rows()) {
        excluded[i] = true;
    }
    let available = excluded.iter().filter(|&&e| !e).count();
    let mut pools: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(n + block); interests.rows()];
    let mut start = 0;
    while start < item_emb.rows() {
        let end = (start + block).min(item_emb.rows());
        for (z, pool) in interests.iter_rows().zip(pools.iter_mut()) {
            pool.extend((start..end).filter(|&i| !excluded[i]).map(|i| (dot(z, item_emb.row(i)), i)));
            if pool.len() > n {
                *pool = top_k(std::mem::take(pool), n);
            }
        }
        start = end;
    }
    let pools = pools.into_iter().map(|p| top_k(p, n)).collect();
    Ok(merge(interests, item_emb, pools, n, available))
}

fn hits(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> Vec<usize> {
    ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(r, _)| r + 1)
        .collect()
}

/// `|top-n ∩ relevant| / |relevant|` for one user.
pub fn recall_at(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    hits(ranked, relevant, n).len() as f64 / relevant.len() as f64
}

/// NDCG normalized by the ideal ordering of the recalled positives only.
pub fn ndcg_at(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> f64 {
    let h = hits(ranked, relevant, n);
    if h.is_empty() {
        return 0.0;
    }
    let dcg: f64 = h.iter().map(|&r| 1.0 / ((r + 1) as f64).log2()).sum();
    let idcg: f64 = (1..=h.len()).map(|i| 1.0 / ((i + 1) as f64).log2()).sum();
    dcg / idcg
}

pub fn hit_at(ranked: &[usize], relevant: &HashSet<usize>, n: usize) -> f64 {
    if ranked.iter().take(n).any(|i| relevant.contains(i)) {
        1.0
    } else {
        0.0
    }
}

/// A user-averaged metric and how many users had nothing to find.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub value: f64,
    pub users: usize,
    pub skipped: usize,
}

fn average(
    rankings: &[Vec<usize>],
    relevant: &[Vec<usize>],
    n: usize,
    per_user: fn(&[usize], &HashSet<usize>, usize) -> f64,
) -> Result<MetricSummary> {
    if rankings.len() != relevant.len() {
        return Err(Error::shape("metric", rankings.len(), relevant.len()));
    }
    let mut sum = 0.0;
    let mut users = 0;
    let mut skipped = 0;
    for (ranked, rel) in rankings.iter().zip(relevant) {
        if rel.is_empty() {
            skipped += 1;
            continue;
        }
        let rel: HashSet<usize> = rel.iter().copied().collect();
        sum += per_user(ranked, &rel, n);
        users += 1;
    }
    Ok(MetricSummary {
        value: if users == 0 { 0.0 } else { sum / users as f64 },
        users,
        skipped,
    })
}

pub fn metric_recall(rankings: &[Vec<usize>], relevant: &[Vec<usize>], n: usize) -> Result<MetricSummary> {
    average(rankings, relevant, n, recall_at)
}

pub fn metric_ndcg(rankings: &[Vec<usize>], relevant: &[Vec<usize>], n: usize) -> Result<MetricSummary> {
    average(rankings, relevant, n, ndcg_at)
}

pub fn metric_hitrate(rankings: &[Vec<usize>], relevant: &[Vec<usize>], n: usize) -> Result<MetricSummary> {
    average(rankings, relevant, n, hit_at)
}

/// Metrics at one cutoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffMetrics {
    pub cutoff: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hitrate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserDetail {
    pub user: usize,
    pub ranking: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub hit: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<CutoffMetrics>,
    /// Users that contributed to the averages.
    pub users: usize,
    /// Users with an empty holdout.
    pub skipped: usize,
    pub details: Vec<UserDetail>,
}

impl EvalReport {
    pub fn at(&self, cutoff: usize) -> Option<&CutoffMetrics> {
        self.metrics.iter().find(|m| m.cutoff == cutoff)
    }

    pub fn recall(&self, cutoff: usize) -> f64 {
        self.at(cutoff).map_or(f64::NAN, |m| m.recall)
    }

    pub fn ndcg(&self, cutoff: usize) -> f64 {
        self.at(cutoff).map_or(f64::NAN, |m| m.ndcg)
    }

    pub fn hitrate(&self, cutoff: usize) -> f64 {
        self.at(cutoff).map_or(f64::NAN, |m| m.hitrate)
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("averaging: users\n");
        let _ = writeln!(out, "users: {}", self.users);
        let _ = writeln!(out, "skipped_users: {}", self.skipped);
        for m in &self.metrics {
            let _ = writeln!(out, "recall@{}: {:.6}", m.cutoff, m.recall);
            let _ = writeln!(out, "ndcg@{}: {:.6}", m.cutoff, m.ndcg);
            let _ = writeln!(out, "hitrate@{}: {:.6}", m.cutoff, m.hitrate);
        }
        out
    }

    /// One whitespace-free record per run.
    pub fn record_line(&self, dataset: &str, n_z: usize, seed: u64, config_hash: &str) -> String {
        let cutoffs: Vec<String> = self.metrics.iter().map(|m| m.cutoff.to_string()).collect();
        let mut out = format!(
            "dataset={dataset} n_z={n_z} cutoffs={} seed={seed} config={config_hash} users={}",
            cutoffs.join(","),
            self.users
        );
        for m in &self.metrics {
            let _ = write!(
                out,
                " recall@{c}={:.6} ndcg@{c}={:.6} hitrate@{c}={:.6}",
                m.recall,
                m.ndcg,
                m.hitrate,
                c = m.cutoff
            );
        }
        out
    }
}

pub fn validate_cutoffs(cutoffs: &[usize]) -> Result<()> {
    if cutoffs.is_empty() {
        return Err(Error::Invalid("at least one cutoff is required".into()));
    }
    if let Some(c) = cutoffs.iter().find(|&&c| c == 0) {
        return Err(Error::Invalid(format!("cutoff {c} is not allowed; cutoffs start at 1")));
    }
    Ok(())
}

/// Retrieves for every held-out user from its profile and scores the
/// holdout. Profile items are excluded from candidates.
pub fn evaluate(
    params: &ModelParams,
    hp: &HyperParams,
    users: &[HeldOutUser],
    cutoffs: &[usize],
    keep_details: bool,
) -> Result<EvalReport> {
    validate_cutoffs(cutoffs)?;
    let n_max = *cutoffs.iter().max().expect("validated");
    let per_user: Vec<Option<UserDetail>> = users
        .par_iter()
        .map(|u| {
            if u.holdout.is_empty() || u.profile.is_empty() {
                return Ok(None);
            }
            let set = user_interests(params, hp, &u.profile)?;
            let ranking = retrieve_topn(&set.interests, &params.item_emb, n_max, &u.profile)?.items;
            let rel: HashSet<usize> = u.holdout.iter().copied().collect();
            Ok(Some(UserDetail {
                user: u.user,
                recall: cutoffs.iter().map(|&n| recall_at(&ranking, &rel, n)).collect(),
                ndcg: cutoffs.iter().map(|&n| ndcg_at(&ranking, &rel, n)).collect(),
                hit: cutoffs.iter().map(|&n| hit_at(&ranking, &rel, n)).collect(),
                ranking,
            }))
        })
        .collect::<Result<_>>()?;

    let skipped = per_user.iter().filter(|d| d.is_none()).count();
    let details: Vec<UserDetail> = per_user.into_iter().flatten().collect();
    let count = details.len().max(1) as f64;
    let metrics = cutoffs
        .iter()
        .enumerate()
        .map(|(c, &cutoff)| CutoffMetrics {
            cutoff,
            recall: details.iter().map(|d| d.recall[c]).sum::<f64>() / count,
            ndcg: details.iter().map(|d| d.ndcg[c]).sum::<f64>() / count,
            hitrate: details.iter().map(|d| d.hit[c]).sum::<f64>() / count,
        })
        .collect();
    Ok(EvalReport {
        metrics,
        users: details.len(),
        skipped,
        details: if keep_details { details } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> HashSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at(&[0, 2], &set(&[0, 1]), 2), 0.5);
        assert_eq!(recall_at(&[1, 0, 5], &set(&[0, 1]), 3), 1.0);
    }

    #[test]
    fn ndcg_hits_at_one_and_three() {
        let ranked = [10, 20, 11, 21, 22];
        let rel = set(&[10, 11, 12, 13, 14]);
        let v = ndcg_at(&ranked, &rel, 5);
        let dcg = 1.0 + 0.5;
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((v - dcg / idcg).abs() < 1e-15);
        assert!((v - 0.9197).abs() < 1e-4);
    }

    #[test]
    fn ndcg_edge_cases() {
        assert_eq!(ndcg_at(&[1, 2, 3], &set(&[1, 2, 3, 9]), 3), 1.0);
        assert_eq!(ndcg_at(&[1, 2, 3], &set(&[7]), 3), 0.0);
    }

    #[test]
    fn hitrate_extremes() {
        let r = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(metric_hitrate(&r, &[vec![1], vec![4]], 2).unwrap().value, 1.0);
        assert_eq!(metric_hitrate(&r, &[vec![9], vec![9]], 2).unwrap().value, 0.0);
    }

    #[test]
    fn empty_relevant_is_skipped() {
        let s = metric_recall(&[vec![1], vec![2]], &[vec![1], vec![]], 1).unwrap();
        assert_eq!((s.value, s.users, s.skipped), (1.0, 1, 1));
    }

    #[test]
    fn single_interest_is_plain_topn() {
        let z = DenseMatrix::from_rows(&[&[1.0, 0.5]]);
        let items = DenseMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0], &[2.0, 0.0], &[1.0, 1.0], &[-1.0, 0.0]]);
        let r = retrieve_topn(&z, &items, 3, &[]).unwrap();
        assert_eq!(r.items, vec![2, 3, 1]);
        assert_eq!(r.scores, vec![2.0, 1.5, 1.0]);
        assert!(!r.truncated);
    }

    #[test]
    fn orthogonal_interests_cover_both_clusters() {
        let z = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let items = DenseMatrix::from_rows(&[&[1.0, 0.1], &[0.9, 0.0], &[0.0, 1.0], &[0.1, 0.8], &[0.2, 0.2]]);
        let r = retrieve_topn(&z, &items, 4, &[]).unwrap();
        let got = set(&r.items);
        assert_eq!(got, set(&[0, 1, 2, 3]));
    }

    #[test]
    fn ties_go_to_lower_index_and_exclusions_apply() {
        let z = DenseMatrix::from_rows(&[&[1.0]]);
        let items = DenseMatrix::from_rows(&[&[1.0], &[1.0], &[1.0], &[0.5]]);
        assert_eq!(retrieve_topn(&z, &items, 2, &[]).unwrap().items, vec![0, 1]);
        assert_eq!(retrieve_topn(&z, &items, 2, &[0]).unwrap().items, vec![1, 2]);
        let r = retrieve_topn(&z, &items, 5, &[1]).unwrap();
        assert_eq!(r.items, vec![0, 2, 3]);
        assert!(r.truncated);
    }

    #[test]
    fn zero_cutoff_rejected() {
        let z = DenseMatrix::from_rows(&[&[1.0]]);
        assert!(retrieve_topn(&z, &z, 0, &[]).is_err());
        assert!(validate_cutoffs(&[20, 0]).is_err());
    }

    #[test]
    fn blocked_matches_reference() {
        let z = DenseMatrix::from_rows(&[&[1.0, -0.5], &[0.2, 0.7]]);
        let rows: Vec<Vec<f64>> = (0..23).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let items = DenseMatrix::from_rows(&refs);
        for block in [1, 4, 7, 100] {
            assert_eq!(
                retrieve_topn_blocked(&z, &items, 6, &[3, 5], block).unwrap(),
                retrieve_topn(&z, &items, 6, &[3, 5]).unwrap()
            );
        }
    }

    #[test]
    fn record_line_has_no_spaces_inside_fields() {
        let r = EvalReport {
            metrics: vec![CutoffMetrics {
                cutoff: 20,
                recall: 0.5,
                ndcg: 0.25,
                hitrate: 1.0,
            }],
            users: 3,
            skipped: 0,
            details: Vec::new(),
        };
        let line = r.record_line("synth", 2, 7, "abc");
        assert!(line.contains("recall@20=0.500000"));
        assert!(r.to_text().contains("hitrate@20: 1.000000"));
    }
}
