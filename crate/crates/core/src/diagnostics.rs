//! Clustering diagnostics (INTER / INTRA) and embedding export.
//!
//! Clustering uses dot-product similarity: points go to the centroid with
//! the largest dot product and the objective is `-Σ x·c(x)`. Centroids are
//! kept at unit length (the direction of the cluster mean), which makes the
//! objective non-increasing across Lloyd iterations.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::HeldOutUser;
use crate::error::{Error, Result};
use crate::gradcore::{dot, l2_norm, DenseMatrix};
use crate::model::{user_interests, HyperParams, ModelParams};

/// How initial centroids are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    KMeansPlusPlus,
    /// Seed centroids from these rows (interest vectors). Extra rows are
    /// subsampled with the seed; missing ones are filled by k-means++.
    Rows(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    KMeansPlusPlus,
    UserInterests,
}

impl InitKind {
    pub fn parse(s: &str) -> Result<InitKind> {
        match s {
            "kmeanspp" => Ok(InitKind::KMeansPlusPlus),
            "user_interests" => Ok(InitKind::UserInterests),
            other => Err(Error::Invalid(format!("unknown init mode {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitKind::KMeansPlusPlus => "kmeanspp",
            InitKind::UserInterests => "user_interests",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// `k x d`, unit rows (a zero row only if a cluster never had mass).
    pub centroids: DenseMatrix,
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub iterations: usize,
    /// Empty clusters re-seeded at the farthest point.
    pub reseeds: usize,
    /// Objective after the initial assignment and after every iteration.
    pub objective: Vec<f64>,
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = l2_norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

fn assign(vectors: &DenseMatrix, centroids: &DenseMatrix) -> Vec<usize> {
    vectors
        .iter_rows()
        .map(|x| {
            let mut best = 0;
            let mut best_s = f64::NEG_INFINITY;
            for (c, row) in centroids.iter_rows().enumerate() {
                let s = dot(x, row);
                if s > best_s {
                    best = c;
                    best_s = s;
                }
            }
            best
        })
        .collect()
}

/// `-Σ x·c(x)`.
pub fn objective(vectors: &DenseMatrix, centroids: &DenseMatrix, labels: &[usize]) -> f64 {
    -vectors
        .iter_rows()
        .zip(labels)
        .map(|(x, &l)| dot(x, centroids.row(l)))
        .sum::<f64>()
}

fn cosine_gap(x: &[f64], centroids: &DenseMatrix, chosen: usize) -> f64 {
    let nx = l2_norm(x);
    if nx == 0.0 {
        return 0.0;
    }
    let best = (0..chosen)
        .map(|c| dot(x, centroids.row(c)) / nx)
        .fold(f64::NEG_INFINITY, f64::max);
    (1.0 - best).max(0.0)
}

/// Fills centroid rows `from..k` with k-means++ on cosine distance.
fn plus_plus<R: Rng>(vectors: &DenseMatrix, centroids: &mut DenseMatrix, from: usize, rng: &mut R) {
    let n = vectors.rows();
    for c in from..centroids.rows() {
        let weights: Vec<f64> = if c == 0 {
            vec![1.0; n]
        } else {
            vectors.iter_rows().map(|x| cosine_gap(x, centroids, c).powi(2)).collect()
        };
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let row = unit(vectors.row(pick)).unwrap_or_else(|| vec![0.0; vectors.cols()]);
        centroids.row_mut(c).copy_from_slice(&row);
    }
}

pub fn kmeans(vectors: &DenseMatrix, k: usize, init: &Init, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    let n = vectors.rows();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = DenseMatrix::zeros(k, vectors.cols());
    let seeded = match init {
        Init::KMeansPlusPlus => 0,
        Init::Rows(rows) => {
            if let Some(&r) = rows.iter().find(|&&r| r >= n) {
                return Err(Error::Invalid(format!("seed row {r} out of range for {n} vectors")));
            }
            let chosen: Vec<usize> = if rows.len() > k {
                let mut idx = sample(&mut rng, rows.len(), k).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| rows[i]).collect()
            } else {
                rows.clone()
            };
            for (c, &r) in chosen.iter().enumerate() {
                let row = unit(vectors.row(r)).unwrap_or_else(|| vec![0.0; vectors.cols()]);
                centroids.row_mut(c).copy_from_slice(&row);
            }
            chosen.len()
        }
    };
    plus_plus(vectors, &mut centroids, seeded, &mut rng);

    let mut labels = assign(vectors, &centroids);
    let mut trace = vec![objective(vectors, &centroids, &labels)];
    let mut reseeds = 0;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut sums = DenseMatrix::zeros(k, vectors.cols());
        let mut counts = vec![0usize; k];
        for (x, &l) in vectors.iter_rows().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums.row_mut(l).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Farthest point: smallest similarity to its own centroid.
                let far = (0..n)
                    .min_by(|&a, &b| {
                        let sa = dot(vectors.row(a), centroids.row(labels[a]));
                        let sb = dot(vectors.row(b), centroids.row(labels[b]));
                        sa.partial_cmp(&sb).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("n >= 1");
                if let Some(u) = unit(vectors.row(far)) {
                    centroids.row_mut(c).copy_from_slice(&u);
                }
                reseeds += 1;
            } else if let Some(u) = unit(sums.row(c)) {
                centroids.row_mut(c).copy_from_slice(&u);
            }
        }
        let next = assign(vectors, &centroids);
        trace.push(objective(vectors, &centroids, &next));
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
    }
    Ok(ClusterAssignment {
        centroids,
        labels,
        n_clusters: k,
        iterations,
        reseeds,
        objective: trace,
    })
}

/// A ratio over counted units, with the number of units left out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ratio {
    pub value: f64,
    pub counted: usize,
    pub skipped: usize,
}

/// Fraction of `(interest, positive)` pairs that share a cluster label.
/// `pairs` holds row indices into the clustered vectors; interests without
/// positives are skipped.
pub fn inter_score(labels: &[usize], pairs: &[(usize, Vec<usize>)]) -> Ratio {
    let mut hit = 0usize;
    let mut total = 0usize;
    let mut skipped = 0;
    for (interest, positives) in pairs {
        if positives.is_empty() {
            skipped += 1;
            continue;
        }
        for &p in positives {
            total += 1;
            hit += usize::from(labels[*interest] == labels[p]);
        }
    }
    Ratio {
        value: if total == 0 { 0.0 } else { hit as f64 / total as f64 },
        counted: total,
        skipped,
    }
}

/// Interest labels of one user's own clustering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserClustering {
    pub interest_labels: Vec<usize>,
    pub n_clusters: usize,
}

/// Fraction of users whose interests fall in pairwise distinct clusters.
/// A clustering with fewer clusters than interests counts as not distinct.
pub fn intra_score(users: &[UserClustering]) -> Ratio {
    let distinct = users
        .iter()
        .filter(|u| {
            u.n_clusters >= u.interest_labels.len()
                && u.interest_labels.iter().collect::<HashSet<_>>().len() == u.interest_labels.len()
        })
        .count();
    Ratio {
        value: if users.is_empty() { 0.0 } else { distinct as f64 / users.len() as f64 },
        counted: users.len(),
        skipped: 0,
    }
}

/// Mean pairwise cosine among one user's interests; `None` for one interest.
pub fn intra_user_cosine(interests: &DenseMatrix) -> Option<f64> {
    let n = interests.rows();
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for a in 0..n {
        for b in a + 1..n {
            let na = l2_norm(interests.row(a));
            let nb = l2_norm(interests.row(b));
            let c = if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot(interests.row(a), interests.row(b)) / (na * nb)
            };
            sum += c;
            pairs += 1;
        }
    }
    Some(sum / pairs as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    /// Clusters for the joint clustering; `None` uses `min(n_z * users, max_k)`.
    pub k_global: Option<usize>,
    pub max_k: usize,
    pub global_init: InitKind,
    pub user_init: InitKind,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            k_global: None,
            max_k: 64,
            global_init: InitKind::UserInterests,
            user_init: InitKind::KMeansPlusPlus,
            seed: 0,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsReport {
    pub users: usize,
    pub k_global: usize,
    pub inter: Ratio,
    pub intra: Ratio,
    pub mean_intra_cosine: f64,
    pub global_reseeds: usize,
    pub global_init: InitKind,
    pub user_init: InitKind,
}

impl DiagnosticsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "diag_users: {}", self.users);
        let _ = writeln!(out, "diag_items: profile+holdout of each user");
        let _ = writeln!(out, "diag_k_global: {}", self.k_global);
        let _ = writeln!(out, "diag_global_init: {}", self.global_init.name());
        let _ = writeln!(out, "diag_user_init: {}", self.user_init.name());
        let _ = writeln!(out, "inter: {:.6}", self.inter.value);
        let _ = writeln!(out, "inter_pairs: {}", self.inter.counted);
        let _ = writeln!(out, "inter_skipped_interests: {}", self.inter.skipped);
        let _ = writeln!(out, "intra: {:.6}", self.intra.value);
        let _ = writeln!(out, "mean_intra_user_cosine: {:.6}", self.mean_intra_cosine);
        let _ = writeln!(out, "global_reseeds: {}", self.global_reseeds);
        out
    }

    pub fn record_fields(&self) -> String {
        format!(
            "inter={:.6} intra={:.6} intra_cos={:.6} k_global={}",
            self.inter.value, self.intra.value, self.mean_intra_cosine, self.k_global
        )
    }
}

/// Interests and items of one user as seen by the diagnostics.
#[derive(Clone, Debug)]
pub struct UserEmbedding {
    pub user: usize,
    pub interests: DenseMatrix,
    /// Distinct profile + holdout items in first-seen order.
    pub items: Vec<usize>,
}

fn distinct(items: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|i| seen.insert(*i)).collect()
}

fn best_interest(interests: &DenseMatrix, y: &[f64]) -> usize {
    crate::losses::select_interest(interests, y)
}

/// INTER, INTRA and intra-user cosine over `users`, interests extracted
/// from each profile. Items entering the clustering are each user's
/// profile and holdout items; an item's corresponding interest is the one
/// with the largest dot product.
pub fn diagnose(
    params: &ModelParams,
    hp: &HyperParams,
    users: &[HeldOutUser],
    cfg: &DiagnosticsConfig,
) -> Result<(DiagnosticsReport, Vec<UserEmbedding>)> {
    let embeddings: Vec<UserEmbedding> = users
        .par_iter()
        .filter(|u| !u.profile.is_empty())
        .map(|u| {
            Ok(UserEmbedding {
                user: u.user,
                interests: user_interests(params, hp, &u.profile)?.interests,
                items: distinct(u.profile.iter().chain(&u.holdout).copied()),
            })
        })
        .collect::<Result<_>>()?;
    if embeddings.is_empty() {
        return Err(Error::Invalid("no users with a profile to diagnose".into()));
    }
    let d = params.dim();
    let n_z = hp.n_z;

    // Joint clustering: every interest plus every distinct item.
    let all_items = distinct(embeddings.iter().flat_map(|e| e.items.iter().copied()));
    let item_row: std::collections::HashMap<usize, usize> = all_items
        .iter()
        .enumerate()
        .map(|(r, &i)| (i, embeddings.len() * n_z + r))
        .collect();
    let mut joint = DenseMatrix::zeros(embeddings.len() * n_z + all_items.len(), d);
    for (u, e) in embeddings.iter().enumerate() {
        for k in 0..n_z {
            joint.row_mut(u * n_z + k).copy_from_slice(e.interests.row(k));
        }
    }
    for (r, &i) in all_items.iter().enumerate() {
        joint.row_mut(embeddings.len() * n_z + r).copy_from_slice(params.item_emb.row(i));
    }
    let k_global = cfg
        .k_global
        .unwrap_or_else(|| (n_z * embeddings.len()).min(cfg.max_k))
        .clamp(1, joint.rows());
    let init = match cfg.global_init {
        InitKind::KMeansPlusPlus => Init::KMeansPlusPlus,
        InitKind::UserInterests => Init::Rows((0..embeddings.len() * n_z).collect()),
    };
    let global = kmeans(&joint, k_global, &init, cfg.seed, cfg.max_iter)?;
    let mut pairs: Vec<(usize, Vec<usize>)> = (0..embeddings.len() * n_z).map(|r| (r, Vec::new())).collect();
    for (u, e) in embeddings.iter().enumerate() {
        for &i in &e.items {
            let k = best_interest(&e.interests, params.item_emb.row(i));
            pairs[u * n_z + k].1.push(item_row[&i]);
        }
    }
    let inter = inter_score(&global.labels, &pairs);

    // Per-user clusterings with k = n_z.
    let per_user: Vec<UserClustering> = embeddings
        .par_iter()
        .enumerate()
        .map(|(u, e)| {
            let mut m = DenseMatrix::zeros(n_z + e.items.len(), d);
            for k in 0..n_z {
                m.row_mut(k).copy_from_slice(e.interests.row(k));
            }
            for (r, &i) in e.items.iter().enumerate() {
                m.row_mut(n_z + r).copy_from_slice(params.item_emb.row(i));
            }
            let init = match cfg.user_init {
                InitKind::KMeansPlusPlus => Init::KMeansPlusPlus,
                InitKind::UserInterests => Init::Rows((0..n_z).collect()),
            };
            let a = kmeans(&m, n_z.min(m.rows()), &init, cfg.seed.wrapping_add(u as u64 + 1), cfg.max_iter)?;
            Ok(UserClustering {
                interest_labels: a.labels[..n_z].to_vec(),
                n_clusters: a.n_clusters,
            })
        })
        .collect::<Result<_>>()?;
    let intra = intra_score(&per_user);

    let cosines: Vec<f64> = embeddings.iter().filter_map(|e| intra_user_cosine(&e.interests)).collect();
    let mean_intra_cosine = if cosines.is_empty() {
        0.0
    } else {
        cosines.iter().sum::<f64>() / cosines.len() as f64
    };

    Ok((
        DiagnosticsReport {
            users: embeddings.len(),
            k_global,
            inter,
            intra,
            mean_intra_cosine,
            global_reseeds: global.reseeds,
            global_init: cfg.global_init,
            user_init: cfg.user_init,
        },
        embeddings,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    Interest,
    Item,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub kind: EmbeddingKind,
    /// User token for interests, `catalog` for items.
    pub owner: String,
    /// Interest slot, or item index.
    pub index: usize,
    pub values: Vec<f64>,
}

fn push_row(out: &mut String, kind: &str, owner: &str, index: usize, values: &[f64]) {
    let _ = write!(out, "{kind}\t{owner}\t{index}");
    for v in values {
        let _ = write!(out, "\t{v}");
    }
    out.push('\n');
}

/// Writes interest rows for every user followed by one row per distinct
/// item. Returns the number of rows.
pub fn export_embeddings(
    path: &Path,
    params: &ModelParams,
    users: &[UserEmbedding],
    user_names: &[String],
) -> Result<usize> {
    let mut out = String::new();
    let mut rows = 0;
    for e in users {
        let owner = user_names.get(e.user).cloned().unwrap_or_else(|| e.user.to_string());
        for (k, z) in e.interests.iter_rows().enumerate() {
            push_row(&mut out, "interest", &owner, k, z);
            rows += 1;
        }
    }
    for i in distinct(users.iter().flat_map(|e| e.items.iter().copied())) {
        push_row(&mut out, "item", "catalog", i, params.item_emb.row(i));
        rows += 1;
    }
    fs::write(path, out).map_err(Error::io(path))?;
    Ok(rows)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .enumerate()
        .map(|(n, line)| {
            let err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: msg.into(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                return Err(err("expected kind, owner, index and values"));
            }
            let kind = match cols[0] {
                "interest" => EmbeddingKind::Interest,
                "item" => EmbeddingKind::Item,
                _ => return Err(err("unknown row kind")),
            };
            Ok(EmbeddingRow {
                kind,
                owner: cols[1].to_string(),
                index: cols[2].parse().map_err(|_| err("bad index"))?,
                values: cols[3..]
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|_| err("bad value")))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}
