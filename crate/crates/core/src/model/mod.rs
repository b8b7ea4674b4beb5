//! Item embeddings and the attention-based multi-interest extractor.
//!
//! For a sequence with item embeddings `x_i` the extractor computes, per
//! interest `k`,
//!
//! ```text
//! a[k,i] = softmax_i( w_k · tanh(W1 x_i) )      (valid positions only)
//! z_k    = Σ_i a[k,i] · W2 x_i
//! ```
//!
//! Interests are stored row-wise: `InterestSet::interests` is `N_z x d`.

pub mod checkpoint;

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{dot, DenseMatrix, DenseVector, Parameters};

/// Positive-selection threshold for the contrastive and reconstruction flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaC {
    /// `1 / L` where `L` is the number of valid positions.
    Adaptive,
    Fixed(f64),
}

impl GammaC {
    pub fn resolve(self, valid_len: usize) -> f64 {
        match self {
            GammaC::Adaptive => 1.0 / valid_len.max(1) as f64,
            GammaC::Fixed(g) => g,
        }
    }
}

impl fmt::Display for GammaC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaC::Adaptive => f.write_str("adaptive"),
            GammaC::Fixed(g) => write!(f, "{g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Embedding dimension.
    pub d: usize,
    /// Hidden size of the forward attention.
    pub d_h: usize,
    /// Hidden size of the reconstruction decoder.
    pub d_b: usize,
    /// Interests per user.
    pub n_z: usize,
    /// Maximum sequence length.
    pub n_x: usize,
    /// InfoNCE temperature.
    pub tau: f64,
    pub gamma_c: GammaC,
    pub lambda_cl: f64,
    pub lambda_att: f64,
    pub lambda_ct: f64,
    /// Sampled-softmax negatives per training example.
    pub s_neg: usize,
    /// Out-of-sequence negatives per interest; `None` uses the sequence length.
    pub s_seq_neg: Option<usize>,
    /// Shift sampled logits by `ln(V / s_neg)` so the sampled denominator
    /// estimates the full-catalog sum.
    pub logq_correction: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            d: 64,
            d_h: 256,
            d_b: 32,
            n_z: 8,
            n_x: 20,
            tau: 0.02,
            gamma_c: GammaC::Adaptive,
            lambda_cl: 0.1,
            lambda_att: 0.01,
            lambda_ct: 0.1,
            s_neg: 128,
            s_seq_neg: None,
            logq_correction: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.d),
            ("d_h", self.d_h),
            ("d_b", self.d_b),
            ("n_z", self.n_z),
            ("n_x", self.n_x),
            ("s_neg", self.s_neg),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if let GammaC::Fixed(g) = self.gamma_c {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::Invalid(format!("gamma_c must lie in (0, 1), got {g}")));
            }
        }
        for (name, v) in [
            ("lambda_cl", self.lambda_cl),
            ("lambda_att", self.lambda_att),
            ("lambda_ct", self.lambda_ct),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Identity of each trainable tensor, in checkpoint order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKey {
    ItemEmb,
    W1,
    InterestQuery,
    W2,
    W3,
    W4,
    W5,
    PositionQuery,
}

impl ParamKey {
    pub const ALL: [ParamKey; 8] = [
        ParamKey::ItemEmb,
        ParamKey::W1,
        ParamKey::InterestQuery,
        ParamKey::W2,
        ParamKey::W3,
        ParamKey::W4,
        ParamKey::W5,
        ParamKey::PositionQuery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKey::ItemEmb => "item_emb",
            ParamKey::W1 => "w1",
            ParamKey::InterestQuery => "interest_query",
            ParamKey::W2 => "w2",
            ParamKey::W3 => "recon_w3",
            ParamKey::W4 => "recon_w4",
            ParamKey::W5 => "recon_w5",
            ParamKey::PositionQuery => "position_query",
        }
    }
}

/// Every trainable tensor. The same struct doubles as a gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `V x d`
    pub item_emb: DenseMatrix,
    /// `d_h x d`, shared by all interests.
    pub w1: DenseMatrix,
    /// `N_z x d_h`; row `k` is the query vector of interest `k`.
    pub interest_query: DenseMatrix,
    /// `d x d`
    pub w2: DenseMatrix,
    /// `d_b x d_b`
    pub recon_w3: DenseMatrix,
    /// `(N_x * d_b) x d`, the upsampling projection.
    pub recon_w4: DenseMatrix,
    /// `d x d_b`
    pub recon_w5: DenseMatrix,
    /// `N_x x d_b`; row `j` scores units for reconstructing position `j`.
    pub position_query: DenseMatrix,
}

impl ModelParams {
    pub fn zeros(vocab: usize, hp: &HyperParams) -> Self {
        Self {
            item_emb: DenseMatrix::zeros(vocab, hp.d),
            w1: DenseMatrix::zeros(hp.d_h, hp.d),
            interest_query: DenseMatrix::zeros(hp.n_z, hp.d_h),
            w2: DenseMatrix::zeros(hp.d, hp.d),
            recon_w3: DenseMatrix::zeros(hp.d_b, hp.d_b),
            recon_w4: DenseMatrix::zeros(hp.n_x * hp.d_b, hp.d),
            recon_w5: DenseMatrix::zeros(hp.d, hp.d_b),
            position_query: DenseMatrix::zeros(hp.n_x, hp.d_b),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|(_, m)| m.fill(0.0));
        z
    }

    /// Uniform in `±1/sqrt(fan_in)` for every tensor. Each interest query row
    /// is drawn independently so heads start distinct.
    pub fn init<R: Rng + ?Sized>(vocab: usize, hp: &HyperParams, rng: &mut R) -> Result<Self> {
        hp.validate()?;
        if vocab == 0 {
            return Err(Error::Invalid("vocabulary is empty".into()));
        }
        let mut p = Self::zeros(vocab, hp);
        let fan_in = [hp.d, hp.d, hp.d_h, hp.d, hp.d_b, hp.d, hp.d_b, hp.d_b];
        for ((_, m), fan) in p.tensors_mut().into_iter().zip(fan_in) {
            let bound = 1.0 / (fan as f64).sqrt();
            for v in m.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    pub fn vocab(&self) -> usize {
        self.item_emb.rows()
    }

    pub fn dim(&self) -> usize {
        self.item_emb.cols()
    }

    pub fn n_z(&self) -> usize {
        self.interest_query.rows()
    }

    pub fn n_x(&self) -> usize {
        self.position_query.rows()
    }

    pub fn tensors(&self) -> [(ParamKey, &DenseMatrix); 8] {
        [
            (ParamKey::ItemEmb, &self.item_emb),
            (ParamKey::W1, &self.w1),
            (ParamKey::InterestQuery, &self.interest_query),
            (ParamKey::W2, &self.w2),
            (ParamKey::W3, &self.recon_w3),
            (ParamKey::W4, &self.recon_w4),
            (ParamKey::W5, &self.recon_w5),
            (ParamKey::PositionQuery, &self.position_query),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(ParamKey, &mut DenseMatrix); 8] {
        [
            (ParamKey::ItemEmb, &mut self.item_emb),
            (ParamKey::W1, &mut self.w1),
            (ParamKey::InterestQuery, &mut self.interest_query),
            (ParamKey::W2, &mut self.w2),
            (ParamKey::W3, &mut self.recon_w3),
            (ParamKey::W4, &mut self.recon_w4),
            (ParamKey::W5, &mut self.recon_w5),
            (ParamKey::PositionQuery, &mut self.position_query),
        ]
    }

    pub fn tensor(&self, key: ParamKey) -> &DenseMatrix {
        self.tensors()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, m)| m)
            .expect("every key has a tensor")
    }

    /// Checks every tensor shape against `hp` and the item embedding width.
    pub fn check_shapes(&self, hp: &HyperParams) -> Result<()> {
        let expect = Self::zeros(self.vocab(), hp);
        for ((key, have), (_, want)) in self.tensors().into_iter().zip(expect.tensors()) {
            if have.shape() != want.shape() {
                return Err(Error::shape(key.name(), have.shape_str(), want.shape_str()));
            }
        }
        Ok(())
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) -> Result<()> {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.tensors_mut().into_iter().for_each(|(_, m)| m.scale(alpha));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, m)| m.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    /// First non-finite entry, as `(tensor, flat index)`.
    pub fn first_non_finite(&self) -> Option<(ParamKey, usize)> {
        self.tensors().into_iter().find_map(|(k, m)| {
            m.data().iter().position(|v| !v.is_finite()).map(|i| (k, i))
        })
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (t, (_, m)) in self.tensors().iter().enumerate() {
            let n = m.data().len();
            if i < n {
                return (t, i);
            }
            i -= n;
        }
        panic!("coordinate out of range");
    }
}

impl Parameters for ModelParams {
    fn num_coords(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    fn coord(&self, i: usize) -> f64 {
        let (t, j) = self.locate(i);
        self.tensors()[t].1.data()[j]
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        let (t, j) = self.locate(i);
        self.tensors_mut()[t].1.data_mut()[j] = v;
    }

    fn describe_coord(&self, i: usize) -> String {
        let (t, j) = self.locate(i);
        let (key, m) = self.tensors()[t];
        format!("{}[{}, {}]", key.name(), j / m.cols(), j % m.cols())
    }
}

/// A user's chronological item history, truncated to the last `max_len`
/// items. Valid items occupy the leading positions; the rest is padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorSequence {
    pub user: usize,
    items: Vec<usize>,
    max_len: usize,
}

impl BehaviorSequence {
    pub fn new(user: usize, history: &[usize], max_len: usize) -> Self {
        let start = history.len().saturating_sub(max_len);
        Self {
            user,
            items: history[start..].to_vec(),
            max_len,
        }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.max_len).map(|i| i < self.items.len()).collect()
    }
}

/// Interest vectors of one user and the attention map that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct InterestSet {
    /// `N_z x d`, one interest per row.
    pub interests: DenseMatrix,
    /// `N_z x N_x`; rows sum to 1 over valid positions, 0 elsewhere.
    pub attention: DenseMatrix,
}

impl InterestSet {
    pub fn n_z(&self) -> usize {
        self.interests.rows()
    }

    pub fn interest(&self, k: usize) -> &[f64] {
        self.interests.row(k)
    }
}

/// Looks up item embeddings; padded rows are zero.
pub fn embed(seq: &BehaviorSequence, params: &ModelParams) -> Result<DenseMatrix> {
    let vocab = params.vocab();
    let mut x = DenseMatrix::zeros(seq.max_len(), params.dim());
    for (i, &id) in seq.items().iter().enumerate() {
        if id >= vocab {
            return Err(Error::ItemOutOfRange { id, vocab });
        }
        x.row_mut(i).copy_from_slice(params.item_emb.row(id));
    }
    Ok(x)
}

/// Interests of a user from a raw history (truncated to the last `n_x` items).
pub fn user_interests(params: &ModelParams, hp: &HyperParams, history: &[usize]) -> Result<InterestSet> {
    let seq = BehaviorSequence::new(0, history, hp.n_x);
    extract_interests(&embed(&seq, params)?, &seq.mask(), params, hp)
}

/// Dot-product relevance between an interest and an item.
pub fn score(z: &DenseVector, y: &DenseVector) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::shape("score", z.len(), y.len()));
    }
    Ok(dot(z.as_slice(), y.as_slice()))
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ExtractorCache {
    /// `tanh(W1 x_i)`, `N_x x d_h` (zero on padding).
    pub hidden: DenseMatrix,
    /// `W2 x_i`, `N_x x d` (zero on padding).
    pub values: DenseMatrix,
}

pub fn extract_interests(
    x: &DenseMatrix,
    mask: &[bool],
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<InterestSet> {
    extract_with_cache(x, mask, params, hp).map(|(s, _)| s)
}

pub fn extract_with_cache(
    x: &DenseMatrix,
    mask: &[bool],
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<(InterestSet, ExtractorCache)> {
    let n_x = x.rows();
    if mask.len() != n_x {
        return Err(Error::shape("extract_interests mask", x.shape_str(), mask.len()));
    }
    if x.cols() != hp.d || params.w1.cols() != hp.d || params.w2.rows() != hp.d {
        return Err(Error::shape(
            "extract_interests",
            x.shape_str(),
            format!("d = {}", hp.d),
        ));
    }
    if params.interest_query.rows() != hp.n_z {
        return Err(Error::shape(
            "extract_interests",
            params.interest_query.shape_str(),
            format!("n_z = {}", hp.n_z),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptySequence);
    }

    let d_h = params.w1.rows();
    let mut hidden = DenseMatrix::zeros(n_x, d_h);
    let mut values = DenseMatrix::zeros(n_x, hp.d);
    for i in (0..n_x).filter(|&i| mask[i]) {
        let h = hidden.row_mut(i);
        params.w1.matvec_into(x.row(i), h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        params.w2.matvec_into(x.row(i), values.row_mut(i));
    }

    let mut attention = DenseMatrix::zeros(hp.n_z, n_x);
    for k in 0..hp.n_z {
        let q = params.interest_query.row(k);
        let row = attention.row_mut(k);
        for i in (0..n_x).filter(|&i| mask[i]) {
            row[i] = dot(q, hidden.row(i));
        }
        crate::gradcore::dense::masked_softmax_in_place(row, mask);
    }

    let mut interests = DenseMatrix::zeros(hp.n_z, hp.d);
    for k in 0..hp.n_z {
        for i in (0..n_x).filter(|&i| mask[i]) {
            let a = attention[(k, i)];
            for (z, v) in interests.row_mut(k).iter_mut().zip(values.row(i)) {
                *z += a * v;
            }
        }
    }

    Ok((
        InterestSet {
            interests,
            attention,
        },
        ExtractorCache { hidden, values },
    ))
}

/// Backpropagates `d_interests` (`N_z x d`) through the extractor, adding
/// parameter gradients into `grads` and input gradients into `d_x`.
pub fn extractor_backward(
    x: &DenseMatrix,
    mask: &[bool],
    params: &ModelParams,
    set: &InterestSet,
    cache: &ExtractorCache,
    d_interests: &DenseMatrix,
    grads: &mut ModelParams,
    d_x: &mut DenseMatrix,
) {
    let n_x = x.rows();
    let n_z = set.n_z();
    let d_h = params.w1.rows();
    let d = x.cols();
    let valid: Vec<usize> = (0..n_x).filter(|&i| mask[i]).collect();

    let mut d_values = DenseMatrix::zeros(n_x, d);
    let mut d_hidden = DenseMatrix::zeros(n_x, d_h);
    let mut d_logit = vec![0.0; n_x];
    for k in 0..n_z {
        let dz = d_interests.row(k);
        if dz.iter().all(|&v| v == 0.0) {
            continue;
        }
        let a = set.attention.row(k);
        let mut weighted = 0.0;
        for &i in &valid {
            let da = dot(dz, cache.values.row(i));
            d_logit[i] = da;
            weighted += a[i] * da;
            for (dv, &g) in d_values.row_mut(i).iter_mut().zip(dz) {
                *dv += a[i] * g;
            }
        }
        let q = params.interest_query.row(k);
        for &i in &valid {
            let ds = a[i] * (d_logit[i] - weighted);
            if ds == 0.0 {
                continue;
            }
            for (g, &h) in grads.interest_query.row_mut(k).iter_mut().zip(cache.hidden.row(i)) {
                *g += ds * h;
            }
            for (dh, &qv) in d_hidden.row_mut(i).iter_mut().zip(q) {
                *dh += ds * qv;
            }
        }
    }

    let mut pre = vec![0.0; d_h];
    for &i in &valid {
        for ((p, &dh), &h) in pre.iter_mut().zip(d_hidden.row(i)).zip(cache.hidden.row(i)) {
            *p = dh * (1.0 - h * h);
        }
        grads.w1.add_outer(&pre, x.row(i));
        params.w1.matvec_t_acc(&pre, d_x.row_mut(i));
        grads.w2.add_outer(d_values.row(i), x.row(i));
        params.w2.matvec_t_acc(d_values.row(i), d_x.row_mut(i));
    }
}
