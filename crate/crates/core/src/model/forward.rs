//! Encoder, topic-word distribution, losses and eval-mode inference.
//!
//! The minimized batch objective is
//! `-Σ_d recon_d + Σ_d KL_d + λ1·L_μ + λ2·L_α`, summed over the documents
//! of the batch with no rescaling to corpus size.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::config::{GammaAlphaAxis, TrainConfig};
use super::params::{ModelParams, PARAM_NAMES};
use crate::corpus::BagOfWordsMatrix;
use crate::diff::{softmax, Graph, NodeId, Tensor, LOGVAR_MAX, LOGVAR_MIN};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::prior::{GuidedSet, PriorMatrix};

/// Guard added inside the reconstruction log.
pub const LOG_EPS: f64 = 1e-10;

/// Graph slot of each trainable tensor, in [`PARAM_NAMES`] order.
pub mod slot {
    pub const ALPHA: usize = 0;
    pub const W1: usize = 1;
    pub const B1: usize = 2;
    pub const W2: usize = 3;
    pub const B2: usize = 4;
    pub const W_MU: usize = 5;
    pub const B_MU: usize = 6;
    pub const W_LOGVAR: usize = 7;
    pub const B_LOGVAR: usize = 8;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocInference {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
}

/// `K × V`; row `k` is topic `k`'s distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordDist {
    pub beta: Tensor,
}

impl TopicWordDist {
    pub fn num_topics(&self) -> usize {
        self.beta.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.cols()
    }

    /// Per topic, the `m` vocabulary indices with the highest weight.
    /// Ties go to the lower index.
    pub fn top_words(&self, m: usize) -> Vec<Vec<usize>> {
        top_words(&self.beta, m)
    }
}

/// Loss components of one batch, each summed over its documents.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchLoss {
    pub recon: f64,
    pub kl: f64,
    pub neg_elbo: f64,
    pub l_mu: f64,
    pub l_alpha: f64,
    pub total: f64,
}

/// What the batch loss includes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Negative ELBO only; the keyword terms are never built.
    Etm,
    KeyEtm {
        prior: &'a PriorMatrix,
        guided: &'a GuidedSet,
    },
}

impl Objective<'_> {
    pub fn is_guided(&self) -> bool {
        matches!(self, Objective::KeyEtm { .. })
    }
}

/// Dense inputs for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Row-normalized counts, `B × V`.
    pub normalized: Tensor,
    /// Raw counts, `B × V`.
    pub counts: Tensor,
    /// Number of batch documents containing each vocabulary term.
    pub doc_presence: Vec<usize>,
    pub docs: Vec<usize>,
}

impl Batch {
    pub fn from_bow(bow: &BagOfWordsMatrix, docs: &[usize]) -> Result<Self> {
        let v = bow.vocab_size;
        let b = docs.len();
        let mut counts = Tensor::zeros(&[b, v]);
        let mut normalized = Tensor::zeros(&[b, v]);
        let mut doc_presence = vec![0usize; v];
        for (i, &d) in docs.iter().enumerate() {
            let total = bow.doc_len(d);
            if total == 0 {
                return Err(Error::ZeroLengthDocument);
            }
            for &(w, c) in &bow.rows[d] {
                let w = w as usize;
                counts.set(i, w, c as f64);
                normalized.set(i, w, c as f64 / total as f64);
                doc_presence[w] += 1;
            }
        }
        Ok(Self {
            normalized,
            counts,
            doc_presence,
            docs: docs.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Prior rows restricted to the guided set, built once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedTargets {
    pub indices: Vec<usize>,
    /// `|S| × K`
    pub prior_rows: Tensor,
    /// `K × |S|`
    pub prior_cols: Tensor,
    /// `‖γ^prior_v‖²` for each guided `v`.
    pub prior_sq_norms: Vec<f64>,
}

impl GuidedTargets {
    pub fn new(prior: &PriorMatrix, guided: &GuidedSet) -> Result<Self> {
        let k = prior.num_topics();
        let indices = guided.indices().to_vec();
        if indices.iter().any(|&v| v >= prior.vocab_size()) {
            return Err(Error::ShapeMismatch("guided index outside the prior".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * k);
        for &v in &indices {
            data.extend_from_slice(prior.gamma().row(v));
        }
        let prior_rows = Tensor::matrix(indices.len(), k, data)?;
        let prior_cols = prior_rows.transpose();
        let prior_sq_norms = (0..indices.len())
            .map(|i| prior_rows.row(i).iter().map(|x| x * x).sum())
            .collect();
        Ok(Self {
            indices,
            prior_rows,
            prior_cols,
            prior_sq_norms,
        })
    }
}

/// Loss settings that the graph needs.
#[derive(Debug, Clone, Copy)]
pub struct LossSettings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub dropout_rate: f64,
    pub axis: GammaAlphaAxis,
    pub mode: ExecMode,
}

impl From<&TrainConfig> for LossSettings {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            dropout_rate: c.dropout_rate,
            axis: c.gamma_alpha_axis,
            mode: c.exec_mode,
        }
    }
}

pub struct EncoderNodes {
    pub mu: NodeId,
    pub logvar: NodeId,
}

/// Parameter leaves for every slot.
pub fn param_nodes<'a>(g: &mut Graph<'a>, params: &'a ModelParams) -> [NodeId; 9] {
    let ps = params.parameters();
    std::array::from_fn(|i| g.param(i, &ps[i].value))
}

/// Encoder on a `B × V` batch of normalized counts.
pub fn encoder_graph<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    p: &[NodeId; 9],
    x: NodeId,
    dropout_rate: f64,
    rng: &mut R,
    train: bool,
) -> Result<EncoderNodes> {
    let h = g.matmul_nt(x, p[slot::W1])?;
    let h = g.add_bias(h, p[slot::B1])?;
    let h1 = g.softplus(h)?;
    let h = g.matmul_nt(h1, p[slot::W2])?;
    let h = g.add_bias(h, p[slot::B2])?;
    let h2 = g.softplus(h)?;
    let h2 = g.dropout(h2, dropout_rate, rng, train)?;
    let mu = g.matmul_nt(h2, p[slot::W_MU])?;
    let mu = g.add_bias(mu, p[slot::B_MU])?;
    let lv = g.matmul_nt(h2, p[slot::W_LOGVAR])?;
    let lv = g.add_bias(lv, p[slot::B_LOGVAR])?;
    let logvar = g.clamp(lv, LOGVAR_MIN, LOGVAR_MAX)?;
    Ok(EncoderNodes { mu, logvar })
}

/// `softmax_rows(α ρᵀ)`, `K × V`.
pub fn beta_graph(g: &mut Graph<'_>, alpha: NodeId, rho: NodeId) -> Result<NodeId> {
    let logits = g.matmul_nt(alpha, rho)?;
    g.softmax_rows(logits)
}

/// Encoder-side word-topic distribution for the guided words, `|S| × K`.
/// Row `v` is the mean head applied to the hidden representation of the
/// one-hot input for `v`.
pub fn gamma_mu_graph<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    p: &[NodeId; 9],
    rows: &[usize],
    dropout_rate: f64,
    rng: &mut R,
    train: bool,
) -> Result<NodeId> {
    let w1s = g.select_cols(p[slot::W1], rows)?;
    let m = g.transpose(w1s)?;
    let m = g.add_bias(m, p[slot::B1])?;
    let m = g.softplus(m)?;
    let n = g.matmul_nt(m, p[slot::W2])?;
    let n = g.add_bias(n, p[slot::B2])?;
    let n = g.softplus(n)?;
    let n = g.dropout(n, dropout_rate, rng, train)?;
    let w = g.matmul_nt(n, p[slot::W_MU])?;
    let w = g.add_bias(w, p[slot::B_MU])?;
    g.softmax_rows(w)
}

pub struct LossNodes {
    pub recon: NodeId,
    pub kl: NodeId,
    pub neg_elbo: NodeId,
    pub l_mu: Option<NodeId>,
    pub l_alpha: Option<NodeId>,
    pub total: NodeId,
}

/// Random streams consumed by one batch evaluation.
pub struct BatchRngs<'r, R: Rng + ?Sized> {
    /// Encoder dropout and reparameterization noise.
    pub encoder: &'r mut R,
    /// Dropout inside the encoder-side keyword branch.
    pub prior: &'r mut R,
}

/// Builds the full batch loss on `g`.
#[allow(clippy::too_many_arguments)]
pub fn loss_graph<'a, R: Rng + ?Sized>(
    g: &mut Graph<'a>,
    params: &'a ModelParams,
    rho: &'a Tensor,
    batch: &'a Batch,
    targets: Option<&GuidedTargets>,
    settings: &LossSettings,
    rngs: BatchRngs<'_, R>,
    train: bool,
) -> Result<LossNodes> {
    let p = param_nodes(g, params);
    let rho_n = g.constant_ref(rho);
    let x = g.constant_ref(&batch.normalized);
    let counts = g.constant_ref(&batch.counts);

    let beta = beta_graph(g, p[slot::ALPHA], rho_n)?;
    let enc = encoder_graph(g, &p, x, settings.dropout_rate, rngs.encoder, train)?;
    let delta = if train {
        g.reparameterize(enc.mu, enc.logvar, rngs.encoder)?
    } else {
        enc.mu
    };
    let theta = g.softmax_rows(delta)?;

    let mix = g.matmul(theta, beta)?;
    let logp = g.log(mix, LOG_EPS)?;
    let weighted = g.mul(logp, counts)?;
    let recon = g.sum(weighted)?;

    let e = g.exp(enc.logvar)?;
    let m2 = g.square(enc.mu)?;
    let t = g.add(e, m2)?;
    let t = g.sub(t, enc.logvar)?;
    let t = g.add_scalar(t, -1.0)?;
    let s = g.sum(t)?;
    let kl = g.scale(s, 0.5)?;

    let neg_recon = g.scale(recon, -1.0)?;
    let neg_elbo = g.add(neg_recon, kl)?;

    let Some(tg) = targets else {
        return Ok(LossNodes {
            recon,
            kl,
            neg_elbo,
            l_mu: None,
            l_alpha: None,
            total: neg_elbo,
        });
    };

    // Absent words contribute the full prior norm: their masked rows are zero.
    let gm = gamma_mu_graph(g, &p, &tg.indices, settings.dropout_rate, rngs.prior, train)?;
    let k = tg.prior_rows.cols();
    let b = batch.len();
    let mut presence = Tensor::zeros(&[tg.indices.len(), k]);
    let mut absent_const = 0.0;
    for (i, &v) in tg.indices.iter().enumerate() {
        let c = batch.doc_presence[v];
        presence.row_mut(i).iter_mut().for_each(|x| *x = c as f64);
        absent_const += (b - c) as f64 * tg.prior_sq_norms[i];
    }
    let pr = g.constant(tg.prior_rows.clone());
    let diff = g.sub(gm, pr)?;
    let sq = g.square(diff)?;
    let pres = g.constant(presence);
    let sq = g.mul(sq, pres)?;
    let l_mu = g.sum(sq)?;
    let l_mu = g.add_scalar(l_mu, absent_const)?;

    let l_alpha = match settings.axis {
        GammaAlphaAxis::Vocabulary => {
            let cols = g.select_cols(beta, &tg.indices)?;
            let pc = g.constant(tg.prior_cols.clone());
            let d = g.sub(cols, pc)?;
            let d = g.square(d)?;
            g.sum(d)?
        }
        GammaAlphaAxis::Topic => {
            let rs = g.select_rows(rho_n, &tg.indices)?;
            let logits = g.matmul_nt(rs, p[slot::ALPHA])?;
            let ga = g.softmax_rows(logits)?;
            let pr = g.constant(tg.prior_rows.clone());
            let d = g.sub(ga, pr)?;
            let d = g.square(d)?;
            g.sum(d)?
        }
    };

    let a = g.scale(l_mu, settings.lambda1)?;
    let c = g.scale(l_alpha, settings.lambda2)?;
    let total = g.add(neg_elbo, a)?;
    let total = g.add(total, c)?;
    Ok(LossNodes {
        recon,
        kl,
        neg_elbo,
        l_mu: Some(l_mu),
        l_alpha: Some(l_alpha),
        total,
    })
}

/// Evaluates one batch and returns its loss components and the gradient of
/// the total for every parameter, in [`PARAM_NAMES`] order.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss_and_grad<R: Rng + ?Sized>(
    params: &ModelParams,
    rho: &Tensor,
    batch: &Batch,
    targets: Option<&GuidedTargets>,
    settings: &LossSettings,
    rngs: BatchRngs<'_, R>,
    train: bool,
) -> Result<(BatchLoss, Vec<Tensor>)> {
    let mut g = Graph::new(settings.mode);
    let nodes = loss_graph(&mut g, params, rho, batch, targets, settings, rngs, train)?;
    let loss = read_loss(&g, &nodes);
    let grads = g.backward(nodes.total)?;
    let ps = params.parameters();
    let out = (0..PARAM_NAMES.len())
        .map(|i| {
            grads
                .get(i)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(ps[i].value.shape()))
        })
        .collect();
    Ok((loss, out))
}

/// Loss components without gradients.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<R: Rng + ?Sized>(
    params: &ModelParams,
    rho: &Tensor,
    batch: &Batch,
    targets: Option<&GuidedTargets>,
    settings: &LossSettings,
    rngs: BatchRngs<'_, R>,
    train: bool,
) -> Result<BatchLoss> {
    let mut g = Graph::new(settings.mode);
    let nodes = loss_graph(&mut g, params, rho, batch, targets, settings, rngs, train)?;
    Ok(read_loss(&g, &nodes))
}

fn read_loss(g: &Graph<'_>, n: &LossNodes) -> BatchLoss {
    let item = |id: NodeId| g.value(id).item();
    BatchLoss {
        recon: item(n.recon),
        kl: item(n.kl),
        neg_elbo: item(n.neg_elbo),
        l_mu: n.l_mu.map_or(0.0, item),
        l_alpha: n.l_alpha.map_or(0.0, item),
        total: item(n.total),
    }
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Eval-mode encoder on one normalized count vector.
pub fn encode(params: &ModelParams, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mu, lv) = encode_batch(params, &Tensor::matrix(1, x.len(), x.to_vec())?, ExecMode::Sequential)?;
    Ok((mu.row(0).to_vec(), lv.row(0).to_vec()))
}

/// Eval-mode encoder on a `B × V` matrix; returns `(mu, logvar)`, both `B × K`.
pub fn encode_batch(params: &ModelParams, x: &Tensor, mode: ExecMode) -> Result<(Tensor, Tensor)> {
    let v = params.encoder.w1.value.cols();
    if x.cols() != v {
        return Err(Error::ShapeMismatch(format!("input has {} columns, model vocabulary is {v}", x.cols())));
    }
    let mut g = Graph::new(mode);
    let p = param_nodes(&mut g, params);
    let xn = g.constant_ref(x);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let enc = encoder_graph(&mut g, &p, xn, 0.0, &mut rng, false)?;
    Ok((g.value(enc.mu).clone(), g.value(enc.logvar).clone()))
}

/// `δ = μ + exp(logvar/2)·ε`, `θ = softmax(δ)`. With `train` false no
/// noise is drawn and `δ = μ`.
pub fn sample_theta<R: Rng + ?Sized>(mu: &[f64], logvar: &[f64], rng: &mut R, train: bool) -> Result<DocInference> {
    if mu.len() != logvar.len() {
        return Err(Error::ShapeMismatch("mu and logvar lengths differ".into()));
    }
    let mut g = Graph::new(ExecMode::Sequential);
    let m = g.constant(Tensor::matrix(1, mu.len(), mu.to_vec())?);
    let l = g.constant(Tensor::matrix(1, mu.len(), logvar.to_vec())?);
    let delta = if train { g.reparameterize(m, l, rng)? } else { m };
    let theta = g.softmax_rows(delta)?;
    Ok(DocInference {
        mu: mu.to_vec(),
        logvar: logvar.to_vec(),
        delta: g.value(delta).data().to_vec(),
        theta: g.value(theta).data().to_vec(),
    })
}

/// Topic-word distribution from frozen word embeddings `rho` (`V × L`) and
/// topic embeddings `alpha` (`K × L`).
pub fn compute_beta(rho: &Tensor, alpha: &Tensor, mode: ExecMode) -> Result<TopicWordDist> {
    if rho.shape().len() != 2 || alpha.shape().len() != 2 || rho.cols() != alpha.cols() {
        return Err(Error::ShapeMismatch(format!(
            "rho {:?} and alpha {:?} disagree on the embedding dimension",
            rho.shape(),
            alpha.shape()
        )));
    }
    let mut g = Graph::new(mode);
    let a = g.constant_ref(alpha);
    let r = g.constant_ref(rho);
    let beta = beta_graph(&mut g, a, r)?;
    Ok(TopicWordDist {
        beta: g.value(beta).clone(),
    })
}

/// `Σ_v x_v · ln(Σ_k θ_k β_kv + 1e-10)`.
pub fn reconstruction_loglik(counts: &[f64], theta: &[f64], beta: &Tensor) -> Result<f64> {
    if theta.len() != beta.rows() || counts.len() != beta.cols() {
        return Err(Error::ShapeMismatch("counts, theta and beta disagree".into()));
    }
    let mut total = 0.0;
    for (v, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let p: f64 = theta.iter().enumerate().map(|(k, t)| t * beta.get(k, v)).sum();
        total += c * (p + LOG_EPS).ln();
    }
    Ok(total)
}

/// `0.5 · Σ_k (exp(logvar_k) + mu_k² - 1 - logvar_k)`.
pub fn kl_to_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, l)| l.exp() + m * m - 1.0 - l)
        .sum::<f64>()
}

/// Encoder-side word-topic distributions for one document, `V × K`; rows of
/// words absent from the document (`doc_mask[v] == 0`) are zero. Eval mode.
pub fn gamma_mu(params: &ModelParams, doc_mask: &[f64]) -> Result<Tensor> {
    let dims = params.dims()?;
    if doc_mask.len() != dims.vocab_size {
        return Err(Error::ShapeMismatch("mask length differs from vocabulary".into()));
    }
    let all: Vec<usize> = (0..dims.vocab_size).collect();
    let mut g = Graph::new(ExecMode::Sequential);
    let p = param_nodes(&mut g, params);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let gm = gamma_mu_graph(&mut g, &p, &all, 0.0, &mut rng, false)?;
    let mut out = g.value(gm).clone();
    for (v, &m) in doc_mask.iter().enumerate() {
        if m == 0.0 {
            out.row_mut(v).iter_mut().for_each(|x| *x = 0.0);
        }
    }
    Ok(out)
}

/// `Σ_d Σ_{v∈S} ‖γ^μ_dv - γ^prior_v‖²` over explicit per-document matrices.
pub fn l_mu(gamma_mu_docs: &[Tensor], prior: &PriorMatrix, guided: &GuidedSet) -> f64 {
    gamma_mu_docs
        .iter()
        .map(|gm| {
            guided
                .indices()
                .iter()
                .map(|&v| sq_dist(gm.row(v), prior.gamma().row(v)))
                .sum::<f64>()
        })
        .sum()
}

/// `Σ_{v∈S} ‖γ^α_v - γ^prior_v‖²`.
pub fn l_alpha(
    topics: &TopicWordDist,
    rho: &Tensor,
    alpha: &Tensor,
    prior: &PriorMatrix,
    guided: &GuidedSet,
    axis: GammaAlphaAxis,
) -> f64 {
    let k = topics.num_topics();
    guided
        .indices()
        .iter()
        .map(|&v| {
            let ga: Vec<f64> = match axis {
                GammaAlphaAxis::Vocabulary => (0..k).map(|t| topics.beta.get(t, v)).collect(),
                GammaAlphaAxis::Topic => {
                    let logits: Vec<f64> = (0..k)
                        .map(|t| crate::diff::linalg::dot(rho.row(v), alpha.row(t)))
                        .collect();
                    softmax(&logits)
                }
            };
            sq_dist(&ga, prior.gamma().row(v))
        })
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Eval-mode topic proportions `softmax(μ)` for one document's counts.
pub fn infer_theta(params: &ModelParams, counts: &[f64]) -> Result<Vec<f64>> {
    let x = crate::corpus::normalize_bow(counts)?;
    let (mu, _) = encode(params, &x)?;
    Ok(softmax(&mu))
}

/// [`infer_theta`] for every document of `bow`; documents are processed in
/// chunks, in parallel when `mode` allows. Output is `D × K`.
pub fn infer_theta_batch(params: &ModelParams, bow: &BagOfWordsMatrix, mode: ExecMode) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let d = bow.num_docs();
    let k = params.alpha.value.rows();
    let chunks = d.div_ceil(CHUNK);
    let parts = par::map_range(mode, chunks, |c| -> Result<Vec<f64>> {
        let docs: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(d)).collect();
        let batch = Batch::from_bow(bow, &docs)?;
        let (mu, _) = encode_batch(params, &batch.normalized, ExecMode::Sequential)?;
        Ok(rows_of(&mu).iter().flat_map(|r| softmax(r)).collect())
    });
    let mut data = Vec::with_capacity(d * k);
    for p in parts {
        data.extend(p?);
    }
    Tensor::matrix(d, k, data)
}

/// Per row of `beta`, the `m` highest-weight column indices, ties to the
/// lower index.
pub fn top_words(beta: &Tensor, m: usize) -> Vec<Vec<usize>> {
    (0..beta.rows())
        .map(|k| {
            let row = beta.row(k);
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.truncate(m.min(row.len()));
            idx
        })
        .collect()
}
