//! Minibatch training loop.
//!
//! Randomness comes from independent ChaCha8 streams derived from the seed:
//! parameter initialization, batch shuffling, encoder noise (dropout and
//! reparameterization) and dropout in the keyword branch. The unguided path
//! therefore consumes exactly the same random numbers as a guided run.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::forward::{batch_loss_and_grad, infer_theta_batch, BatchLoss, BatchRngs, GuidedTargets, LossSettings, Objective};
use super::forward::{compute_beta, Batch, TopicWordDist};
use super::params::{ModelDims, ModelParams};
use crate::corpus::{BagOfWordsMatrix, Vocabulary};
use crate::diff::{AdamState, Tensor};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_ENCODER: u64 = 2;
const STREAM_PRIOR: u64 = 3;

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Per-epoch means of the batch loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub neg_elbo: f64,
    pub l_mu: f64,
    pub l_alpha: f64,
    pub total: f64,
}

pub struct TrainInputs<'a> {
    pub bow: &'a BagOfWordsMatrix,
    pub vocab: &'a Vocabulary,
    pub embeddings: &'a EmbeddingMatrix,
    pub objective: Objective<'a>,
}

/// A trained model: parameters, the frozen word embeddings and the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub rho: Tensor,
    pub vocab_hash: String,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainedModel {
    pub fn dims(&self) -> Result<ModelDims> {
        self.params.dims()
    }

    pub fn topics(&self) -> Result<TopicWordDist> {
        compute_beta(&self.rho, &self.params.alpha.value, self.config.exec_mode)
    }

    /// Eval-mode `θ` for every document, `D × K`.
    pub fn infer(&self, bow: &BagOfWordsMatrix) -> Result<Tensor> {
        if bow.vocab_size != self.rho.rows() {
            return Err(Error::VocabMismatch(format!(
                "corpus has {} terms, model has {}",
                bow.vocab_size,
                self.rho.rows()
            )));
        }
        infer_theta_batch(&self.params, bow, self.config.exec_mode)
    }
}

fn check_inputs(inputs: &TrainInputs<'_>, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    inputs.embeddings.check_vocab(inputs.vocab)?;
    let v = inputs.vocab.len();
    if inputs.bow.vocab_size != v {
        return Err(Error::VocabMismatch(format!(
            "bag-of-words has {} columns for a vocabulary of {v}",
            inputs.bow.vocab_size
        )));
    }
    if inputs.bow.num_docs() == 0 {
        return Err(Error::InvalidConfig("corpus has no documents".into()));
    }
    if let Objective::KeyEtm { prior, .. } = inputs.objective {
        if prior.vocab_size() != v {
            return Err(Error::VocabMismatch(format!(
                "prior has {} rows for a vocabulary of {v}",
                prior.vocab_size()
            )));
        }
        if prior.num_topics() != config.num_topics {
            return Err(Error::InvalidConfig(format!(
                "prior has {} topics, config asks for {}",
                prior.num_topics(),
                config.num_topics
            )));
        }
    }
    Ok(())
}

/// Initial parameters for a run, including the optional warm start of the
/// topic embeddings at the seed means.
pub fn initial_params(inputs: &TrainInputs<'_>, config: &TrainConfig) -> Result<ModelParams> {
    let dims = ModelDims {
        vocab_size: inputs.vocab.len(),
        num_topics: config.num_topics,
        embed_dim: inputs.embeddings.dim(),
        hidden1: config.hidden_size,
        hidden2: config.hidden_size,
    };
    let mut params = ModelParams::init(dims, &mut rng_stream(config.rng_seed, STREAM_INIT));
    if config.alpha_warm_start {
        let Objective::KeyEtm { prior, .. } = inputs.objective else {
            return Err(Error::InvalidConfig("alpha warm start needs seed words".into()));
        };
        let sem = prior.semantic_vectors();
        if sem.len() != dims.num_topics {
            return Err(Error::InvalidConfig("prior carries no semantic vectors".into()));
        }
        for (k, s) in sem.iter().enumerate() {
            params.alpha.value.row_mut(k).copy_from_slice(s);
        }
    }
    Ok(params)
}

/// Runs the full training loop. `sink` receives each epoch record as it is
/// produced.
pub fn train(inputs: &TrainInputs<'_>, config: &TrainConfig, sink: &mut dyn FnMut(&EpochRecord)) -> Result<TrainedModel> {
    check_inputs(inputs, config)?;
    let mut params = initial_params(inputs, config)?;
    let rho = inputs.embeddings.rho();
    let targets = match inputs.objective {
        Objective::Etm => None,
        Objective::KeyEtm { prior, guided } => Some(GuidedTargets::new(prior, guided)?),
    };
    let settings = LossSettings::from(config);
    let mut adam = AdamState::new(config.adam(), &params.parameters());
    let mut shuffle_rng = rng_stream(config.rng_seed, STREAM_SHUFFLE);
    let mut encoder_rng = rng_stream(config.rng_seed, STREAM_ENCODER);
    let mut prior_rng = rng_stream(config.rng_seed, STREAM_PRIOR);

    let d = inputs.bow.num_docs();
    let mut order: Vec<usize> = (0..d).collect();
    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = BatchLoss::default();
        let mut batches = 0usize;
        for (bi, docs) in order.chunks(config.batch_size).enumerate() {
            let batch = Batch::from_bow(inputs.bow, docs)?;
            let rngs = BatchRngs {
                encoder: &mut encoder_rng,
                prior: &mut prior_rng,
            };
            let (loss, grads) = batch_loss_and_grad(&params, rho, &batch, targets.as_ref(), &settings, rngs, true)
                .map_err(|e| non_finite(e, epoch, bi, &batch, inputs.bow, None))?;
            if !loss.total.is_finite() {
                return Err(non_finite(
                    Error::NonFiniteValue("total loss".into()),
                    epoch,
                    bi,
                    &batch,
                    inputs.bow,
                    Some(loss),
                ));
            }
            params.zero_grad();
            for (p, g) in params.parameters_mut().into_iter().zip(&grads) {
                p.accumulate(g);
            }
            adam.step(&mut params.parameters_mut());
            sum.neg_elbo += loss.neg_elbo;
            sum.l_mu += loss.l_mu;
            sum.l_alpha += loss.l_alpha;
            sum.total += loss.total;
            batches += 1;
        }
        let n = batches as f64;
        let record = EpochRecord {
            epoch,
            neg_elbo: sum.neg_elbo / n,
            l_mu: sum.l_mu / n,
            l_alpha: sum.l_alpha / n,
            total: sum.total / n,
        };
        log::debug!("epoch {epoch}: total {:.4}", record.total);
        sink(&record);
        history.push(record);
        if let Some(p) = config.early_stop_patience {
            if p > 0 && history.len() > p {
                let then = history[history.len() - 1 - p].total;
                let now = record.total;
                if then - now < config.min_rel_improvement * then.abs() {
                    log::info!("early stop after epoch {epoch}");
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(TrainedModel {
        params,
        rho: rho.clone(),
        vocab_hash: inputs.vocab.hash(),
        config: config.clone(),
        history,
        stopped_early,
    })
}

fn non_finite(
    err: Error,
    epoch: usize,
    batch: usize,
    b: &Batch,
    bow: &BagOfWordsMatrix,
    loss: Option<BatchLoss>,
) -> Error {
    match err {
        Error::NonFiniteValue(what) => {
            let ids: Vec<&str> = b.docs.iter().map(|&d| bow.ids[d].as_str()).collect();
            let diagnostic = serde_json::json!({
                "epoch": epoch,
                "batch": batch,
                "source": what,
                "doc_ids": ids,
                "doc_lengths": b.docs.iter().map(|&d| bow.doc_len(d)).collect::<Vec<_>>(),
                "loss": loss,
            })
            .to_string();
            Error::NonFiniteLoss {
                epoch,
                batch,
                diagnostic,
            }
        }
        other => other,
    }
}
