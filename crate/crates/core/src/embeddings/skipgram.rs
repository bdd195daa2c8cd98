//! Skip-gram with negative sampling.
//!
//! Noise words are drawn from the unigram distribution raised to 0.75.
//! Frequent-word subsampling is not applied; the vocabulary is already
//! max-df filtered. In deterministic mode a single worker makes sequential
//! updates and two runs with the same seed are bit-identical. Otherwise the
//! documents are sharded across the rayon pool, each shard trains its own
//! copy for one epoch and the copies are averaged; the result then depends
//! on the pool size.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::corpus::Vocabulary;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Terms seen fewer times than this are not trained (their rows keep
    /// the random initialization).
    pub min_count: usize,
    pub rng_seed: u64,
    pub deterministic: bool,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            rng_seed: 0,
            deterministic: true,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.window < 1 || self.negative_samples < 1 {
            return Err(Error::InvalidConfig(
                "skip-gram requires dim >= 2, window >= 1 and negative_samples >= 1".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramReport {
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
    pub warnings: Vec<String>,
}

struct Weights {
    input: Vec<f64>,
    output: Vec<f64>,
}

struct Schedule {
    lr0: f64,
    total_tokens: usize,
}

impl Schedule {
    fn rate(&self, processed: usize) -> f64 {
        let frac = processed as f64 / self.total_tokens.max(1) as f64;
        self.lr0 * (1.0 - frac).max(1e-4)
    }
}

/// Trains input embeddings on token index streams over `vocab`.
pub fn train_skipgram(
    streams: &[Vec<u32>],
    vocab: &Vocabulary,
    config: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, SkipGramReport)> {
    config.validate()?;
    let v = vocab.len();
    let dim = config.dim;
    if let Some(bad) = streams.iter().flatten().find(|&&t| t as usize >= v) {
        return Err(Error::VocabMismatch(format!(
            "token index {bad} outside vocabulary of {v}"
        )));
    }

    let mut counts = vec![0usize; v];
    for &t in streams.iter().flatten() {
        counts[t as usize] += 1;
    }
    let trainable: Vec<bool> = counts.iter().map(|&c| c >= config.min_count.max(1)).collect();
    let streams: Vec<Vec<u32>> = streams
        .iter()
        .map(|s| s.iter().copied().filter(|&t| trainable[t as usize]).collect())
        .collect();
    let total_tokens: usize = streams.iter().map(Vec::len).sum();

    let mut warnings = Vec::new();
    if streams.iter().all(|s| s.len() <= config.window) {
        let msg = format!(
            "every document is no longer than the window ({}); embeddings will be weak",
            config.window
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let bound = 0.5 / dim as f64;
    let mut w = Weights {
        input: (0..v * dim).map(|_| rng.random_range(-bound..bound)).collect(),
        output: vec![0.0; v * dim],
    };

    let noise_weights: Vec<f64> = counts
        .iter()
        .zip(&trainable)
        .map(|(&c, &ok)| if ok { (c as f64).powf(0.75) } else { 0.0 })
        .collect();
    let noise = match WeightedIndex::new(&noise_weights) {
        Ok(d) => d,
        Err(_) => {
            let msg = "corpus has no tokens; returning the random initialization".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
            let rho = Tensor::matrix(v, dim, w.input)?;
            let report = SkipGramReport {
                epoch_losses: Vec::new(),
                pairs_per_epoch: 0,
                warnings,
            };
            return Ok((EmbeddingMatrix::new(rho, vocab)?, report));
        }
    };

    let schedule = Schedule {
        lr0: config.learning_rate,
        total_tokens: total_tokens * config.epochs,
    };
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut pairs_per_epoch = 0;
    for epoch in 0..config.epochs {
        let offset = epoch * total_tokens;
        let (loss, pairs) = if config.deterministic {
            run_shard(&mut w, &streams, config, &noise, &schedule, offset, &mut rng)
        } else {
            run_sharded_epoch(&mut w, &streams, config, &noise, &schedule, offset, rng.random())
        };
        pairs_per_epoch = pairs;
        epoch_losses.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
    }

    let rho = Tensor::matrix(v, dim, w.input)?;
    let report = SkipGramReport {
        epoch_losses,
        pairs_per_epoch,
        warnings,
    };
    Ok((EmbeddingMatrix::new(rho, vocab)?, report))
}

fn run_sharded_epoch(
    w: &mut Weights,
    streams: &[Vec<u32>],
    config: &SkipGramConfig,
    noise: &WeightedIndex<f64>,
    schedule: &Schedule,
    offset: usize,
    seed: u64,
) -> (f64, usize) {
    let shards = rayon_threads().min(streams.len()).max(1);
    let chunk = streams.len().div_ceil(shards);
    let parts: Vec<&[Vec<u32>]> = streams.chunks(chunk).collect();
    let results = par::map_range(ExecMode::Parallel, parts.len(), |i| {
        let mut local = Weights {
            input: w.input.clone(),
            output: w.output.clone(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (loss, pairs) = run_shard(&mut local, parts[i], config, noise, schedule, offset, &mut rng);
        (local, loss, pairs)
    });
    let n = results.len() as f64;
    w.input.iter_mut().for_each(|x| *x = 0.0);
    w.output.iter_mut().for_each(|x| *x = 0.0);
    let (mut loss, mut pairs) = (0.0, 0);
    for (local, l, p) in results {
        for (a, b) in w.input.iter_mut().zip(&local.input) {
            *a += b / n;
        }
        for (a, b) in w.output.iter_mut().zip(&local.output) {
            *a += b / n;
        }
        loss += l;
        pairs += p;
    }
    (loss, pairs)
}

fn rayon_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// One pass over `streams`; returns (summed loss, pair count).
fn run_shard(
    w: &mut Weights,
    streams: &[Vec<u32>],
    config: &SkipGramConfig,
    noise: &WeightedIndex<f64>,
    schedule: &Schedule,
    offset: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, usize) {
    let dim = config.dim;
    let mut grad_in = vec![0.0; dim];
    let mut processed = offset;
    let (mut loss, mut pairs) = (0.0, 0usize);
    for stream in streams {
        for (pos, &center) in stream.iter().enumerate() {
            let lr = schedule.rate(processed);
            processed += 1;
            // Reduced window as in the reference word2vec tool.
            let reach = config.window - rng.random_range(0..config.window);
            let lo = pos.saturating_sub(reach);
            let hi = (pos + reach).min(stream.len() - 1);
            for ctx_pos in lo..=hi {
                if ctx_pos == pos {
                    continue;
                }
                let context = stream[ctx_pos] as usize;
                let c = center as usize;
                grad_in.iter_mut().for_each(|g| *g = 0.0);
                let input = c * dim;
                for d in 0..=config.negative_samples {
                    let (target, label) = if d == 0 {
                        (context, 1.0)
                    } else {
                        let t = noise.sample(rng);
                        if t == context {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = target * dim;
                    let score: f64 = (0..dim).map(|j| w.input[input + j] * w.output[out + j]).sum();
                    let p = sigmoid(score);
                    loss -= if label == 1.0 {
                        p.max(1e-12).ln()
                    } else {
                        (1.0 - p).max(1e-12).ln()
                    };
                    let g = (label - p) * lr;
                    for j in 0..dim {
                        grad_in[j] += g * w.output[out + j];
                        w.output[out + j] += g * w.input[input + j];
                    }
                }
                for j in 0..dim {
                    w.input[input + j] += grad_in[j];
                }
                pairs += 1;
            }
        }
    }
    (loss, pairs)
}

fn sigmoid(x: f64) -> f64 {
    crate::diff::graph::sigmoid(x)
}
