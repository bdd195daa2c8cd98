//! Planted-topic corpora with known topic-word and document-topic
//! distributions.
//!
//! Topic `k` owns a block of `V / K` pseudo-words and puts most of its mass
//! there with Zipf-like weights; the remaining mass is uniform. Each
//! document gets a label, most of its proportion on that topic and a
//! Dirichlet share on the rest. An optional dominant theme adds a fixed
//! share of one topic to every document. Seeds are the highest-weight
//! words of each block. Pseudo-words are fixed points of the stemmer,
//! at least three letters long and not stopwords, so they survive
//! preprocessing unchanged.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::corpus::{builtin_stopwords, porter, BagOfWordsMatrix, RawDocument, SparseRow, Vocabulary};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::prior::{SeedSpec, SeedTopic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    pub seeds_per_topic: usize,
    /// Mass each topic places on its own block.
    pub block_mass: f64,
    pub zipf_exponent: f64,
    /// Proportion of a document on its labelled topic.
    pub label_mass: f64,
    /// Dirichlet concentration of the remaining proportion.
    pub residual_concentration: f64,
    /// Relative label frequencies; uniform when `None`.
    pub class_weights: Option<Vec<f64>>,
    /// `(topic, share)` mixed into every document.
    pub dominant_theme: Option<(usize, f64)>,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_topics: 3,
            vocab_size: 300,
            num_docs: 600,
            min_doc_len: 60,
            max_doc_len: 120,
            seeds_per_topic: 3,
            block_mass: 0.9,
            zipf_exponent: 0.8,
            label_mass: 0.8,
            residual_concentration: 1.0,
            class_weights: None,
            dominant_theme: None,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    /// Unequal labels, overlapping topics and one theme present in every
    /// document.
    pub fn imbalanced(rng_seed: u64) -> Self {
        Self {
            class_weights: Some(vec![0.7, 0.2, 0.1]),
            dominant_theme: Some((0, 0.45)),
            block_mass: 0.6,
            label_mass: 0.6,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_topics < 2 || self.vocab_size < self.num_topics * self.seeds_per_topic.max(1) {
            return bad("need at least 2 topics and enough words for every seed");
        }
        if self.min_doc_len < 1 || self.max_doc_len < self.min_doc_len || self.num_docs < 1 {
            return bad("document sizes must satisfy 1 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.block_mass) || !(0.0..=1.0).contains(&self.label_mass) {
            return bad("masses must lie in [0, 1]");
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_topics || w.iter().any(|&x| x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return bad("class_weights needs one non-negative weight per topic");
            }
        }
        if let Some((t, s)) = self.dominant_theme {
            if t >= self.num_topics || !(0.0..1.0).contains(&s) {
                return bad("dominant theme topic out of range or share outside [0, 1)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    pub bow: BagOfWordsMatrix,
    pub streams: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    /// `D × K`
    pub theta: Tensor,
    /// `K × V`
    pub beta: Tensor,
    pub seeds: SeedSpec,
}

impl SyntheticCorpus {
    /// Documents as raw text (tokens joined by spaces) with label names.
    pub fn raw_documents(&self) -> Vec<RawDocument> {
        self.streams
            .iter()
            .enumerate()
            .map(|(d, s)| RawDocument {
                id: self.bow.ids[d].clone(),
                text: s.iter().map(|&w| self.vocab.term(w as usize)).collect::<Vec<_>>().join(" "),
                label: Some(self.label_names[self.labels[d]].clone()),
            })
            .collect()
    }
}

/// `n` distinct consonant-vowel pseudo-words that the stemmer leaves alone.
pub fn pseudo_words<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprtvz";
    const V: &[u8] = b"aiou";
    let stop = builtin_stopwords();
    let mut all = Vec::new();
    for &a in C {
        for &b in V {
            for &c in C {
                for &d in V {
                    for &e in C {
                        let w = String::from_utf8(vec![a, b, c, d, e]).expect("ascii");
                        if porter::stem(&w) == w && !stop.contains(&w) {
                            all.push(w);
                        }
                    }
                }
            }
        }
    }
    all.shuffle(rng);
    all.truncate(n);
    all
}

fn dirichlet<R: Rng + ?Sized>(k: usize, conc: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(conc, 1.0).expect("positive concentration");
    let mut x: Vec<f64> = (0..k).map(|_| g.sample(rng).max(1e-300)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    x
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let (k, v) = (config.num_topics, config.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let words = pseudo_words(v, &mut rng);
    if words.len() < v {
        return Err(Error::InvalidConfig(format!("at most {} pseudo-words available", words.len())));
    }
    let vocab = Vocabulary::from_terms(words)?;

    // Block membership over a shuffled index order.
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(&mut rng);
    let block = v / k;
    let mut beta = Tensor::full(&[k, v], (1.0 - config.block_mass) / v as f64);
    let mut seeds = Vec::with_capacity(k);
    for t in 0..k {
        let members = &order[t * block..(t + 1) * block];
        let weights: Vec<f64> = (0..block).map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent)).collect();
        let z: f64 = weights.iter().sum();
        for (r, &w) in members.iter().enumerate() {
            let cur = beta.get(t, w);
            beta.set(t, w, cur + config.block_mass * weights[r] / z);
        }
        seeds.push(SeedTopic {
            name: format!("topic{t}"),
            seeds: members[..config.seeds_per_topic]
                .iter()
                .map(|&w| vocab.term(w).to_string())
                .collect(),
        });
    }
    let seeds = SeedSpec { topics: seeds };
    let label_names: Vec<String> = seeds.topics.iter().map(|t| t.name.clone()).collect();

    let word_dists: Vec<WeightedIndex<f64>> = (0..k)
        .map(|t| WeightedIndex::new(beta.row(t)).expect("positive weights"))
        .collect();
    let class_dist = WeightedIndex::new(config.class_weights.clone().unwrap_or_else(|| vec![1.0; k]))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut theta = Tensor::zeros(&[config.num_docs, k]);
    let mut labels = Vec::with_capacity(config.num_docs);
    let mut streams = Vec::with_capacity(config.num_docs);
    for d in 0..config.num_docs {
        let label = class_dist.sample(&mut rng);
        let resid = dirichlet(k, config.residual_concentration, &mut rng);
        let mut th: Vec<f64> = resid.iter().map(|r| (1.0 - config.label_mass) * r).collect();
        th[label] += config.label_mass;
        if let Some((dom, share)) = config.dominant_theme {
            th.iter_mut().for_each(|x| *x *= 1.0 - share);
            th[dom] += share;
        }
        theta.row_mut(d).copy_from_slice(&th);
        let topic_dist = WeightedIndex::new(&th).expect("positive proportions");
        let len = rng.random_range(config.min_doc_len..=config.max_doc_len);
        let stream: Vec<u32> = (0..len)
            .map(|_| word_dists[topic_dist.sample(&mut rng)].sample(&mut rng) as u32)
            .collect();
        labels.push(label);
        streams.push(stream);
    }

    let rows: Vec<SparseRow> = streams
        .iter()
        .map(|s| {
            let mut counts = std::collections::BTreeMap::new();
            for &w in s {
                *counts.entry(w).or_insert(0u32) += 1;
            }
            counts.into_iter().collect()
        })
        .collect();
    let bow = BagOfWordsMatrix {
        vocab_size: v,
        rows,
        ids: (0..config.num_docs).map(|d| format!("doc{d:05}")).collect(),
        labels: labels.iter().map(|&l| Some(label_names[l].clone())).collect(),
        dropped: Vec::new(),
    };
    Ok(SyntheticCorpus {
        vocab,
        bow,
        streams,
        labels,
        label_names,
        theta,
        beta,
        seeds,
    })
}

/// Vocabulary indices with at least one occurrence.
pub fn used_terms(c: &SyntheticCorpus) -> HashSet<usize> {
    c.streams.iter().flatten().map(|&w| w as usize).collect()
}
