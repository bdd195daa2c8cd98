//! Seed words, per-topic semantic vectors and the binary keyword prior.
//!
//! A vocabulary term `v` gets prior 1 in topic `k` when it is one of the
//! topic's seeds or when the cosine similarity between its embedding and the
//! mean seed embedding of `k` reaches the threshold. The guided set is every
//! term with at least one nonzero prior entry.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{porter, Vocabulary};
use crate::diff::Tensor;
use crate::embeddings::{cosine_similarity, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTopic {
    pub name: String,
    pub seeds: Vec<String>,
}

/// Seed-word lists, one per topic, in topic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub topics: Vec<SeedTopic>,
}

impl SeedSpec {
    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    /// Checks topic count, emptiness, duplicates, and that every seed is
    /// already a Porter stem.
    pub fn validate(&self) -> Result<()> {
        if self.topics.len() < 2 {
            return Err(Error::InvalidSeeds(format!(
                "need at least 2 topics, got {}",
                self.topics.len()
            )));
        }
        for t in &self.topics {
            if t.seeds.is_empty() {
                return Err(Error::InvalidSeeds(format!("topic '{}' has no seeds", t.name)));
            }
            let mut seen = HashSet::new();
            for s in &t.seeds {
                if !seen.insert(s.as_str()) {
                    return Err(Error::InvalidSeeds(format!(
                        "duplicate seed '{s}' in topic '{}'",
                        t.name
                    )));
                }
                let stemmed = porter::stem(s);
                if stemmed != *s {
                    return Err(Error::InvalidSeeds(format!(
                        "seed '{s}' in topic '{}' is not a stem; did you mean '{stemmed}'?",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: SeedSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Mean embedding of the in-vocabulary seeds. Out-of-vocabulary seeds are
/// skipped (and returned) and excluded from the divisor.
pub fn semantic_vector(
    topic: &SeedTopic,
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
) -> Result<(Vec<f64>, Vec<String>)> {
    let mut sum = vec![0.0; emb.dim()];
    let mut present = 0usize;
    let mut skipped = Vec::new();
    for s in &topic.seeds {
        match vocab.index_of(s) {
            Some(v) => {
                for (a, b) in sum.iter_mut().zip(emb.row(v)) {
                    *a += b;
                }
                present += 1;
            }
            None => {
                log::warn!("seed '{s}' of topic '{}' is not in the vocabulary; skipped", topic.name);
                skipped.push(s.clone());
            }
        }
    }
    if present == 0 {
        return Err(Error::AllSeedsOutOfVocabulary(topic.name.clone()));
    }
    sum.iter_mut().for_each(|x| *x /= present as f64);
    Ok((sum, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorSource {
    Seed,
    Similarity,
}

/// Binary `V × K` keyword prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix {
    gamma: Tensor,
    thr: f64,
    sources: Vec<(usize, usize, PriorSource)>,
    skipped_seeds: Vec<String>,
    semantic: Vec<Vec<f64>>,
}

impl PriorMatrix {
    /// Wraps an explicit 0/1 matrix (every nonzero is tagged as a seed).
    pub fn from_matrix(gamma: Tensor, thr: f64) -> Result<Self> {
        if gamma.data().iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidConfig("prior entries must be 0 or 1".into()));
        }
        let sources = (0..gamma.rows())
            .flat_map(|v| (0..gamma.cols()).map(move |k| (v, k)))
            .filter(|&(v, k)| gamma.get(v, k) == 1.0)
            .map(|(v, k)| (v, k, PriorSource::Seed))
            .collect();
        Ok(Self {
            gamma,
            thr,
            sources,
            skipped_seeds: Vec::new(),
            semantic: Vec::new(),
        })
    }

    pub fn gamma(&self) -> &Tensor {
        &self.gamma
    }

    pub fn thr(&self) -> f64 {
        self.thr
    }

    pub fn num_topics(&self) -> usize {
        self.gamma.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.gamma.rows()
    }

    pub fn get(&self, v: usize, k: usize) -> bool {
        self.gamma.get(v, k) == 1.0
    }

    /// Per-topic mean seed embeddings; empty for matrices built with
    /// [`PriorMatrix::from_matrix`].
    pub fn semantic_vectors(&self) -> &[Vec<f64>] {
        &self.semantic
    }

    pub fn skipped_seeds(&self) -> &[String] {
        &self.skipped_seeds
    }

    /// Nonzero cells with their origin, row-major.
    pub fn sources(&self) -> &[(usize, usize, PriorSource)] {
        &self.sources
    }

    /// Debug export: `term<TAB>topic<TAB>source` per nonzero cell.
    pub fn write_tsv<W: Write>(&self, vocab: &Vocabulary, spec: &SeedSpec, mut w: W) -> Result<()> {
        writeln!(w, "term\ttopic\tsource")?;
        for &(v, k, src) in &self.sources {
            let src = match src {
                PriorSource::Seed => "seed",
                PriorSource::Similarity => "similarity",
            };
            writeln!(w, "{}\t{}\t{src}", vocab.term(v), spec.topics[k].name)?;
        }
        Ok(())
    }
}

pub fn build_prior(
    spec: &SeedSpec,
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    thr: f64,
    mode: ExecMode,
) -> Result<PriorMatrix> {
    emb.check_vocab(vocab)?;
    let k = spec.num_topics();
    let mut semantic = Vec::with_capacity(k);
    let mut skipped_seeds = Vec::new();
    for topic in &spec.topics {
        let (vec, skipped) = semantic_vector(topic, vocab, emb)?;
        semantic.push(vec);
        skipped_seeds.extend(skipped);
    }
    let seed_sets: Vec<HashSet<usize>> = spec
        .topics
        .iter()
        .map(|t| t.seeds.iter().filter_map(|s| vocab.index_of(s)).collect())
        .collect();

    let rows = par::map_range(mode, vocab.len(), |v| {
        (0..k)
            .map(|topic| {
                if seed_sets[topic].contains(&v) {
                    Some(PriorSource::Seed)
                } else {
                    // An undefined similarity (zero vector) never passes.
                    match cosine_similarity(emb.row(v), &semantic[topic]) {
                        Ok(c) if c >= thr => Some(PriorSource::Similarity),
                        _ => None,
                    }
                }
            })
            .collect::<Vec<_>>()
    });

    let mut gamma = Tensor::zeros(&[vocab.len(), k]);
    let mut sources = Vec::new();
    for (v, row) in rows.into_iter().enumerate() {
        for (topic, src) in row.into_iter().enumerate() {
            if let Some(src) = src {
                gamma.set(v, topic, 1.0);
                sources.push((v, topic, src));
            }
        }
    }
    Ok(PriorMatrix {
        gamma,
        thr,
        sources,
        skipped_seeds,
        semantic,
    })
}

/// Sorted vocabulary indices of rows with any nonzero prior entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidedSet {
    indices: Vec<usize>,
}

impl GuidedSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.indices.binary_search(&v).is_ok()
    }
}

pub fn guided_set(prior: &PriorMatrix) -> Result<GuidedSet> {
    let g = prior.gamma();
    let indices: Vec<usize> = (0..g.rows())
        .filter(|&v| g.row(v).iter().any(|&x| x > 0.0))
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyGuidedSet);
    }
    Ok(GuidedSet { indices })
}
