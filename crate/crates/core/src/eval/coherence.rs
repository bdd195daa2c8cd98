use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::BagOfWordsMatrix;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

/// Stand-in for `P(wi, wj)` when the pair never co-occurs.
pub const NPMI_EPS: f64 = 1e-12;

/// Document-level occurrence and co-occurrence counts for a set of tracked
/// terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    num_docs: usize,
    doc_freq: HashMap<usize, usize>,
    /// Keyed by `(min, max)`.
    pairs: HashMap<(usize, usize), usize>,
}

const SHARD: usize = 512;

impl CooccurrenceStats {
    /// Counts over every vocabulary term. Memory grows with the number of
    /// distinct co-occurring pairs; prefer [`CooccurrenceStats::for_terms`]
    /// when only a few terms matter.
    pub fn from_bow(bow: &BagOfWordsMatrix, mode: ExecMode) -> Self {
        Self::count(bow, None, mode)
    }

    /// Counts restricted to `terms`.
    pub fn for_terms(bow: &BagOfWordsMatrix, terms: &[usize], mode: ExecMode) -> Self {
        let keep: HashSet<usize> = terms.iter().copied().collect();
        Self::count(bow, Some(&keep), mode)
    }

    fn count(bow: &BagOfWordsMatrix, keep: Option<&HashSet<usize>>, mode: ExecMode) -> Self {
        let n = bow.num_docs();
        let shards = par::map_range(mode, n.div_ceil(SHARD), |s| {
            let mut df: HashMap<usize, usize> = HashMap::new();
            let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
            for d in s * SHARD..((s + 1) * SHARD).min(n) {
                let present: Vec<usize> = bow.rows[d]
                    .iter()
                    .map(|&(v, _)| v as usize)
                    .filter(|v| keep.is_none_or(|k| k.contains(v)))
                    .collect();
                for (i, &a) in present.iter().enumerate() {
                    *df.entry(a).or_default() += 1;
                    for &b in &present[i + 1..] {
                        *pairs.entry((a.min(b), a.max(b))).or_default() += 1;
                    }
                }
            }
            (df, pairs)
        });
        let mut doc_freq: HashMap<usize, usize> = keep
            .map(|k| k.iter().map(|&v| (v, 0)).collect())
            .unwrap_or_default();
        let mut pairs = HashMap::new();
        for (df, pc) in shards {
            for (k, c) in df {
                *doc_freq.entry(k).or_default() += c;
            }
            for (k, c) in pc {
                *pairs.entry(k).or_default() += c;
            }
        }
        Self {
            num_docs: n,
            doc_freq,
            pairs,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    /// Documents containing `w`; `None` if `w` is not tracked.
    pub fn doc_freq(&self, w: usize) -> Option<usize> {
        self.doc_freq.get(&w).copied()
    }

    /// Documents containing both terms (symmetric).
    pub fn pair_count(&self, a: usize, b: usize) -> usize {
        if a == b {
            return self.doc_freq(a).unwrap_or(0);
        }
        self.pairs.get(&(a.min(b), a.max(b))).copied().unwrap_or(0)
    }
}

/// Normalized pointwise mutual information of two terms at document level.
pub fn npmi(wi: usize, wj: usize, stats: &CooccurrenceStats) -> Result<f64> {
    let d = stats.num_docs as f64;
    let df = |w: usize| match stats.doc_freq(w) {
        Some(c) if c > 0 => Ok(c as f64),
        _ => Err(Error::UnknownTerm(format!("term index {w} has no document frequency"))),
    };
    let (pi, pj) = (df(wi)? / d, df(wj)? / d);
    let c = stats.pair_count(wi, wj);
    let pij = if c == 0 { NPMI_EPS } else { c as f64 / d };
    if pij == 1.0 {
        return Ok(1.0);
    }
    Ok((pij / (pi * pj)).ln() / -pij.ln())
}

/// Mean NPMI over every unordered pair within each list, averaged over
/// lists; also returns each list's own mean.
pub fn topic_coherence(topics: &[Vec<usize>], stats: &CooccurrenceStats) -> Result<(f64, Vec<f64>)> {
    if topics.is_empty() {
        return Err(Error::InvalidConfig("no topics to score".into()));
    }
    let mut per_topic = Vec::with_capacity(topics.len());
    for t in topics {
        if t.len() < 2 {
            return Err(Error::InvalidConfig("coherence needs at least 2 words per topic".into()));
        }
        let mut s = 0.0;
        let mut n = 0usize;
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                s += npmi(t[i], t[j], stats)?;
                n += 1;
            }
        }
        per_topic.push(s / n as f64);
    }
    let total_pairs: usize = topics.iter().map(|t| t.len() * (t.len() - 1) / 2).sum();
    let weighted: f64 = topics
        .iter()
        .zip(&per_topic)
        .map(|(t, c)| c * (t.len() * (t.len() - 1) / 2) as f64)
        .sum();
    Ok((weighted / total_pairs as f64, per_topic))
}

/// Unique entries across all lists divided by the total number of entries.
pub fn topic_diversity<T: Eq + Hash>(topics: &[Vec<T>]) -> f64 {
    let total: usize = topics.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let unique: HashSet<&T> = topics.iter().flatten().collect();
    unique.len() as f64 / total as f64
}

pub fn topic_quality(coherence: f64, diversity: f64) -> f64 {
    coherence * diversity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub coherence: f64,
    pub diversity: f64,
    pub quality: f64,
    pub per_topic: Vec<f64>,
}

/// Number of top words used for coherence and for diversity.
pub const COHERENCE_TOP: usize = 10;
pub const DIVERSITY_TOP: usize = 25;

/// Coherence on the top-10 words of each topic against `bow`, diversity on
/// the top-25 (all words when the vocabulary is smaller).
pub fn evaluate_topics(beta: &crate::diff::Tensor, bow: &BagOfWordsMatrix, mode: ExecMode) -> Result<MetricsReport> {
    let coh_lists = crate::model::top_words(beta, COHERENCE_TOP);
    let div_lists = crate::model::top_words(beta, DIVERSITY_TOP);
    let mut terms: Vec<usize> = coh_lists.iter().flatten().copied().collect();
    terms.sort_unstable();
    terms.dedup();
    let stats = CooccurrenceStats::for_terms(bow, &terms, mode);
    let (coherence, per_topic) = topic_coherence(&coh_lists, &stats)?;
    let diversity = topic_diversity(&div_lists);
    Ok(MetricsReport {
        coherence,
        diversity,
        quality: topic_quality(coherence, diversity),
        per_topic,
    })
}
