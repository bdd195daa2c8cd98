//! Corpus ingestion: tokenization, Porter stemming, document-frequency
//! filtered vocabulary and sparse bag-of-words rows.

pub mod porter;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

/// The bundled English stopword list.
pub fn builtin_stopwords() -> HashSet<String> {
    BUILTIN_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Preprocessing options. Document-frequency bounds are fractions of the
/// corpus size; a term is removed when `df < min_df * D` or `df > max_df * D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub min_df: f64,
    pub max_df: f64,
    /// Replaces the bundled list when set.
    pub stopwords: Option<Vec<String>>,
    pub lowercase: bool,
    pub stem: bool,
    /// Tokens shorter than this after stemming are dropped.
    pub min_token_len: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_df: 0.10,
            max_df: 0.75,
            stopwords: None,
            lowercase: true,
            stem: true,
            min_token_len: 3,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_df && self.min_df < self.max_df && self.max_df <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "document-frequency bounds must satisfy 0 <= min_df < max_df <= 1, got [{}, {}]",
                self.min_df, self.max_df
            )));
        }
        Ok(())
    }

    pub fn stopword_set(&self) -> HashSet<String> {
        match &self.stopwords {
            Some(list) => list.iter().map(|w| w.to_lowercase()).collect(),
            None => builtin_stopwords(),
        }
    }
}

/// Tokenizer bound to a resolved stopword set.
pub struct Preprocessor {
    config: PreprocessConfig,
    stopwords: HashSet<String>,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Result<Self> {
        config.validate()?;
        let stopwords = config.stopword_set();
        Ok(Self { config, stopwords })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }

    /// Splits on anything that is not an ASCII letter, drops stopwords,
    /// stems, then drops tokens shorter than `min_token_len`.
    pub fn tokenize_and_stem(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_ascii_alphabetic())
            .filter(|t| !t.is_empty())
            .filter_map(|raw| {
                let token = if self.config.lowercase {
                    raw.to_ascii_lowercase()
                } else {
                    raw.to_string()
                };
                if self.is_stopword(&token) {
                    return None;
                }
                let token = if self.config.stem {
                    porter::stem(&token)
                } else {
                    token
                };
                (token.len() >= self.config.min_token_len).then_some(token)
            })
            .collect()
    }

    pub fn tokenize_corpus(&self, docs: &[RawDocument], mode: ExecMode) -> Vec<TokenizedDocument> {
        par::map(mode, docs, |d| TokenizedDocument {
            id: d.id.clone(),
            tokens: self.tokenize_and_stem(&d.text),
            label: d.label.clone(),
        })
    }
}

/// Convenience wrapper around [`Preprocessor::tokenize_and_stem`].
pub fn tokenize_and_stem(text: &str, config: &PreprocessConfig) -> Result<Vec<String>> {
    Ok(Preprocessor::new(config.clone())?.tokenize_and_stem(text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    term_freq: Vec<usize>,
    num_docs: usize,
}

/// Sidecar written next to the one-term-per-line vocabulary file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabularySidecar {
    pub num_docs: usize,
    pub doc_freq: Vec<usize>,
    pub term_freq: Vec<usize>,
    pub hash: String,
    pub config: PreprocessConfig,
}

impl Vocabulary {
    /// Builds a vocabulary directly from an ordered term list, e.g. for
    /// synthetic corpora that skip preprocessing.
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let n = terms.len();
        Self::from_parts(terms, vec![0; n], vec![0; n], 0)
    }

    fn from_parts(
        terms: Vec<String>,
        doc_freq: Vec<usize>,
        term_freq: Vec<usize>,
        num_docs: usize,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary term '{t}'")));
            }
        }
        Ok(Self {
            terms,
            index,
            doc_freq,
            term_freq,
            num_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    /// Hex SHA-256 of the newline-joined term list. Binds embeddings,
    /// checkpoints and bag-of-words files to this exact vocabulary.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.terms {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn write_terms<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.terms {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_terms<R: BufRead>(r: R) -> Result<Self> {
        let terms = r
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_terms(terms)
    }

    pub fn sidecar(&self, config: &PreprocessConfig) -> VocabularySidecar {
        VocabularySidecar {
            num_docs: self.num_docs,
            doc_freq: self.doc_freq.clone(),
            term_freq: self.term_freq.clone(),
            hash: self.hash(),
            config: config.clone(),
        }
    }

    /// Restores document statistics from a sidecar.
    pub fn with_sidecar(mut self, sidecar: &VocabularySidecar) -> Result<Self> {
        if sidecar.hash != self.hash() || sidecar.doc_freq.len() != self.len() {
            return Err(Error::VocabMismatch(
                "sidecar does not describe this vocabulary".into(),
            ));
        }
        self.doc_freq = sidecar.doc_freq.clone();
        self.term_freq = sidecar.term_freq.clone();
        self.num_docs = sidecar.num_docs;
        Ok(self)
    }
}

/// Keeps the terms whose document frequency lies within the configured
/// fractional bounds. Terms are ordered by descending total frequency, ties
/// broken lexicographically.
pub fn build_vocabulary(docs: &[TokenizedDocument], config: &PreprocessConfig) -> Result<Vocabulary> {
    config.validate()?;
    if docs.is_empty() {
        return Err(Error::InvalidConfig("corpus is empty".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let mut seen = HashSet::new();
        for t in &doc.tokens {
            *tf.entry(t.as_str()).or_default() += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let n = docs.len() as f64;
    let mut kept: Vec<(&str, usize, usize)> = df
        .into_iter()
        .filter(|&(_, d)| {
            let frac = d as f64 / n;
            frac >= config.min_df && frac <= config.max_df
        })
        .map(|(t, d)| (t, d, tf[t]))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_parts(
        kept.iter().map(|k| k.0.to_string()).collect(),
        kept.iter().map(|k| k.1).collect(),
        kept.iter().map(|k| k.2).collect(),
        docs.len(),
    )
}

/// One sparse bag-of-words row: `(term index, count)` sorted by index.
pub type SparseRow = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagOfWordsMatrix {
    pub vocab_size: usize,
    pub rows: Vec<SparseRow>,
    pub ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    /// Ids of documents dropped because no token was in vocabulary.
    pub dropped: Vec<String>,
}

impl BagOfWordsMatrix {
    pub fn num_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.rows[d].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn dense_row(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        for &(v, c) in &self.rows[d] {
            out[v as usize] = c as f64;
        }
        out
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, docs: &[usize]) -> BagOfWordsMatrix {
        BagOfWordsMatrix {
            vocab_size: self.vocab_size,
            rows: docs.iter().map(|&d| self.rows[d].clone()).collect(),
            ids: docs.iter().map(|&d| self.ids[d].clone()).collect(),
            labels: docs.iter().map(|&d| self.labels[d].clone()).collect(),
            dropped: Vec::new(),
        }
    }
}

/// Counts in-vocabulary tokens per document. Documents left empty are
/// dropped and listed in [`BagOfWordsMatrix::dropped`].
pub fn to_bow(docs: &[TokenizedDocument], vocab: &Vocabulary) -> BagOfWordsMatrix {
    let mut out = BagOfWordsMatrix {
        vocab_size: vocab.len(),
        rows: Vec::with_capacity(docs.len()),
        ids: Vec::with_capacity(docs.len()),
        labels: Vec::with_capacity(docs.len()),
        dropped: Vec::new(),
    };
    for doc in docs {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for t in &doc.tokens {
            if let Some(v) = vocab.index_of(t) {
                *counts.entry(v as u32).or_default() += 1;
            }
        }
        if counts.is_empty() {
            out.dropped.push(doc.id.clone());
            continue;
        }
        let mut row: SparseRow = counts.into_iter().collect();
        row.sort_unstable();
        out.rows.push(row);
        out.ids.push(doc.id.clone());
        out.labels.push(doc.label.clone());
    }
    out
}

/// In-vocabulary token index sequences, aligned with the rows of
/// [`to_bow`] on the same input (empty documents are skipped).
pub fn to_token_streams(docs: &[TokenizedDocument], vocab: &Vocabulary) -> Vec<Vec<u32>> {
    docs.iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| vocab.index_of(t).map(|v| v as u32))
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Divides a count row by its sum.
pub fn normalize_bow(row: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroLengthDocument);
    }
    Ok(row.iter().map(|c| c / total).collect())
}

/// Reads `{"id", "text", "label"?}` objects, one per line. Blank lines are
/// skipped; duplicate ids and empty texts are rejected.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| Error::MalformedInput {
            line: lineno,
            message: e.to_string(),
        })?;
        if doc.text.trim().is_empty() {
            return Err(Error::MalformedInput {
                line: lineno,
                message: format!("document '{}' has empty text", doc.id),
            });
        }
        if !ids.insert(doc.id.clone()) {
            return Err(Error::MalformedInput {
                line: lineno,
                message: format!("duplicate document id '{}'", doc.id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}
