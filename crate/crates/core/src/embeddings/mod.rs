//! Word embeddings: skip-gram training, word2vec text I/O and cosine similarity.

mod skipgram;

pub use skipgram::{train_skipgram, SkipGramConfig, SkipGramReport};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Standard deviation for rows of vocabulary terms missing from a loaded file.
pub const MISSING_ROW_STD: f64 = 0.01;

/// `V × L` word embeddings bound to the vocabulary they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rho: Tensor,
    vocab_hash: String,
}

impl EmbeddingMatrix {
    pub fn new(rho: Tensor, vocab: &Vocabulary) -> Result<Self> {
        Self::with_hash(rho, vocab.len(), vocab.hash())
    }

    /// Binds `rho` to a vocabulary known only by its hash and size.
    pub fn with_hash(rho: Tensor, vocab_size: usize, vocab_hash: String) -> Result<Self> {
        if rho.shape().len() != 2 || rho.rows() != vocab_size {
            return Err(Error::VocabMismatch(format!(
                "embedding has {} rows for a vocabulary of {vocab_size}",
                rho.rows()
            )));
        }
        if rho.cols() < 1 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        if !rho.all_finite() {
            return Err(Error::NonFiniteValue("embedding matrix".into()));
        }
        Ok(Self { rho, vocab_hash })
    }

    pub fn rho(&self) -> &Tensor {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.rho.rows()
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn row(&self, v: usize) -> &[f64] {
        self.rho.row(v)
    }

    /// Fails unless this matrix was built for `vocab`.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if self.vocab_hash != vocab.hash() || self.vocab_size() != vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "embeddings were built for vocabulary {} but {} is in use",
                short(&self.vocab_hash),
                short(&vocab.hash())
            )));
        }
        Ok(())
    }

    /// Writes word2vec text format, rows in vocabulary order.
    pub fn save<W: Write>(&self, vocab: &Vocabulary, mut w: W) -> Result<()> {
        self.check_vocab(vocab)?;
        writeln!(w, "{} {}", self.vocab_size(), self.dim())?;
        for (v, term) in vocab.terms().iter().enumerate() {
            write!(w, "{term}")?;
            for x in self.row(v) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered: usize,
    /// Vocabulary terms absent from the file, initialized randomly.
    pub missing: Vec<String>,
    pub coverage: f64,
}

/// Reads word2vec text format (`V L` header, then `term v1 … vL` lines) and
/// reorders rows to `vocab`. Terms not in the file get `N(0, 0.01²)` rows
/// drawn from `rng_seed`.
pub fn load_embeddings<R: BufRead>(
    r: R,
    vocab: &Vocabulary,
    rng_seed: u64,
) -> Result<(EmbeddingMatrix, CoverageReport)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (_count, dim) = match fields.as_slice() {
        [v, l] => (
            v.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(header.clone()))?,
            l.parse::<usize>()
                .map_err(|_| Error::MalformedHeader(header.clone()))?,
        ),
        _ => return Err(Error::MalformedHeader(header)),
    };
    if dim == 0 {
        return Err(Error::MalformedHeader("dimension is zero".into()));
    }

    let mut found: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let Some(term) = parts.next() else { continue };
        let values = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedInput {
                line: lineno,
                message: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                line: lineno,
                expected: dim,
                found: values.len(),
            });
        }
        if let Some(v) = vocab.index_of(term) {
            found.entry(v).or_insert(values);
        }
    }

    let normal = Normal::new(0.0, MISSING_ROW_STD).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let mut missing = Vec::new();
    for v in 0..vocab.len() {
        match found.get(&v) {
            Some(row) => data.extend_from_slice(row),
            None => {
                missing.push(vocab.term(v).to_string());
                data.extend((0..dim).map(|_| normal.sample(&mut rng)));
            }
        }
    }
    if !missing.is_empty() {
        log::warn!("{} vocabulary terms missing from embedding file", missing.len());
    }
    let covered = vocab.len() - missing.len();
    let report = CoverageReport {
        covered,
        coverage: covered as f64 / vocab.len() as f64,
        missing,
    };
    let rho = Tensor::matrix(vocab.len(), dim, data)?;
    Ok((EmbeddingMatrix::new(rho, vocab)?, report))
}

/// `a·b / (‖a‖ ‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(terms: &[&str]) -> Vocabulary {
        Vocabulary::from_terms(terms.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn load_full_coverage_reorders() {
        let v = vocab(&["b", "a"]);
        let file = "2 2\na 1 2\nb 3 4\n";
        let (emb, rep) = load_embeddings(file.as_bytes(), &v, 0).unwrap();
        assert_eq!(rep.coverage, 1.0);
        assert_eq!(emb.row(0), &[3.0, 4.0]);
        assert_eq!(emb.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn load_reports_missing() {
        let v = vocab(&["a", "b", "c", "d"]);
        let file = "1 3\na 1 2 3\n";
        let (emb, rep) = load_embeddings(file.as_bytes(), &v, 7).unwrap();
        assert_eq!(rep.missing, vec!["b", "c", "d"]);
        assert_eq!(rep.covered, 1);
        assert!(emb.row(2).iter().all(|x| x.abs() < 0.1 && *x != 0.0));
    }

    #[test]
    fn load_dimension_mismatch() {
        let v = vocab(&["a"]);
        let file = "1 3\na 1 2\n";
        assert!(matches!(
            load_embeddings(file.as_bytes(), &v, 0),
            Err(Error::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            load_embeddings("300\n".as_bytes(), &v, 0),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn save_load_roundtrip() {
        let v = vocab(&["x", "y"]);
        let rho = Tensor::matrix(2, 3, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 0.0, -1.0]).unwrap();
        let emb = EmbeddingMatrix::new(rho, &v).unwrap();
        let mut buf = Vec::new();
        emb.save(&v, &mut buf).unwrap();
        let (back, _) = load_embeddings(buf.as_slice(), &v, 0).unwrap();
        assert_eq!(back, emb);
    }

    #[test]
    fn vocab_binding_enforced() {
        let v = vocab(&["x", "y"]);
        let other = vocab(&["y", "x"]);
        let emb = EmbeddingMatrix::new(Tensor::zeros(&[2, 2]), &v).unwrap();
        assert!(emb.check_vocab(&v).is_ok());
        assert!(matches!(emb.check_vocab(&other), Err(Error::VocabMismatch(_))));
    }
}
