//! On-disk artifact formats.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use keyetm::corpus::{BagOfWordsMatrix, Vocabulary, VocabularySidecar};
use keyetm::diff::Tensor;
use keyetm::Error;
use serde::{Deserialize, Serialize};

pub const VOCAB: &str = "vocab.txt";
pub const VOCAB_META: &str = "vocab.meta.json";
pub const BOW: &str = "bow.jsonl";
pub const TOKENS: &str = "tokens.jsonl";
pub const EMBEDDINGS: &str = "embeddings.txt";
pub const EMBED_REPORT: &str = "embeddings.report.json";
pub const PRIOR: &str = "prior.tsv";
pub const MODEL: &str = "model.ketm";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const THETA: &str = "theta.tsv";
pub const METRICS: &str = "metrics.json";
pub const CLASSIFICATION: &str = "classification.json";
pub const ITEMS: &str = "intrusion_items.jsonl";
pub const KEYS: &str = "intrusion_keys.jsonl";
pub const SWEEP: &str = "sweep.csv";
pub const DIAGNOSTIC: &str = "nonfinite_diagnostic.json";

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Vocabulary plus its document statistics.
pub fn read_vocab(dir: &Path) -> Result<Vocabulary> {
    let vocab = Vocabulary::read_terms(open(&dir.join(VOCAB))?)?;
    let meta: VocabularySidecar = serde_json::from_reader(open(&dir.join(VOCAB_META))?)
        .with_context(|| format!("parsing {VOCAB_META}"))?;
    Ok(vocab.with_sidecar(&meta)?)
}

#[derive(Serialize, Deserialize)]
struct BowLine {
    id: String,
    #[serde(default)]
    label: Option<String>,
    counts: Vec<(u32, u32)>,
}

pub fn write_bow<W: Write>(bow: &BagOfWordsMatrix, mut w: W) -> Result<()> {
    for d in 0..bow.num_docs() {
        let line = BowLine {
            id: bow.ids[d].clone(),
            label: bow.labels[d].clone(),
            counts: bow.rows[d].clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_bow<R: BufRead>(r: R, vocab_size: usize) -> Result<BagOfWordsMatrix> {
    let mut bow = BagOfWordsMatrix {
        vocab_size,
        rows: Vec::new(),
        ids: Vec::new(),
        labels: Vec::new(),
        dropped: Vec::new(),
    };
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::MalformedInput { line: i + 1, message };
        let l: BowLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if let Some(&(v, _)) = l.counts.iter().find(|&&(v, _)| v as usize >= vocab_size) {
            return Err(Error::VocabMismatch(format!(
                "line {}: term index {v} outside vocabulary of {vocab_size}",
                i + 1
            ))
            .into());
        }
        bow.rows.push(l.counts);
        bow.ids.push(l.id);
        bow.labels.push(l.label);
    }
    Ok(bow)
}

#[derive(Serialize, Deserialize)]
struct TokenLine {
    id: String,
    tokens: Vec<u32>,
}

pub fn write_streams<W: Write>(ids: &[String], streams: &[Vec<u32>], mut w: W) -> Result<()> {
    for (id, s) in ids.iter().zip(streams) {
        serde_json::to_writer(
            &mut w,
            &TokenLine {
                id: id.clone(),
                tokens: s.clone(),
            },
        )?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_streams<R: BufRead>(r: R) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TokenLine = serde_json::from_str(&line).map_err(|e| Error::MalformedInput {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t.tokens);
    }
    Ok(out)
}

/// Tab-separated `id` plus one column per topic. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_theta<W: Write>(ids: &[String], topic_names: &[String], theta: &Tensor, mut w: W) -> Result<()> {
    write!(w, "id")?;
    for n in topic_names {
        write!(w, "\t{n}")?;
    }
    writeln!(w)?;
    for (d, id) in ids.iter().enumerate() {
        write!(w, "{id}")?;
        for x in theta.row(d) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
pub fn read_theta<R: BufRead>(r: R) -> Result<(Vec<String>, Tensor)> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        let mut parts = line.split('\t');
        ids.push(parts.next().unwrap_or_default().to_string());
        let row = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedInput {
                line: i + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok((ids, Tensor::from_rows(&rows)?))
}
