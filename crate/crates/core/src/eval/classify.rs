use std::collections::{BTreeMap, BTreeSet, HashMap};

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Macro-averaged.
    pub precision: f64,
    /// Macro-averaged.
    pub recall: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub evaluated: usize,
    /// Documents skipped because they carry no gold label.
    pub missing_labels: usize,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

/// Label predicted for a document whose top topic maps to no label.
pub const UNMAPPED: &str = "<unmapped>";

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = k;
        }
    }
    best
}

/// Predicts `topic_labels[argmax θ_d]` for each document and scores it
/// against `gold`. Per-class scores are taken over the union of gold and
/// predicted classes, with 0 for any undefined ratio.
pub fn classification_eval(
    theta: &Tensor,
    gold: &[Option<String>],
    topic_labels: &[Option<String>],
) -> Result<ClassificationReport> {
    if theta.rows() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} theta rows for {} gold labels",
            theta.rows(),
            gold.len()
        )));
    }
    if topic_labels.len() != theta.cols() {
        return Err(Error::ShapeMismatch(format!(
            "{} topic labels for {} topics",
            topic_labels.len(),
            theta.cols()
        )));
    }
    let mut owner: HashMap<&str, usize> = HashMap::new();
    for (k, l) in topic_labels.iter().enumerate() {
        if let Some(l) = l {
            if let Some(prev) = owner.insert(l, k) {
                return Err(Error::InvalidConfig(format!(
                    "label '{l}' is mapped to topics {prev} and {k}"
                )));
            }
        }
    }

    let mut pairs: Vec<(&str, &str)> = Vec::new();
    let mut missing = 0;
    for (d, g) in gold.iter().enumerate() {
        let Some(g) = g else {
            missing += 1;
            continue;
        };
        if !owner.contains_key(g.as_str()) {
            return Err(Error::UnmappedLabel(g.clone()));
        }
        let pred = topic_labels[argmax(theta.row(d))].as_deref().unwrap_or(UNMAPPED);
        pairs.push((g.as_str(), pred));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no labelled documents".into()));
    }

    let classes: BTreeSet<&str> = pairs.iter().flat_map(|&(g, p)| [g, p]).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut per_class = BTreeMap::new();
    let mut correct = 0;
    for &c in &classes {
        let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count();
        let predicted = pairs.iter().filter(|&&(_, p)| p == c).count();
        let support = pairs.iter().filter(|&&(g, _)| g == c).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        correct += tp;
        per_class.insert(
            c.to_string(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / n;
    Ok(ClassificationReport {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1_macro: mean(|m| m.f1),
        f1_micro: correct as f64 / pairs.len() as f64,
        evaluated: pairs.len(),
        missing_labels: missing,
        per_class,
    })
}

/// Topic-to-label assignment maximizing the number of documents whose top
/// topic agrees with their gold label. Topics left over get `None`.
pub fn suggest_mapping(theta: &Tensor, gold: &[Option<String>]) -> Result<Vec<Option<String>>> {
    if theta.rows() != gold.len() {
        return Err(Error::ShapeMismatch("theta rows and labels differ".into()));
    }
    let labels: Vec<&str> = gold
        .iter()
        .flatten()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = theta.cols();
    let mut table = vec![vec![0i64; labels.len()]; k];
    for (d, g) in gold.iter().enumerate() {
        if let Some(g) = g {
            let c = labels.binary_search(&g.as_str()).expect("collected above");
            table[argmax(theta.row(d))][c] += 1;
        }
    }
    let mut out = vec![None; k];
    if labels.is_empty() {
        return Ok(out);
    }
    if k <= labels.len() {
        let m = Matrix::from_rows(table).expect("rectangular");
        let (_, assign) = kuhn_munkres(&m);
        for (t, c) in assign.into_iter().enumerate() {
            out[t] = Some(labels[c].to_string());
        }
    } else {
        let cols: Vec<Vec<i64>> = (0..labels.len()).map(|c| table.iter().map(|r| r[c]).collect()).collect();
        let m = Matrix::from_rows(cols).expect("rectangular");
        let (_, assign) = kuhn_munkres(&m);
        for (c, t) in assign.into_iter().enumerate() {
            out[t] = Some(labels[c].to_string());
        }
    }
    Ok(out)
}
