use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::top_words;

pub const ITEMS_PER_TOPIC: usize = 4;
pub const SHOWN_TERMS: usize = 5;
/// An intruder must rank below this in the topic it is planted in.
pub const OWN_RANK_CUTOFF: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntrusionItem {
    pub item_id: String,
    pub topic: usize,
    /// The topic's top terms followed by the intruder, before shuffling.
    pub top_terms: Vec<String>,
    pub intruder: String,
    /// What raters see.
    pub presented: Vec<String>,
    /// Position of the intruder in `presented`.
    pub answer_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemView<'a> {
    pub item_id: &'a str,
    pub topic: usize,
    pub terms: &'a [String],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub item_id: String,
    pub answer_index: usize,
    pub intruder: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub item_id: String,
    pub selected_index: usize,
    #[serde(default)]
    pub rater_id: Option<String>,
}

#[derive(Debug, Default)]
pub struct IntrusionSet {
    pub items: Vec<IntrusionItem>,
    /// Topics for which no intruder exists.
    pub skipped: Vec<Error>,
}

/// Builds [`ITEMS_PER_TOPIC`] items per topic of `beta` (`K × V`). The
/// intruder pool of topic `k` is every other topic's top-5 terms that fall
/// outside `k`'s top-50. Draws are distinct while the pool allows.
pub fn make_intrusion_items<R: Rng + ?Sized>(beta: &Tensor, vocab: &Vocabulary, rng: &mut R) -> Result<IntrusionSet> {
    let k = beta.rows();
    if k < 2 {
        return Err(Error::InvalidConfig("intrusion items need at least 2 topics".into()));
    }
    if beta.cols() != vocab.len() {
        return Err(Error::VocabMismatch("beta columns differ from vocabulary size".into()));
    }
    let shown = top_words(beta, SHOWN_TERMS);
    let own = top_words(beta, OWN_RANK_CUTOFF);
    let mut out = IntrusionSet::default();
    for t in 0..k {
        let exclude: BTreeSet<usize> = own[t].iter().copied().collect();
        let pool: Vec<usize> = (0..k)
            .filter(|&o| o != t)
            .flat_map(|o| shown[o].iter().copied())
            .filter(|w| !exclude.contains(w))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if pool.is_empty() {
            log::warn!("topic {t}: no intruder candidate");
            out.skipped.push(Error::CannotFindIntruder(t));
            continue;
        }
        let mut draws: Vec<usize> = pool.choose_multiple(rng, ITEMS_PER_TOPIC.min(pool.len())).copied().collect();
        while draws.len() < ITEMS_PER_TOPIC {
            draws.push(*pool.choose(rng).expect("non-empty"));
        }
        let top: Vec<String> = shown[t].iter().map(|&w| vocab.term(w).to_string()).collect();
        for (j, w) in draws.into_iter().enumerate() {
            let intruder = vocab.term(w).to_string();
            let mut presented = top.clone();
            presented.push(intruder.clone());
            presented.shuffle(rng);
            let answer_index = presented.iter().position(|s| *s == intruder).expect("present");
            out.items.push(IntrusionItem {
                item_id: format!("t{t}-{j}"),
                topic: t,
                top_terms: top.clone(),
                intruder,
                presented,
                answer_index,
            });
        }
    }
    Ok(out)
}

/// Writes the rater-facing items and the separate answer keys as JSON Lines.
pub fn write_items<W1: Write, W2: Write>(items: &[IntrusionItem], mut item_w: W1, mut key_w: W2) -> Result<()> {
    for it in items {
        let view = ItemView {
            item_id: &it.item_id,
            topic: it.topic,
            terms: &it.presented,
        };
        serde_json::to_writer(&mut item_w, &view)?;
        writeln!(item_w)?;
        let key = AnswerKey {
            item_id: it.item_id.clone(),
            answer_index: it.answer_index,
            intruder: it.intruder.clone(),
        };
        serde_json::to_writer(&mut key_w, &key)?;
        writeln!(key_w)?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedInput {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_keys<R: BufRead>(r: R) -> Result<Vec<AnswerKey>> {
    read_jsonl(r)
}

pub fn read_responses<R: BufRead>(r: R) -> Result<Vec<Response>> {
    read_jsonl(r)
}

/// Fraction of responses that picked the intruder.
pub fn score_intrusion(keys: &[AnswerKey], responses: &[Response]) -> Result<f64> {
    let answers: HashMap<&str, usize> = keys.iter().map(|k| (k.item_id.as_str(), k.answer_index)).collect();
    if responses.is_empty() {
        return Err(Error::InvalidConfig("no responses to score".into()));
    }
    let mut correct = 0usize;
    for r in responses {
        let a = answers
            .get(r.item_id.as_str())
            .ok_or_else(|| Error::UnknownItemId(r.item_id.clone()))?;
        if *a == r.selected_index {
            correct += 1;
        }
    }
    Ok(correct as f64 / responses.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Tensor, Vocabulary) {
        let v = 120;
        let terms = (0..v).map(|i| format!("w{i:03}")).collect();
        let vocab = Vocabulary::from_terms(terms).unwrap();
        let mut beta = Tensor::zeros(&[2, v]);
        for w in 0..v {
            beta.set(0, w, if w < 60 { 2.0 - w as f64 / 100.0 } else { 0.001 });
            beta.set(1, w, if w >= 60 { 2.0 - (w - 60) as f64 / 100.0 } else { 0.001 });
        }
        (beta, vocab)
    }

    #[test]
    fn disjoint_topics_yield_valid_items() {
        let (beta, vocab) = setup();
        let set = make_intrusion_items(&beta, &vocab, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(set.skipped.is_empty());
        assert_eq!(set.items.len(), 2 * ITEMS_PER_TOPIC);
        for it in &set.items {
            assert!(!it.top_terms.contains(&it.intruder));
            assert_eq!(it.presented[it.answer_index], it.intruder);
        }
    }

    #[test]
    fn identical_topics_are_skipped() {
        let (mut beta, vocab) = setup();
        let row0 = beta.row(0).to_vec();
        beta.row_mut(1).copy_from_slice(&row0);
        let set = make_intrusion_items(&beta, &vocab, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(set.items.is_empty());
        assert!(matches!(set.skipped[0], Error::CannotFindIntruder(0)));
    }

    #[test]
    fn scoring_anchors() {
        let keys = vec![
            AnswerKey {
                item_id: "a".into(),
                answer_index: 2,
                intruder: "x".into(),
            },
            AnswerKey {
                item_id: "b".into(),
                answer_index: 0,
                intruder: "y".into(),
            },
        ];
        let resp = |id: &str, s: usize| Response {
            item_id: id.into(),
            selected_index: s,
            rater_id: None,
        };
        assert_eq!(score_intrusion(&keys, &[resp("a", 2), resp("b", 0)]).unwrap(), 1.0);
        assert_eq!(score_intrusion(&keys, &[resp("a", 1), resp("b", 3)]).unwrap(), 0.0);
        assert!(matches!(
            score_intrusion(&keys, &[resp("c", 0)]),
            Err(Error::UnknownItemId(_))
        ));
    }

    #[test]
    fn items_and_keys_roundtrip() {
        let (beta, vocab) = setup();
        let set = make_intrusion_items(&beta, &vocab, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_items(&set.items, &mut a, &mut b).unwrap();
        let keys = read_keys(b.as_slice()).unwrap();
        assert_eq!(keys.len(), set.items.len());
        assert!(!String::from_utf8(a).unwrap().contains("answer"));
    }
}
