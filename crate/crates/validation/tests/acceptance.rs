//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Pass a number to run one criterion:
//! `cargo test -p keyetm-validation --test acceptance -- 3`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use keyetm::corpus::{build_vocabulary, read_jsonl, to_bow, to_token_streams, BagOfWordsMatrix, PreprocessConfig, Preprocessor};
use keyetm::diff::Tensor;
use keyetm::embeddings::{train_skipgram, EmbeddingMatrix, SkipGramConfig};
use keyetm::eval::{
    classification_eval, evaluate_topics, npmi, suggest_mapping, topic_coherence, topic_diversity, topic_quality,
    CooccurrenceStats, MetricsReport,
};
use keyetm::model::forward::Objective;
use keyetm::model::{train, Checkpoint, GammaAlphaAxis, TrainConfig, TrainInputs, TrainedModel};
use keyetm::prior::{build_prior, guided_set, SeedSpec, SeedTopic};
use keyetm::synth::{generate, SynthConfig, SyntheticCorpus};
use keyetm::ExecMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> keyetm::Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

struct Planted {
    corpus: SyntheticCorpus,
    emb: EmbeddingMatrix,
}

fn embed(corpus: &SyntheticCorpus) -> EmbeddingMatrix {
    let cfg = SkipGramConfig {
        dim: 50,
        rng_seed: 1,
        ..Default::default()
    };
    train_skipgram(&corpus.streams, &corpus.vocab, &cfg).unwrap().0
}

fn planted() -> &'static Planted {
    static P: OnceLock<Planted> = OnceLock::new();
    P.get_or_init(|| {
        let corpus = generate(&SynthConfig::default()).unwrap();
        let emb = embed(&corpus);
        Planted { corpus, emb }
    })
}

fn train_on(
    corpus: &SyntheticCorpus,
    emb: &EmbeddingMatrix,
    objective: Objective<'_>,
    config: &TrainConfig,
) -> keyetm::Result<TrainedModel> {
    let inputs = TrainInputs {
        bow: &corpus.bow,
        vocab: &corpus.vocab,
        embeddings: emb,
        objective,
    };
    train(&inputs, config, &mut |_| {})
}

fn base_config() -> TrainConfig {
    TrainConfig {
        num_topics: 3,
        hidden_size: 100,
        rng_seed: 7,
        early_stop_patience: None,
        ..Default::default()
    }
}

fn generator_mapping(corpus: &SyntheticCorpus) -> Vec<Option<String>> {
    corpus.label_names.iter().cloned().map(Some).collect()
}

fn gradient_correctness() -> keyetm::Result<Outcome> {
    let inst = common::instance(50, 3, 8, 16, 4, 1);
    let mut worst = ("", 0.0f64);
    for axis in [GammaAlphaAxis::Vocabulary, GammaAlphaAxis::Topic] {
        let s = common::settings(15.0, 10.0, 0.1, axis);
        for (name, err) in common::gradient_check(&inst, &s, &[0, 1, 2, 3], 1e-6, 5) {
            if err > worst.1 {
                worst = (name, err);
            }
        }
    }
    outcome(
        worst.1 <= 1e-5,
        format!("worst relative error {:.2e} on {} (tolerance 1e-5)", worst.1, worst.0),
    )
}

fn etm_reduction() -> keyetm::Result<Outcome> {
    let p = planted();
    let prior = build_prior(&p.corpus.seeds, &p.corpus.vocab, &p.emb, 0.5, ExecMode::Sequential)?;
    let guided = guided_set(&prior)?;
    let cfg = TrainConfig {
        epochs: 150,
        lambda1: 0.0,
        lambda2: 0.0,
        exec_mode: ExecMode::Sequential,
        ..base_config()
    };
    let etm = train_on(&p.corpus, &p.emb, Objective::Etm, &cfg)?;
    let key = train_on(
        &p.corpus,
        &p.emb,
        Objective::KeyEtm {
            prior: &prior,
            guided: &guided,
        },
        &cfg,
    )?;
    let bits = |m: &TrainedModel| -> Vec<[u64; 2]> {
        m.history.iter().map(|r| [r.neg_elbo, r.total].map(f64::to_bits)).collect()
    };
    let identical = bits(&etm) == bits(&key) && etm.params == key.params;
    let totals: Vec<f64> = etm.history.iter().map(|r| r.total).collect();
    let smooth: Vec<f64> = totals.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    let rises: Vec<(usize, f64)> = smooth
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(i, w)| (i + 10, (w[1] - w[0]) / w[0]))
        .collect();
    let worst = rises.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        identical && rises.is_empty() && etm.history.len() == 150,
        format!(
            "histories bitwise identical: {identical}; smoothed loss {:.3} -> {:.3} with {} increases (largest {worst:.1e} relative, first at epoch {:?})",
            smooth[0],
            smooth[smooth.len() - 1],
            rises.len(),
            rises.first().map(|r| r.0)
        ),
    )
}

fn planted_recovery() -> keyetm::Result<Outcome> {
    let p = planted();
    let c = &p.corpus;
    let prior = build_prior(&c.seeds, &c.vocab, &p.emb, 0.5, ExecMode::Parallel)?;
    let guided = guided_set(&prior)?;
    let cfg = TrainConfig {
        epochs: 60,
        ..base_config()
    };
    let model = train_on(
        c,
        &p.emb,
        Objective::KeyEtm {
            prior: &prior,
            guided: &guided,
        },
        &cfg,
    )?;
    let theta = model.infer(&c.bow)?;
    let mapping = suggest_mapping(&theta, &c.bow.labels)?;
    let top = model.topics()?.top_words(10);
    let mut hits = Vec::new();
    for (k, label) in mapping.iter().enumerate() {
        let Some(label) = label else { continue };
        let g = c.label_names.iter().position(|n| n == label).unwrap();
        let words: HashSet<&str> = top[k].iter().map(|&w| c.vocab.term(w)).collect();
        hits.push(c.seeds.topics[g].seeds.iter().filter(|s| words.contains(s.as_str())).count());
    }
    let report = classification_eval(&theta, &c.bow.labels, &mapping)?;
    outcome(
        hits.len() == 3 && hits.iter().all(|&h| h >= 2) && report.f1_micro >= 0.8,
        format!("seeds in matched top-10 {hits:?} (need >= 2 each); micro-F1 {:.3} (need >= 0.8)", report.f1_micro),
    )
}

/// Twenty documents over twelve word ids, three of them labelled topics.
fn hand_corpus() -> (Vec<BTreeSet<usize>>, Vec<&'static str>) {
    let docs: [&[usize]; 20] = [
        &[0, 1, 2, 3],
        &[0, 1, 2],
        &[0, 1, 4],
        &[0, 2, 3, 10],
        &[1, 2, 3, 11],
        &[0, 1, 2, 3, 4],
        &[4, 5, 6, 7],
        &[4, 5, 6],
        &[5, 6, 7, 10],
        &[4, 6, 7],
        &[5, 7, 0],
        &[4, 5, 6, 7, 11],
        &[8, 9, 10, 11],
        &[8, 9, 10],
        &[8, 10, 11, 3],
        &[9, 10, 11],
        &[8, 9, 11, 7],
        &[8, 9, 10, 11],
        &[2, 6, 9],
        &[1, 5, 8, 10],
    ];
    let labels = [
        "a", "a", "a", "a", "a", "a", "b", "b", "b", "b", "b", "b", "c", "c", "c", "c", "c", "c", "a", "b",
    ];
    (docs.iter().map(|d| d.iter().copied().collect()).collect(), labels.to_vec())
}

fn brute_npmi(docs: &[BTreeSet<usize>], i: usize, j: usize) -> f64 {
    let n = docs.len() as f64;
    let pi = docs.iter().filter(|d| d.contains(&i)).count() as f64 / n;
    let pj = docs.iter().filter(|d| d.contains(&j)).count() as f64 / n;
    let both = docs.iter().filter(|d| d.contains(&i) && d.contains(&j)).count() as f64;
    let pij = if both == 0.0 { 1e-12 } else { both / n };
    if pij == 1.0 {
        return 1.0;
    }
    (pij / (pi * pj)).ln() / -pij.ln()
}

fn brute_scores(pred: &[&str], gold: &[&str]) -> (f64, f64, f64, f64) {
    let classes: BTreeSet<&str> = pred.iter().chain(gold).copied().collect();
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    for c in &classes {
        let tp = pred.iter().zip(gold).filter(|(p, g)| *p == c && *g == c).count() as f64;
        let fp = pred.iter().zip(gold).filter(|(p, g)| *p == c && *g != c).count() as f64;
        let fnn = pred.iter().zip(gold).filter(|(p, g)| *p != c && *g == c).count() as f64;
        let prec = ratio(tp, tp + fp);
        let rec = ratio(tp, tp + fnn);
        ps += prec;
        rs += rec;
        fs += ratio(2.0 * prec * rec, prec + rec);
        tp_all += tp;
        fp_all += fp;
        fn_all += fnn;
    }
    let n = classes.len() as f64;
    let mp = ratio(tp_all, tp_all + fp_all);
    let mr = ratio(tp_all, tp_all + fn_all);
    (ps / n, rs / n, fs / n, ratio(2.0 * mp * mr, mp + mr))
}

fn metric_oracles() -> keyetm::Result<Outcome> {
    let (docs, labels) = hand_corpus();
    let v = 12;
    let bow = BagOfWordsMatrix {
        vocab_size: v,
        rows: docs.iter().map(|d| d.iter().map(|&w| (w as u32, 1)).collect()).collect(),
        ids: (0..docs.len()).map(|d| format!("h{d}")).collect(),
        labels: labels.iter().map(|l| Some(l.to_string())).collect(),
        dropped: Vec::new(),
    };
    let stats = CooccurrenceStats::from_bow(&bow, ExecMode::Parallel);
    let mut worst = 0.0f64;
    let mut note = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for i in 0..v {
        for j in 0..v {
            note(npmi(i, j, &stats)?, brute_npmi(&docs, i, j));
        }
    }

    let lists = vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9, 10, 11], vec![0, 4, 8, 10]];
    let (coh, per_topic) = topic_coherence(&lists, &stats)?;
    let mut brute_per = Vec::new();
    for t in &lists {
        let mut s = Vec::new();
        for a in 0..t.len() {
            for b in a + 1..t.len() {
                s.push(brute_npmi(&docs, t[a], t[b]));
            }
        }
        brute_per.push(s.iter().sum::<f64>() / s.len() as f64);
    }
    let brute_coh = brute_per.iter().sum::<f64>() / brute_per.len() as f64;
    note(coh, brute_coh);
    for (a, b) in per_topic.iter().zip(&brute_per) {
        note(*a, *b);
    }
    let flat: Vec<usize> = lists.iter().flatten().copied().collect();
    let brute_div = flat.iter().collect::<BTreeSet<_>>().len() as f64 / flat.len() as f64;
    let div = topic_diversity(&lists);
    note(div, brute_div);
    note(topic_quality(coh, div), brute_coh * brute_div);

    // Topic-word weights whose top-4 lists are `lists`, scored end to end.
    let mut beta = Tensor::zeros(&[lists.len(), v]);
    for (k, t) in lists.iter().enumerate() {
        for w in 0..v {
            beta.set(k, w, 0.01);
        }
        for (r, &w) in t.iter().enumerate() {
            beta.set(k, w, 0.5 - 0.1 * r as f64);
        }
    }
    let MetricsReport { coherence, .. } = evaluate_topics(&beta, &bow, ExecMode::Sequential)?;
    let mut brute_full = 0.0;
    for k in 0..lists.len() {
        let mut order: Vec<usize> = (0..v).collect();
        order.sort_by(|&a, &b| beta.get(k, b).total_cmp(&beta.get(k, a)).then(a.cmp(&b)));
        let top = &order[..10];
        let mut s = 0.0;
        for a in 0..10 {
            for b in a + 1..10 {
                s += brute_npmi(&docs, top[a], top[b]);
            }
        }
        brute_full += s / 45.0;
    }
    note(coherence, brute_full / lists.len() as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let theta_rows: Vec<Vec<f64>> = (0..docs.len())
        .map(|_| {
            let r: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect()
        })
        .collect();
    let theta = Tensor::from_rows(&theta_rows)?;
    let mapping = vec![Some("a".to_string()), Some("b".into()), Some("c".into()), None];
    let report = classification_eval(&theta, &bow.labels, &mapping)?;
    let pred: Vec<&str> = theta_rows
        .iter()
        .map(|r| {
            let k = (0..4).fold(0, |b, k| if r[k] > r[b] { k } else { b });
            mapping[k].as_deref().unwrap_or("<unmapped>")
        })
        .collect();
    let (p, r, f_macro, f_micro) = brute_scores(&pred, &labels);
    note(report.precision, p);
    note(report.recall, r);
    note(report.f1_macro, f_macro);
    note(report.f1_micro, f_micro);

    let twin = BagOfWordsMatrix {
        vocab_size: 3,
        rows: vec![vec![(0, 1), (1, 2)], vec![(2, 1)], vec![(0, 3), (1, 1), (2, 1)], vec![(2, 2)]],
        ids: (0..4).map(|d| d.to_string()).collect(),
        labels: vec![None; 4],
        dropped: Vec::new(),
    };
    let twin_npmi = npmi(0, 1, &CooccurrenceStats::from_bow(&twin, ExecMode::Sequential))?;
    let same: Vec<Vec<usize>> = vec![(0..25).collect(); 5];
    let same_div = topic_diversity(&same);
    outcome(
        worst <= 1e-9 && twin_npmi == 1.0 && same_div == 0.2,
        format!("max deviation {worst:.1e} (tolerance 1e-9); perfect co-occurrence NPMI {twin_npmi}; identical lists diversity {same_div}"),
    )
}

fn lambda_tradeoff() -> keyetm::Result<Outcome> {
    let corpus = generate(&SynthConfig::imbalanced(0))?;
    let emb = embed(&corpus);
    let prior = build_prior(&corpus.seeds, &corpus.vocab, &emb, 0.9, ExecMode::Parallel)?;
    let guided = guided_set(&prior)?;
    let mapping = generator_mapping(&corpus);
    let mut rows = Vec::new();
    for lambda2 in [5.0, 10.0, 20.0] {
        let cfg = TrainConfig {
            epochs: 100,
            lambda1: 15.0,
            lambda2,
            ..base_config()
        };
        let model = train_on(
            &corpus,
            &emb,
            Objective::KeyEtm {
                prior: &prior,
                guided: &guided,
            },
            &cfg,
        )?;
        let quality = evaluate_topics(&model.topics()?.beta, &corpus.bow, ExecMode::Parallel)?.quality;
        let f1 = classification_eval(&model.infer(&corpus.bow)?, &corpus.bow.labels, &mapping)?.f1_micro;
        rows.push((lambda2, quality, f1));
    }
    let quality_ok = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let f1_ok = rows.windows(2).all(|w| w[1].2 <= w[0].2);
    let table: Vec<String> = rows
        .iter()
        .map(|(l, q, f)| format!("lambda2 {l}: quality {q:.4} F1 {f:.3}"))
        .collect();
    outcome(quality_ok && f1_ok, table.join("; "))
}

fn newsgroups_data() -> Option<PathBuf> {
    let path = std::env::var_os("KEYETM_20NG_JSONL")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/20ng_subset.jsonl"));
    path.exists().then_some(path)
}

fn newsgroups_ballpark() -> keyetm::Result<Outcome> {
    let Some(path) = newsgroups_data() else {
        return outcome(
            false,
            "20 Newsgroups subset not found; run scripts/fetch_20ng_subset.py or set KEYETM_20NG_JSONL",
        );
    };
    let raw = read_jsonl(std::io::BufReader::new(std::fs::File::open(&path)?))?;
    let pre = PreprocessConfig {
        min_df: 0.005,
        max_df: 0.7,
        ..Default::default()
    };
    let docs = Preprocessor::new(pre.clone())?.tokenize_corpus(&raw, ExecMode::Parallel);
    let vocab = build_vocabulary(&docs, &pre)?;
    let bow = to_bow(&docs, &vocab);
    let streams = to_token_streams(&docs, &vocab);
    let emb = train_skipgram(
        &streams,
        &vocab,
        &SkipGramConfig {
            dim: 100,
            rng_seed: 1,
            ..Default::default()
        },
    )?
    .0;
    let seeds = SeedSpec::from_json(include_str!("20ng_seeds.json"))?;
    let prior = build_prior(&seeds, &vocab, &emb, 0.5, ExecMode::Parallel)?;
    let guided = guided_set(&prior)?;
    let cfg = TrainConfig {
        num_topics: seeds.num_topics(),
        epochs: 100,
        hidden_size: 200,
        lambda1: 15.0,
        lambda2: 10.0,
        rng_seed: 7,
        ..Default::default()
    };
    let run = |objective| -> keyetm::Result<MetricsReport> {
        let inputs = TrainInputs {
            bow: &bow,
            vocab: &vocab,
            embeddings: &emb,
            objective,
        };
        let model = train(&inputs, &cfg, &mut |_| {})?;
        evaluate_topics(&model.topics()?.beta, &bow, ExecMode::Parallel)
    };
    let key = run(Objective::KeyEtm {
        prior: &prior,
        guided: &guided,
    })?;
    let etm = run(Objective::Etm)?;
    outcome(
        key.quality >= etm.quality && (0.10..=0.35).contains(&key.coherence),
        format!(
            "{} documents, {} terms; KeyETM quality {:.4} vs ETM {:.4}; KeyETM coherence {:.3} (need [0.10, 0.35])",
            bow.num_docs(),
            vocab.len(),
            key.quality,
            etm.quality,
            key.coherence
        ),
    )
}

fn brute_prior(rho: &[Vec<f64>], seeds: &[Vec<usize>], thr: f64) -> Vec<Vec<bool>> {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let centers: Vec<Vec<f64>> = seeds
        .iter()
        .map(|s| {
            (0..rho[0].len())
                .map(|d| s.iter().map(|&v| rho[v][d]).sum::<f64>() / s.len() as f64)
                .collect()
        })
        .collect();
    (0..rho.len())
        .map(|v| {
            (0..seeds.len())
                .map(|k| seeds[k].contains(&v) || cos(&rho[v], &centers[k]) >= thr)
                .collect()
        })
        .collect()
}

fn prior_contracts() -> keyetm::Result<Outcome> {
    let vocab = common::toy_vocab(10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let emb = EmbeddingMatrix::new(Tensor::from_rows(&rho)?, &vocab)?;
    let spec = SeedSpec {
        topics: vec![
            SeedTopic {
                name: "a".into(),
                seeds: vec!["w000".into(), "w001".into(), "absent".into()],
            },
            SeedTopic {
                name: "b".into(),
                seeds: vec!["w005".into()],
            },
        ],
    };
    let seed_ids = vec![vec![0, 1], vec![5]];
    let mut cells_ok = true;
    let mut seeds_ok = true;
    let mut sizes = Vec::new();
    let mut prev: Option<HashSet<usize>> = None;
    let mut monotone = true;
    for thr in [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 0.9, 1.0] {
        let prior = build_prior(&spec, &vocab, &emb, thr, ExecMode::Sequential)?;
        let want = brute_prior(&rho, &seed_ids, thr);
        for (v, row) in want.iter().enumerate() {
            for (k, &cell) in row.iter().enumerate() {
                cells_ok &= prior.get(v, k) == cell;
                cells_ok &= prior.gamma().get(v, k) == f64::from(u8::from(cell));
            }
        }
        for (k, ids) in seed_ids.iter().enumerate() {
            seeds_ok &= ids.iter().all(|&v| prior.gamma().get(v, k) == 1.0);
        }
        let s: HashSet<usize> = guided_set(&prior)?.indices().iter().copied().collect();
        if let Some(p) = &prev {
            monotone &= s.is_subset(p);
        }
        sizes.push(s.len());
        prev = Some(s);
    }
    outcome(
        cells_ok && seeds_ok && monotone,
        format!("cells match brute force: {cells_ok}; seeds at 1: {seeds_ok}; |S| over rising thr {sizes:?}"),
    )
}

fn checkpoint_round_trip() -> keyetm::Result<Outcome> {
    let p = planted();
    let cfg = TrainConfig {
        epochs: 5,
        hidden_size: 32,
        ..base_config()
    };
    let model = train_on(&p.corpus, &p.emb, Objective::Etm, &cfg)?;
    let dir = tempfile::tempdir()?;
    let (first, second) = (dir.path().join("a.ketm"), dir.path().join("b.ketm"));
    Checkpoint {
        model: model.clone(),
        seeds: Some(p.corpus.seeds.clone()),
    }
    .write(std::fs::File::create(&first)?)?;
    let loaded = Checkpoint::read(std::io::BufReader::new(std::fs::File::open(&first)?))?;
    loaded.write(std::fs::File::create(&second)?)?;
    let identical = std::fs::read(&first)? == std::fs::read(&second)?;
    let before = model.infer(&p.corpus.bow)?;
    let after = loaded.model.infer(&p.corpus.bow)?;
    let drift = before
        .data()
        .iter()
        .zip(after.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        identical && drift <= 1e-6,
        format!("second save bit-identical: {identical}; max theta difference {drift:.1e} (tolerance 1e-6)"),
    )
}

type Criterion = fn() -> keyetm::Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Criterion); 8] = [
        ("gradient correctness", Duration::from_secs(60), gradient_correctness),
        ("ETM reduction", Duration::from_secs(300), etm_reduction),
        ("planted-topic recovery", Duration::from_secs(600), planted_recovery),
        ("metric oracles", Duration::from_secs(10), metric_oracles),
        ("lambda trade-off direction", Duration::from_secs(1800), lambda_tradeoff),
        ("20 Newsgroups ballpark", Duration::from_secs(1800), newsgroups_ballpark),
        ("prior and guided-set contracts", Duration::from_secs(1), prior_contracts),
        ("checkpoint round-trip", Duration::from_secs(600), checkpoint_round_trip),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && took <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {n} ({name}): {detail} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
