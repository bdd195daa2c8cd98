use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use keyetm::corpus::{self, build_vocabulary, to_bow, to_token_streams, Preprocessor, Vocabulary, VocabularySidecar};
use keyetm::diff::Tensor;
use keyetm::embeddings::{load_embeddings, train_skipgram, EmbeddingMatrix};
use keyetm::eval::intrusion::{read_keys, read_responses, write_items};
use keyetm::eval::{
    classification_eval, make_intrusion_items, score_intrusion, suggest_mapping, topic_coherence, topic_diversity,
    topic_quality, ClassificationReport, CooccurrenceStats, MetricsReport,
};
use keyetm::model::forward::Objective;
use keyetm::model::train::rng_stream;
use keyetm::model::{top_words, train, Checkpoint, EpochRecord, TrainConfig, TrainInputs, TrainedModel};
use keyetm::prior::{build_prior, guided_set, SeedSpec};
use keyetm::synth::{self, SynthConfig};
use keyetm::Error;
use serde::Serialize;

use crate::config::{Paths, RunConfig};
use crate::exit::input_error;
use crate::io::*;
use crate::manifest::{now, write_atomic, DirLock, Manifest};

const INTRUSION_STREAM: u64 = 4;

/// An output directory held for one stage.
struct Stage {
    dir: PathBuf,
    manifest: Manifest,
    started: u64,
    _lock: DirLock,
}

impl Stage {
    fn open(cfg: &RunConfig, needs: &[&str]) -> Result<Self> {
        cfg.ensure_output_dir()?;
        let dir = cfg.paths.output_dir.clone();
        let lock = DirLock::acquire(&dir)?;
        let manifest = Manifest::load(&dir)?;
        manifest.verify(&dir, needs)?;
        Ok(Self {
            dir,
            manifest,
            started: now(),
            _lock: lock,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn finish<C: Serialize>(
        mut self,
        stage: &str,
        config: &C,
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[&str],
    ) -> Result<()> {
        let outputs: Vec<PathBuf> = outputs.iter().map(|o| self.path(o)).collect();
        let config = serde_json::to_value(config)?;
        self.manifest
            .record(&self.dir, stage, config, seed, inputs, &outputs, self.started)?;
        self.manifest.save(&self.dir)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn read_seeds(path: &Path) -> Result<SeedSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SeedSpec::from_json(&text).with_context(|| format!("seeds file {}", path.display()))
}

fn read_trained_embeddings(dir: &Path, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    let (emb, report) = load_embeddings(open(&dir.join(EMBEDDINGS))?, vocab, 0)?;
    if !report.missing.is_empty() {
        return Err(Error::VocabMismatch(format!(
            "{EMBEDDINGS} lacks {} vocabulary terms; rerun 'embed'",
            report.missing.len()
        ))
        .into());
    }
    Ok(emb)
}

fn read_model(path: &Path, vocab: &Vocabulary) -> Result<Checkpoint> {
    let ck = Checkpoint::read(open(path)?).with_context(|| format!("loading {}", path.display()))?;
    if ck.model.vocab_hash != vocab.hash() {
        return Err(Error::VocabMismatch(format!(
            "{} was trained on a different vocabulary",
            path.display()
        ))
        .into());
    }
    Ok(ck)
}

fn topic_names(ck: &Checkpoint, k: usize) -> Vec<String> {
    match &ck.seeds {
        Some(s) if s.num_topics() == k => s.topics.iter().map(|t| t.name.clone()).collect(),
        _ => (0..k).map(|i| format!("topic{i}")).collect(),
    }
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let stage = Stage::open(cfg, &[])?;
    let docs = corpus::read_jsonl(open(&cfg.paths.corpus)?)
        .with_context(|| format!("corpus {}", cfg.paths.corpus.display()))?;
    let pre = Preprocessor::new(cfg.preprocess.clone())?;
    let tokenized = pre.tokenize_corpus(&docs, cfg.train.exec_mode);
    let vocab = build_vocabulary(&tokenized, &cfg.preprocess)?;
    let bow = to_bow(&tokenized, &vocab);
    let streams = to_token_streams(&tokenized, &vocab);

    write_atomic(&stage.path(VOCAB), |w| Ok(vocab.write_terms(w)?))?;
    write_json(&stage.path(VOCAB_META), &vocab.sidecar(&cfg.preprocess))?;
    write_atomic(&stage.path(BOW), |w| write_bow(&bow, w))?;
    write_atomic(&stage.path(TOKENS), |w| write_streams(&bow.ids, &streams, w))?;
    for id in &bow.dropped {
        log::warn!("document '{id}' has no in-vocabulary token; dropped");
    }
    println!(
        "documents: {} kept, {} dropped; vocabulary: {} terms ({})",
        bow.num_docs(),
        bow.dropped.len(),
        vocab.len(),
        &vocab.hash()[..12]
    );
    stage.finish(
        "preprocess",
        &cfg.preprocess,
        None,
        &[cfg.paths.corpus.clone()],
        &[VOCAB, VOCAB_META, BOW, TOKENS],
    )
}

pub fn embed(cfg: &RunConfig) -> Result<()> {
    let stage = Stage::open(cfg, &[VOCAB, VOCAB_META, TOKENS])?;
    let vocab = read_vocab(&stage.dir)?;
    let mut inputs = vec![stage.path(VOCAB)];
    let (emb, report) = match &cfg.paths.embeddings {
        Some(p) => {
            let (emb, cov) = load_embeddings(open(p)?, &vocab, cfg.skipgram.rng_seed)
                .with_context(|| format!("embeddings {}", p.display()))?;
            println!("pretrained coverage: {}/{} terms", cov.covered, vocab.len());
            inputs.push(p.clone());
            (emb, serde_json::to_value(cov)?)
        }
        None => {
            let streams = read_streams(open(&stage.path(TOKENS))?)?;
            let (emb, rep) = train_skipgram(&streams, &vocab, &cfg.skipgram)?;
            if let Some(last) = rep.epoch_losses.last() {
                println!("skip-gram: {} epochs, final loss {last:.4}", rep.epoch_losses.len());
            }
            inputs.push(stage.path(TOKENS));
            (emb, serde_json::to_value(rep)?)
        }
    };
    write_atomic(&stage.path(EMBEDDINGS), |w| Ok(emb.save(&vocab, w)?))?;
    write_json(&stage.path(EMBED_REPORT), &report)?;
    stage.finish(
        "embed",
        &cfg.skipgram,
        Some(cfg.skipgram.rng_seed),
        &inputs,
        &[EMBEDDINGS, EMBED_REPORT],
    )
}

/// Inputs shared by `train` and `sweep`.
struct TrainData {
    vocab: Vocabulary,
    bow: corpus::BagOfWordsMatrix,
    emb: EmbeddingMatrix,
    seeds: Option<SeedSpec>,
}

fn load_train_data(cfg: &RunConfig, dir: &Path, need_seeds: bool) -> Result<TrainData> {
    let vocab = read_vocab(dir)?;
    let bow = read_bow(open(&dir.join(BOW))?, vocab.len())?;
    let emb = read_trained_embeddings(dir, &vocab)?;
    let seeds = match (&cfg.paths.seeds, need_seeds) {
        (Some(p), _) => Some(read_seeds(p)?),
        (None, true) => return Err(input_error("guided training needs paths.seeds".into())),
        (None, false) => None,
    };
    Ok(TrainData { vocab, bow, emb, seeds })
}

/// The configuration a run actually uses. Zero weights on both
/// regularizers, or `unguided`, select the plain objective.
fn effective_config(cfg: &RunConfig, seeds: Option<&SeedSpec>, unguided: bool) -> Result<(TrainConfig, bool)> {
    let mut tc = cfg.train.clone();
    if let Some(s) = seeds {
        if tc.num_topics == 0 {
            tc.num_topics = s.num_topics();
        } else if tc.num_topics != s.num_topics() {
            return Err(input_error(format!(
                "train.num_topics = {} but the seeds file has {} topics",
                tc.num_topics,
                s.num_topics()
            )));
        }
    }
    let guided = !unguided && (tc.lambda1 != 0.0 || tc.lambda2 != 0.0);
    if !guided {
        tc.lambda1 = 0.0;
        tc.lambda2 = 0.0;
    }
    tc.validate()?;
    Ok((tc, guided))
}

fn fit(
    data: &TrainData,
    tc: &TrainConfig,
    guided: bool,
    prior_out: Option<&Path>,
    sink: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainedModel> {
    let inputs = |objective| TrainInputs {
        bow: &data.bow,
        vocab: &data.vocab,
        embeddings: &data.emb,
        objective,
    };
    if !guided {
        return Ok(train(&inputs(Objective::Etm), tc, sink)?);
    }
    let spec = data.seeds.as_ref().expect("guided runs load seeds");
    let prior = build_prior(spec, &data.vocab, &data.emb, tc.thr, tc.exec_mode)?;
    let guided_words = guided_set(&prior)?;
    log::info!(
        "prior: {} cells over {} guided words at thr {}",
        prior.sources().len(),
        guided_words.len(),
        tc.thr
    );
    if let Some(p) = prior_out {
        write_atomic(p, |w| Ok(prior.write_tsv(&data.vocab, spec, w)?))?;
    }
    let objective = Objective::KeyEtm {
        prior: &prior,
        guided: &guided_words,
    };
    Ok(train(&inputs(objective), tc, sink)?)
}

pub fn train_cmd(cfg: &RunConfig, unguided: bool) -> Result<()> {
    let stage = Stage::open(cfg, &[VOCAB, VOCAB_META, BOW, EMBEDDINGS])?;
    let data = load_train_data(cfg, &stage.dir, !unguided)?;
    let (tc, guided) = effective_config(cfg, data.seeds.as_ref(), unguided)?;

    let mut log_lines = Vec::new();
    let mut sink = |r: &EpochRecord| {
        log::info!(
            "epoch {:>4}  total {:.4}  neg_elbo {:.4}  l_mu {:.4}  l_alpha {:.4}",
            r.epoch,
            r.total,
            r.neg_elbo,
            r.l_mu,
            r.l_alpha
        );
        log_lines.push(*r);
    };
    let prior_path = stage.path(PRIOR);
    let result = fit(&data, &tc, guided, Some(&prior_path), &mut sink);
    write_atomic(&stage.path(TRAIN_LOG), |w| {
        for r in &log_lines {
            serde_json::to_writer(&mut *w, r)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    let model = match result {
        Ok(m) => m,
        Err(e) => {
            if let Some(Error::NonFiniteLoss { diagnostic, .. }) = e.downcast_ref::<Error>() {
                let p = stage.path(DIAGNOSTIC);
                std::fs::write(&p, diagnostic)?;
                eprintln!("diagnostic written to {}", p.display());
            }
            return Err(e);
        }
    };

    let ck = Checkpoint {
        model,
        seeds: data.seeds.clone(),
    };
    write_atomic(&stage.path(MODEL), |w| Ok(ck.write(w)?))?;
    let theta = ck.model.infer(&data.bow)?;
    let names = topic_names(&ck, tc.num_topics);
    write_atomic(&stage.path(THETA), |w| write_theta(&data.bow.ids, &names, &theta, w))?;
    let last = ck.model.history.last().map(|r| r.total).unwrap_or(f64::NAN);
    println!(
        "{} objective, {} epochs{}, final loss {last:.4}",
        if guided { "guided" } else { "unguided" },
        ck.model.history.len(),
        if ck.model.stopped_early { " (early stop)" } else { "" }
    );

    let mut inputs = vec![stage.path(VOCAB), stage.path(BOW), stage.path(EMBEDDINGS)];
    inputs.extend(cfg.paths.seeds.clone());
    let mut outputs = vec![MODEL, TRAIN_LOG, THETA];
    if guided {
        outputs.push(PRIOR);
    }
    stage.finish("train", &tc, Some(tc.rng_seed), &inputs, &outputs)
}

#[derive(Serialize)]
struct TopicView {
    topic: usize,
    name: String,
    words: Vec<String>,
    weights: Vec<f64>,
}

pub fn topics(cfg: &RunConfig, model: Option<&Path>, top: usize, json: bool) -> Result<()> {
    let dir = &cfg.paths.output_dir;
    Manifest::load(dir)?.verify(dir, &[VOCAB, MODEL])?;
    let vocab = read_vocab(dir)?;
    let ck = read_model(model.unwrap_or(&dir.join(MODEL)), &vocab)?;
    let beta = ck.model.topics()?.beta;
    let names = topic_names(&ck, beta.rows());
    let views: Vec<TopicView> = top_words(&beta, top)
        .into_iter()
        .enumerate()
        .map(|(k, ws)| TopicView {
            topic: k,
            name: names[k].clone(),
            weights: ws.iter().map(|&w| beta.get(k, w)).collect(),
            words: ws.iter().map(|&w| vocab.term(w).to_string()).collect(),
        })
        .collect();
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &views)?;
        writeln!(out)?;
    } else {
        let width = names.iter().map(String::len).max().unwrap_or(0);
        for v in &views {
            writeln!(out, "{:>2}  {:<width$}  {}", v.topic, v.name, v.words.join(" "))?;
        }
    }
    Ok(())
}

fn metrics(beta: &Tensor, bow: &corpus::BagOfWordsMatrix, cfg: &RunConfig, mode: keyetm::ExecMode) -> Result<MetricsReport> {
    let coh = top_words(beta, cfg.eval.coherence_top);
    let div = top_words(beta, cfg.eval.diversity_top);
    let mut terms: Vec<usize> = coh.iter().flatten().copied().collect();
    terms.sort_unstable();
    terms.dedup();
    let stats = CooccurrenceStats::for_terms(bow, &terms, mode);
    let (coherence, per_topic) = topic_coherence(&coh, &stats)?;
    let diversity = topic_diversity(&div);
    Ok(MetricsReport {
        coherence,
        diversity,
        quality: topic_quality(coherence, diversity),
        per_topic,
    })
}

#[derive(Serialize)]
struct ClassificationOutput {
    mapping: Vec<Option<String>>,
    mapping_source: &'static str,
    #[serde(flatten)]
    report: ClassificationReport,
}

fn classify(theta: &Tensor, bow: &corpus::BagOfWordsMatrix, cfg: &RunConfig) -> Result<Option<ClassificationOutput>> {
    if bow.labels.iter().all(Option::is_none) {
        return Ok(None);
    }
    let (mapping, mapping_source) = if cfg.eval.topic_labels.is_empty() {
        (suggest_mapping(theta, &bow.labels)?, "suggested")
    } else {
        (cfg.eval.topic_labels.clone(), "config")
    };
    let report = classification_eval(theta, &bow.labels, &mapping)?;
    Ok(Some(ClassificationOutput {
        mapping,
        mapping_source,
        report,
    }))
}

pub fn eval(cfg: &RunConfig, model: Option<&Path>) -> Result<()> {
    let stage = Stage::open(cfg, &[VOCAB, VOCAB_META, BOW, MODEL])?;
    let vocab = read_vocab(&stage.dir)?;
    let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| stage.path(MODEL));
    let ck = read_model(&model_path, &vocab)?;
    let bow = read_bow(open(&stage.path(BOW))?, vocab.len())?;
    let mode = ck.model.config.exec_mode;
    let beta = ck.model.topics()?.beta;
    let report = metrics(&beta, &bow, cfg, mode)?;
    println!(
        "coherence {:.4}  diversity {:.4}  quality {:.4}",
        report.coherence, report.diversity, report.quality
    );
    write_json(&stage.path(METRICS), &report)?;
    let mut outputs = vec![METRICS];
    let theta = ck.model.infer(&bow)?;
    match classify(&theta, &bow, cfg)? {
        Some(c) => {
            println!(
                "f1 micro {:.4}  f1 macro {:.4}  ({} documents, mapping {})",
                c.report.f1_micro, c.report.f1_macro, c.report.evaluated, c.mapping_source
            );
            write_json(&stage.path(CLASSIFICATION), &c)?;
            outputs.push(CLASSIFICATION);
        }
        None => log::info!("corpus has no labels; classification skipped"),
    }
    let inputs = [stage.path(VOCAB), stage.path(BOW), model_path];
    stage.finish("eval", &cfg.eval, None, &inputs, &outputs)
}

pub fn infer(cfg: &RunConfig, model: Option<&Path>, input: &str, output: &str) -> Result<()> {
    let dir = &cfg.paths.output_dir;
    Manifest::load(dir)?.verify(dir, &[VOCAB, VOCAB_META, MODEL])?;
    let vocab = read_vocab(dir)?;
    let meta: VocabularySidecar = serde_json::from_reader(open(&dir.join(VOCAB_META))?)?;
    let ck = read_model(model.unwrap_or(&dir.join(MODEL)), &vocab)?;

    let reader: Box<dyn BufRead> = if input == "-" {
        Box::new(std::io::stdin().lock())
    } else {
        Box::new(open(Path::new(input))?)
    };
    let docs = corpus::read_jsonl(reader).with_context(|| format!("documents from {input}"))?;
    let pre = Preprocessor::new(meta.config)?;
    let tokenized = pre.tokenize_corpus(&docs, ck.model.config.exec_mode);
    let bow = to_bow(&tokenized, &vocab);
    if let Some(id) = bow.dropped.first() {
        return Err(anyhow::Error::from(Error::ZeroLengthDocument).context(format!("document '{id}'")));
    }
    let theta = ck.model.infer(&bow)?;
    let names = topic_names(&ck, theta.cols());
    if output == "-" {
        write_theta(&bow.ids, &names, &theta, std::io::stdout().lock())
    } else {
        write_atomic(Path::new(output), |w| write_theta(&bow.ids, &names, &theta, w))
    }
}

pub fn intrusion(cfg: &RunConfig, score: Option<&Path>) -> Result<()> {
    if let Some(responses) = score {
        let dir = &cfg.paths.output_dir;
        let keys = read_keys(open(&dir.join(KEYS))?)?;
        let resp = read_responses(open(responses)?).with_context(|| format!("responses {}", responses.display()))?;
        let s = score_intrusion(&keys, &resp)?;
        println!("intrusion accuracy {s:.4} over {} responses", resp.len());
        return Ok(());
    }
    let stage = Stage::open(cfg, &[VOCAB, MODEL])?;
    let vocab = read_vocab(&stage.dir)?;
    let ck = read_model(&stage.path(MODEL), &vocab)?;
    let beta = ck.model.topics()?.beta;
    let seed = cfg.train.rng_seed;
    let set = make_intrusion_items(&beta, &vocab, &mut rng_stream(seed, INTRUSION_STREAM))?;
    for e in &set.skipped {
        eprintln!("warning: {e}");
    }
    let mut keys = Vec::new();
    write_atomic(&stage.path(ITEMS), |w| write_items(&set.items, w, &mut keys).map_err(Into::into))?;
    write_atomic(&stage.path(KEYS), |w| Ok(w.write_all(&keys)?))?;
    println!("{} items written", set.items.len());
    let inputs = [stage.path(VOCAB), stage.path(MODEL)];
    stage.finish("intrusion", &serde_json::json!({}), Some(seed), &inputs, &[ITEMS, KEYS])
}

#[derive(Serialize)]
struct SweepRow {
    lambda1: f64,
    lambda2: f64,
    coherence: f64,
    diversity: f64,
    quality: f64,
    f1_micro: Option<f64>,
    f1_macro: Option<f64>,
}

pub fn sweep(cfg: &RunConfig, l1: &[f64], l2: &[f64]) -> Result<()> {
    let stage = Stage::open(cfg, &[VOCAB, VOCAB_META, BOW, EMBEDDINGS])?;
    let data = load_train_data(cfg, &stage.dir, true)?;
    let mut rows = Vec::new();
    for &a in l1 {
        for &b in l2 {
            let mut c = cfg.clone();
            c.train.lambda1 = a;
            c.train.lambda2 = b;
            let (tc, guided) = effective_config(&c, data.seeds.as_ref(), false)?;
            let model = fit(&data, &tc, guided, None, &mut |_| {})?;
            let beta = model.topics()?.beta;
            let m = metrics(&beta, &data.bow, cfg, tc.exec_mode)?;
            let theta = model.infer(&data.bow)?;
            let cls = classify(&theta, &data.bow, cfg)?;
            println!(
                "lambda1 {a:<6} lambda2 {b:<6} quality {:.4}{}",
                m.quality,
                cls.as_ref()
                    .map(|c| format!("  f1 micro {:.4}", c.report.f1_micro))
                    .unwrap_or_default()
            );
            rows.push(SweepRow {
                lambda1: a,
                lambda2: b,
                coherence: m.coherence,
                diversity: m.diversity,
                quality: m.quality,
                f1_micro: cls.as_ref().map(|c| c.report.f1_micro),
                f1_macro: cls.as_ref().map(|c| c.report.f1_macro),
            });
        }
    }
    write_atomic(&stage.path(SWEEP), |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in &rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    })?;
    let mut inputs = vec![stage.path(VOCAB), stage.path(BOW), stage.path(EMBEDDINGS)];
    inputs.extend(cfg.paths.seeds.clone());
    stage.finish(
        "sweep",
        &serde_json::json!({ "train": cfg.train, "lambda1": l1, "lambda2": l2 }),
        Some(cfg.train.rng_seed),
        &inputs,
        &[SWEEP],
    )
}

/// Writes a planted corpus, its seed words and a ready-to-run config.
pub fn synth(out: &Path, config: &SynthConfig) -> Result<()> {
    let c = synth::generate(config)?;
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("corpus.jsonl"), |w| {
        for d in c.raw_documents() {
            serde_json::to_writer(&mut *w, &d)?;
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_json(&out.join("seeds.json"), &c.seeds)?;
    let mut run = RunConfig {
        paths: Paths {
            corpus: "corpus.jsonl".into(),
            seeds: Some("seeds.json".into()),
            embeddings: None,
            output_dir: "out".into(),
        },
        preprocess: Default::default(),
        skipgram: Default::default(),
        train: Default::default(),
        eval: Default::default(),
    };
    run.preprocess.min_df = 0.0;
    run.preprocess.max_df = 1.0;
    run.skipgram.dim = 50;
    run.train.num_topics = config.num_topics;
    run.train.hidden_size = 100;
    let text = toml::to_string_pretty(&run)?;
    write_atomic(&out.join("keyetm.toml"), |w| Ok(w.write_all(text.as_bytes())?))?;
    println!(
        "{} documents, {} terms, {} topics in {}",
        c.bow.num_docs(),
        c.vocab.len(),
        config.num_topics,
        out.display()
    );
    Ok(())
}
