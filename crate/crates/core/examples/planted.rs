//! Trains on a planted-topic corpus and prints recovered topics.
//!
//! `cargo run --release --example planted -- [epochs] [lambda1] [lambda2] [--imbalanced]`

use std::time::Instant;

use keyetm::embeddings::{train_skipgram, SkipGramConfig};
use keyetm::eval::{classification_eval, evaluate_topics};
use keyetm::model::{train, Objective, TrainConfig, TrainInputs};
use keyetm::prior::{build_prior, guided_set};
use keyetm::synth::{generate, SynthConfig};
use keyetm::ExecMode;

fn main() -> keyetm::Result<()> {
    let raw: Vec<String> = std::env::args().skip(1).collect();
    let args: Vec<f64> = raw.iter().filter_map(|a| a.parse().ok()).collect();
    let imbalanced = raw.iter().any(|a| a == "--imbalanced");
    let epochs = args.first().copied().unwrap_or(150.0) as usize;
    let lambda1 = args.get(1).copied().unwrap_or(15.0);
    let lambda2 = args.get(2).copied().unwrap_or(10.0);

    let (synth, thr) = if imbalanced {
        (SynthConfig::imbalanced(0), 0.9)
    } else {
        (SynthConfig::default(), 0.5)
    };
    let corpus = generate(&synth)?;
    let t = Instant::now();
    let (emb, _) = train_skipgram(
        &corpus.streams,
        &corpus.vocab,
        &SkipGramConfig {
            dim: 50,
            rng_seed: 1,
            ..Default::default()
        },
    )?;
    println!("skip-gram: {:.1}s", t.elapsed().as_secs_f64());
    let prior = build_prior(&corpus.seeds, &corpus.vocab, &emb, thr, ExecMode::Parallel)?;
    let guided = guided_set(&prior)?;
    println!("guided set: {} words", guided.len());

    let config = TrainConfig {
        num_topics: 3,
        epochs,
        hidden_size: 100,
        lambda1,
        lambda2,
        rng_seed: 7,
        early_stop_patience: None,
        ..Default::default()
    };
    let inputs = TrainInputs {
        bow: &corpus.bow,
        vocab: &corpus.vocab,
        embeddings: &emb,
        objective: Objective::KeyEtm {
            prior: &prior,
            guided: &guided,
        },
    };
    let t = Instant::now();
    let model = train(&inputs, &config, &mut |r| {
        if r.epoch % 10 == 0 {
            println!(
                "epoch {:3} neg_elbo {:9.3} l_mu {:8.3} l_alpha {:8.4} total {:9.3}",
                r.epoch, r.neg_elbo, r.l_mu, r.l_alpha, r.total
            );
        }
    })?;
    println!("training: {:.1}s", t.elapsed().as_secs_f64());

    let topics = model.topics()?;
    for (k, top) in topics.top_words(10).iter().enumerate() {
        let words: Vec<&str> = top.iter().map(|&w| corpus.vocab.term(w)).collect();
        println!("topic {k}: seeds {:?} top {:?}", corpus.seeds.topics[k].seeds, words);
    }
    let theta = model.infer(&corpus.bow)?;
    let mapping: Vec<Option<String>> = corpus.label_names.iter().cloned().map(Some).collect();
    let report = classification_eval(&theta, &corpus.bow.labels, &mapping)?;
    let metrics = evaluate_topics(&topics.beta, &corpus.bow, ExecMode::Parallel)?;
    println!("f1_micro {:.3} f1_macro {:.3}", report.f1_micro, report.f1_macro);
    println!(
        "coherence {:.3} diversity {:.3} quality {:.3}",
        metrics.coherence, metrics.diversity, metrics.quality
    );
    Ok(())
}
