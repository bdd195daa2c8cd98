//! Shared fixtures and loop-based reference computations for the
//! integration tests. Nothing here calls into the graph engine.

#![allow(dead_code)]

use keyetm::corpus::{BagOfWordsMatrix, Vocabulary};
use keyetm::diff::Tensor;
use keyetm::model::forward::{Batch, BatchRngs, GuidedTargets, LossSettings};
use keyetm::model::train::rng_stream;
use keyetm::model::{GammaAlphaAxis, ModelDims, ModelParams};
use keyetm::prior::{guided_set, GuidedSet, PriorMatrix};
use keyetm::ExecMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sp(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `W · x + b` for `W` stored row-major as `out × in`.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|o| w.row(o).iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b.data()[o])
        .collect()
}

/// Eval-mode encoder on one normalized count vector: `(mu, logvar)`.
pub fn encoder(p: &ModelParams, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let e = &p.encoder;
    let h1: Vec<f64> = affine(&e.w1.value, &e.b1.value, x).into_iter().map(sp).collect();
    let h2: Vec<f64> = affine(&e.w2.value, &e.b2.value, &h1).into_iter().map(sp).collect();
    let mu = affine(&e.w_mu.value, &e.b_mu.value, &h2);
    let lv = affine(&e.w_logvar.value, &e.b_logvar.value, &h2)
        .into_iter()
        .map(|v| v.clamp(-20.0, 20.0))
        .collect();
    (mu, lv)
}

/// `K × V` topic-word matrix, row by row.
pub fn beta(rho: &Tensor, alpha: &Tensor) -> Vec<Vec<f64>> {
    (0..alpha.rows())
        .map(|k| {
            let logits: Vec<f64> = (0..rho.rows())
                .map(|v| rho.row(v).iter().zip(alpha.row(k)).map(|(a, b)| a * b).sum())
                .collect();
            softmax(&logits)
        })
        .collect()
}

/// Encoder-side topic distribution of word `v` (one-hot input, eval mode).
pub fn gamma_mu_row(p: &ModelParams, v: usize) -> Vec<f64> {
    let e = &p.encoder;
    let w1 = &e.w1.value;
    let h1: Vec<f64> = (0..w1.rows()).map(|h| sp(w1.get(h, v) + e.b1.value.data()[h])).collect();
    let h2: Vec<f64> = affine(&e.w2.value, &e.b2.value, &h1).into_iter().map(sp).collect();
    softmax(&affine(&e.w_mu.value, &e.b_mu.value, &h2))
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RefLoss {
    pub recon: f64,
    pub kl: f64,
    pub l_mu: f64,
    pub l_alpha: f64,
}

/// Eval-mode batch loss computed with plain loops.
pub fn reference_loss(
    p: &ModelParams,
    rho: &Tensor,
    bow: &BagOfWordsMatrix,
    docs: &[usize],
    prior: &PriorMatrix,
    guided: &GuidedSet,
    axis: GammaAlphaAxis,
) -> RefLoss {
    let b = beta(rho, &p.alpha.value);
    let k = b.len();
    let mut out = RefLoss::default();
    for &d in docs {
        let counts = bow.dense_row(d);
        let n: f64 = counts.iter().sum();
        let x: Vec<f64> = counts.iter().map(|c| c / n).collect();
        let (mu, lv) = encoder(p, &x);
        let theta = softmax(&mu);
        for (v, &c) in counts.iter().enumerate() {
            if c > 0.0 {
                let pv: f64 = (0..k).map(|t| theta[t] * b[t][v]).sum();
                out.recon += c * (pv + 1e-10).ln();
            }
        }
        out.kl += 0.5 * mu.iter().zip(&lv).map(|(m, l)| l.exp() + m * m - 1.0 - l).sum::<f64>();
        for &v in guided.indices() {
            let target = prior.gamma().row(v);
            out.l_mu += if counts[v] > 0.0 {
                sq(&gamma_mu_row(p, v), target)
            } else {
                target.iter().map(|t| t * t).sum()
            };
        }
    }
    for &v in guided.indices() {
        let ga: Vec<f64> = match axis {
            GammaAlphaAxis::Vocabulary => (0..k).map(|t| b[t][v]).collect(),
            GammaAlphaAxis::Topic => softmax(
                &(0..k)
                    .map(|t| rho.row(v).iter().zip(p.alpha.value.row(t)).map(|(a, c)| a * c).sum())
                    .collect::<Vec<f64>>(),
            ),
        };
        out.l_alpha += sq(&ga, prior.gamma().row(v));
    }
    out
}

/// A small random problem: model, frozen embeddings, corpus and prior.
pub struct Instance {
    pub params: ModelParams,
    pub rho: Tensor,
    pub bow: BagOfWordsMatrix,
    pub prior: PriorMatrix,
    pub guided: GuidedSet,
}

pub fn instance(v: usize, k: usize, l: usize, h: usize, docs: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        vocab_size: v,
        num_topics: k,
        embed_dim: l,
        hidden1: h,
        hidden2: h,
    };
    let mut params = ModelParams::init(dims, &mut rng);
    // Larger topic embeddings keep beta away from uniform.
    params
        .alpha
        .value
        .data_mut()
        .iter_mut()
        .for_each(|x| *x = rng.random_range(-1.0..1.0));
    let rho = Tensor::matrix(v, l, (0..v * l).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let rows = (0..docs)
        .map(|_| {
            let mut row: Vec<(u32, u32)> = Vec::new();
            for w in 0..v as u32 {
                if rng.random_bool(0.3) {
                    row.push((w, rng.random_range(1..5)));
                }
            }
            if row.is_empty() {
                row.push((rng.random_range(0..v as u32), 1));
            }
            row
        })
        .collect();
    let bow = BagOfWordsMatrix {
        vocab_size: v,
        rows,
        ids: (0..docs).map(|d| format!("d{d}")).collect(),
        labels: vec![None; docs],
        dropped: Vec::new(),
    };
    let mut gamma = Tensor::zeros(&[v, k]);
    for w in 0..v {
        for t in 0..k {
            if rng.random_bool(0.2) {
                gamma.set(w, t, 1.0);
            }
        }
    }
    gamma.set(0, 0, 1.0);
    let prior = PriorMatrix::from_matrix(gamma, 0.5).unwrap();
    let guided = guided_set(&prior).unwrap();
    Instance {
        params,
        rho,
        bow,
        prior,
        guided,
    }
}

pub fn settings(lambda1: f64, lambda2: f64, dropout_rate: f64, axis: GammaAlphaAxis) -> LossSettings {
    LossSettings {
        lambda1,
        lambda2,
        dropout_rate,
        axis,
        mode: ExecMode::Sequential,
    }
}

/// Total training-mode loss with both random streams restarted from
/// `seed`, so every call sees the same noise and dropout masks.
pub fn seeded_total(
    params: &ModelParams,
    inst: &Instance,
    batch: &Batch,
    targets: &GuidedTargets,
    s: &LossSettings,
    seed: u64,
) -> f64 {
    let (mut e, mut p) = (rng_stream(seed, 2), rng_stream(seed, 3));
    keyetm::model::forward::batch_loss(
        params,
        &inst.rho,
        batch,
        Some(targets),
        s,
        BatchRngs {
            encoder: &mut e,
            prior: &mut p,
        },
        true,
    )
    .unwrap()
    .total
}

/// Worst norm-wise relative error `‖g - fd‖ / max(‖g‖, ‖fd‖, tiny)` per
/// parameter tensor between analytic and central-difference gradients.
pub fn gradient_check(inst: &Instance, s: &LossSettings, batch_docs: &[usize], step: f64, seed: u64) -> Vec<(&'static str, f64)> {
    let batch = Batch::from_bow(&inst.bow, batch_docs).unwrap();
    let targets = GuidedTargets::new(&inst.prior, &inst.guided).unwrap();
    let (mut e, mut p) = (rng_stream(seed, 2), rng_stream(seed, 3));
    let (_, grads) = keyetm::model::forward::batch_loss_and_grad(
        &inst.params,
        &inst.rho,
        &batch,
        Some(&targets),
        s,
        BatchRngs {
            encoder: &mut e,
            prior: &mut p,
        },
        true,
    )
    .unwrap();
    let names = keyetm::model::PARAM_NAMES;
    let mut out = Vec::new();
    for (slot, g) in grads.iter().enumerate() {
        let mut fd = vec![0.0; g.len()];
        for (i, f) in fd.iter_mut().enumerate() {
            let mut plus = inst.params.clone();
            plus.parameters_mut()[slot].value.data_mut()[i] += step;
            let mut minus = inst.params.clone();
            minus.parameters_mut()[slot].value.data_mut()[i] -= step;
            *f = (seeded_total(&plus, inst, &batch, &targets, s, seed)
                - seeded_total(&minus, inst, &batch, &targets, s, seed))
                / (2.0 * step);
        }
        let diff: f64 = g.data().iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = g.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nf = fd.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push((names[slot], diff / na.max(nf).max(1e-300)));
    }
    out
}

/// Vocabulary of `n` synthetic terms `w000`, `w001`, ...
pub fn toy_vocab(n: usize) -> Vocabulary {
    Vocabulary::from_terms((0..n).map(|i| format!("w{i:03}")).collect()).unwrap()
}
