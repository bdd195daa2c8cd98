use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::{Parameter, Tensor};
use crate::error::{Error, Result};

/// Standard deviation of the topic-embedding initialization.
pub const ALPHA_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub num_topics: usize,
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

/// Variational encoder. The mean head (`w_mu`, `b_mu`) also produces the
/// per-word topic distribution used by the encoder-side keyword regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `H1 × V`
    pub w1: Parameter,
    pub b1: Parameter,
    /// `H2 × H1`
    pub w2: Parameter,
    pub b2: Parameter,
    /// `K × H2`
    pub w_mu: Parameter,
    pub b_mu: Parameter,
    /// `K × H2`
    pub w_logvar: Parameter,
    pub b_logvar: Parameter,
}

/// Everything that is trained: topic embeddings plus the encoder.
/// Word embeddings are held separately and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `K × L`
    pub alpha: Parameter,
    pub encoder: EncoderParams,
}

pub const PARAM_NAMES: [&str; 9] = [
    "alpha", "W1", "b1", "W2", "b2", "Wmu", "bmu", "Wlogvar", "blogvar",
];

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

impl ModelParams {
    /// Fan-in scaled uniform encoder weights and `N(0, 0.02²)` topic
    /// embeddings.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let ModelDims {
            vocab_size: v,
            num_topics: k,
            embed_dim: l,
            hidden1: h1,
            hidden2: h2,
        } = dims;
        let normal = Normal::new(0.0, ALPHA_INIT_STD).expect("std");
        let alpha = Tensor::matrix(k, l, (0..k * l).map(|_| normal.sample(rng)).collect()).expect("shape");
        let encoder = EncoderParams {
            w1: Parameter::new("W1", uniform(rng, &[h1, v], v)),
            b1: Parameter::new("b1", uniform(rng, &[h1], v)),
            w2: Parameter::new("W2", uniform(rng, &[h2, h1], h1)),
            b2: Parameter::new("b2", uniform(rng, &[h2], h1)),
            w_mu: Parameter::new("Wmu", uniform(rng, &[k, h2], h2)),
            b_mu: Parameter::new("bmu", uniform(rng, &[k], h2)),
            w_logvar: Parameter::new("Wlogvar", uniform(rng, &[k, h2], h2)),
            b_logvar: Parameter::new("blogvar", uniform(rng, &[k], h2)),
        };
        Self {
            alpha: Parameter::new("alpha", alpha),
            encoder,
        }
    }

    /// Rebuilds parameters from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let [alpha, w1, b1, w2, b2, w_mu, b_mu, w_logvar, b_logvar]: [Tensor; 9] = tensors
            .try_into()
            .map_err(|_| Error::ShapeMismatch("expected 9 parameter tensors".into()))?;
        let p = Self {
            alpha: Parameter::new("alpha", alpha),
            encoder: EncoderParams {
                w1: Parameter::new("W1", w1),
                b1: Parameter::new("b1", b1),
                w2: Parameter::new("W2", w2),
                b2: Parameter::new("b2", b2),
                w_mu: Parameter::new("Wmu", w_mu),
                b_mu: Parameter::new("bmu", b_mu),
                w_logvar: Parameter::new("Wlogvar", w_logvar),
                b_logvar: Parameter::new("blogvar", b_logvar),
            },
        };
        p.dims()?;
        Ok(p)
    }

    /// Validated dimensions; the embedding dimension is taken from `alpha`.
    pub fn dims(&self) -> Result<ModelDims> {
        let e = &self.encoder;
        let (k, l) = (self.alpha.value.rows(), self.alpha.value.cols());
        let (h1, v) = (e.w1.value.rows(), e.w1.value.cols());
        let h2 = e.w2.value.rows();
        let ok = e.b1.value.len() == h1
            && e.w2.value.cols() == h1
            && e.b2.value.len() == h2
            && e.w_mu.value.rows() == k
            && e.w_mu.value.cols() == h2
            && e.b_mu.value.len() == k
            && e.w_logvar.value.rows() == k
            && e.w_logvar.value.cols() == h2
            && e.b_logvar.value.len() == k;
        if !ok {
            return Err(Error::ShapeMismatch("inconsistent model parameter shapes".into()));
        }
        Ok(ModelDims {
            vocab_size: v,
            num_topics: k,
            embed_dim: l,
            hidden1: h1,
            hidden2: h2,
        })
    }

    /// Parameters in [`PARAM_NAMES`] order.
    pub fn parameters(&self) -> [&Parameter; 9] {
        let e = &self.encoder;
        [
            &self.alpha,
            &e.w1,
            &e.b1,
            &e.w2,
            &e.b2,
            &e.w_mu,
            &e.b_mu,
            &e.w_logvar,
            &e.b_logvar,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter; 9] {
        let e = &mut self.encoder;
        [
            &mut self.alpha,
            &mut e.w1,
            &mut e.b1,
            &mut e.w2,
            &mut e.b2,
            &mut e.w_mu,
            &mut e.b_mu,
            &mut e.w_logvar,
            &mut e.b_logvar,
        ]
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn num_values(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }
}
