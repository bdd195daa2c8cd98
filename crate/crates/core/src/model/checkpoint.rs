//! Binary checkpoint container.
//!
//! Layout: `KETM`, format version (u16), precision tag (u8), the five
//! dimensions `V K L H1 H2` (u64 each), then every parameter tensor in
//! [`PARAM_NAMES`](super::params::PARAM_NAMES) order followed by `ρ`, all
//! row-major little-endian f64. A u64 length and a JSON metadata block
//! close the file. All integers are little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::{Precision, TrainConfig};
use super::params::{ModelDims, ModelParams};
use super::train::{EpochRecord, TrainedModel};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::prior::SeedSpec;

pub const MAGIC: &[u8; 4] = b"KETM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    vocab_hash: String,
    seeds: Option<SeedSpec>,
    config: TrainConfig,
    history: Vec<EpochRecord>,
    stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub seeds: Option<SeedSpec>,
}

fn shapes(d: ModelDims) -> [Vec<usize>; 10] {
    let ModelDims {
        vocab_size: v,
        num_topics: k,
        embed_dim: l,
        hidden1: h1,
        hidden2: h2,
    } = d;
    [
        vec![k, l],
        vec![h1, v],
        vec![h1],
        vec![h2, h1],
        vec![h2],
        vec![k, h2],
        vec![k],
        vec![k, h2],
        vec![k],
        vec![v, l],
    ]
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.model;
        let dims = m.params.dims()?;
        if m.rho.shape() != [dims.vocab_size, dims.embed_dim] {
            return Err(Error::ShapeMismatch("rho does not match the model dimensions".into()));
        }
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[m.config.precision.tag()])?;
        for x in [dims.vocab_size, dims.num_topics, dims.embed_dim, dims.hidden1, dims.hidden2] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        let tensors = m.params.parameters().map(|p| &p.value);
        for t in tensors.into_iter().chain(std::iter::once(&m.rho)) {
            for x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        let meta = Metadata {
            vocab_hash: m.vocab_hash.clone(),
            seeds: self.seeds.clone(),
            config: m.config.clone(),
            history: m.history.clone(),
            stopped_early: m.stopped_early,
        };
        let json = serde_json::to_vec(&meta)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        Self::read_parts(r).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Checkpoint("file is truncated".into())
            }
            e => e,
        })
    }

    fn read_parts<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let precision = Precision::from_tag(b1[0])
            .ok_or_else(|| Error::Checkpoint(format!("unknown precision tag {}", b1[0])))?;
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = read_u64(&mut r)? as usize;
        }
        let dims = ModelDims {
            vocab_size: dims[0],
            num_topics: dims[1],
            embed_dim: dims[2],
            hidden1: dims[3],
            hidden2: dims[4],
        };
        let mut tensors = Vec::with_capacity(10);
        for shape in shapes(dims) {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push(Tensor::new(shape, data)?);
        }
        let rho = tensors.pop().expect("ten tensors");
        let params = ModelParams::from_tensors(tensors)?;
        let len = read_u64(&mut r)? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        let meta: Metadata = serde_json::from_slice(&json)?;
        if meta.config.precision != precision {
            return Err(Error::Checkpoint("precision tag disagrees with metadata".into()));
        }
        Ok(Self {
            model: TrainedModel {
                params,
                rho,
                vocab_hash: meta.vocab_hash,
                config: meta.config,
                history: meta.history,
                stopped_early: meta.stopped_early,
            },
            seeds: meta.seeds,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
