use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use keyetm::corpus::PreprocessConfig;
use keyetm::embeddings::SkipGramConfig;
use keyetm::model::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::exit::input_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default)]
    pub seeds: Option<PathBuf>,
    /// Pretrained word2vec text file; skip-gram is trained when absent.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub coherence_top: usize,
    pub diversity_top: usize,
    /// Gold label for each topic, in topic order. Suggested from the data
    /// when empty.
    pub topic_labels: Vec<Option<String>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            coherence_top: 10,
            diversity_top: 25,
            topic_labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub skipgram: SkipGramConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalOptions,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub thr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    pub deterministic: bool,
}

impl RunConfig {
    /// Reads TOML (or JSON for a `.json` extension). Relative paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| input_error(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.paths.corpus = abs(&cfg.paths.corpus);
        cfg.paths.output_dir = abs(&cfg.paths.output_dir);
        cfg.paths.seeds = cfg.paths.seeds.as_deref().map(abs);
        cfg.paths.embeddings = cfg.paths.embeddings.as_deref().map(abs);
        cfg.apply(ov);
        Ok(cfg)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        let t = &mut self.train;
        if let Some(x) = ov.lambda1 {
            t.lambda1 = x;
        }
        if let Some(x) = ov.lambda2 {
            t.lambda2 = x;
        }
        if let Some(x) = ov.thr {
            t.thr = x;
        }
        if let Some(x) = ov.epochs {
            t.epochs = x;
        }
        if let Some(x) = ov.seed {
            t.rng_seed = x;
            self.skipgram.rng_seed = x;
        }
        if ov.deterministic {
            t.exec_mode = keyetm::ExecMode::Sequential;
            self.skipgram.deterministic = true;
        }
    }

    pub fn ensure_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.paths.output_dir)
            .with_context(|| format!("creating {}", self.paths.output_dir.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_fills_defaults_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "[paths]\ncorpus = \"c.jsonl\"\noutput_dir = \"out\"\n[train]\nnum_topics = 3\nlambda2 = 20\n",
        )
        .unwrap();
        let ov = Overrides {
            lambda1: Some(1.5),
            seed: Some(9),
            ..Default::default()
        };
        let c = RunConfig::load(&p, &ov).unwrap();
        assert_eq!(c.paths.corpus, dir.path().join("c.jsonl"));
        assert_eq!(c.train.lambda1, 1.5);
        assert_eq!(c.train.lambda2, 20.0);
        assert_eq!(c.train.rng_seed, 9);
        assert_eq!(c.skipgram.rng_seed, 9);
        assert_eq!(c.eval.coherence_top, 10);
    }
}
