//! Run manifest, output-directory lock and atomic artifact writes.
//!
//! `manifest.json` records, per stage, the configuration it ran with and
//! the SHA-256 of every file it read and wrote. Artifacts inside the output
//! directory are keyed by file name, external inputs by absolute path.
//! Before a stage reads an artifact it checks that the file is still what
//! its producer wrote, and that the producer's own inputs have not changed
//! since.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exit::stale_error;

pub const MANIFEST: &str = "manifest.json";
pub const LOCK: &str = ".lock";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config: serde_json::Value,
    pub rng_seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started: u64,
    pub finished: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(anyhow::anyhow!(
                "{} is locked by another run; remove {} if that run is gone",
                dir.display(),
                path.display()
            )),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Manifest key: the file name for artifacts in `dir`, else the path.
pub fn key(dir: &Path, path: &Path) -> String {
    match path.strip_prefix(dir) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => path.to_string_lossy().into_owned(),
    }
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Ok(Self {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                ..Self::default()
            });
        }
        let text = std::fs::read_to_string(&p)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.tool_version = env!("CARGO_PKG_VERSION").to_string();
        write_atomic(&dir.join(MANIFEST), |w| {
            serde_json::to_writer_pretty(&mut *w, self)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn producer(&self, name: &str) -> Option<(&str, &StageRecord)> {
        self.stages
            .iter()
            .find(|(_, r)| r.outputs.contains_key(name))
            .map(|(s, r)| (s.as_str(), r))
    }

    /// Fails with a staleness error when an artifact in `dir` changed after
    /// its producing stage wrote it, or when that stage's own artifact
    /// inputs changed since it ran.
    pub fn verify(&self, dir: &Path, artifacts: &[&str]) -> Result<()> {
        for &name in artifacts {
            let Some((stage, rec)) = self.producer(name) else {
                continue;
            };
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            if sha256_file(&path)? != rec.outputs[name] {
                return Err(stale_error(format!(
                    "{name} was modified after '{stage}' wrote it; rerun '{stage}'"
                )));
            }
            for (input, digest) in &rec.inputs {
                let p = dir.join(input);
                if Path::new(input).is_absolute() || !p.exists() {
                    continue;
                }
                if sha256_file(&p)? != *digest {
                    return Err(stale_error(format!(
                        "{name} is older than {input}; rerun '{stage}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Records a finished stage. Digests are taken now.
    pub fn record(
        &mut self,
        dir: &Path,
        stage: &str,
        config: serde_json::Value,
        rng_seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        started: u64,
    ) -> Result<()> {
        let digest_map = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths.iter().map(|p| Ok((key(dir, p), sha256_file(p)?))).collect()
        };
        let rec = StageRecord {
            config,
            rng_seed,
            inputs: digest_map(inputs)?,
            outputs: digest_map(outputs)?,
            started,
            finished: now(),
        };
        self.stages.insert(stage.to_string(), rec);
        Ok(())
    }
}
