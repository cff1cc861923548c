use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineConfig;
use crate::error::{io_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Stats,
    BuildEkg,
    TrainEkg,
    TrainG2s,
    Generate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Stats,
        Stage::BuildEkg,
        Stage::TrainEkg,
        Stage::TrainG2s,
        Stage::Generate,
        Stage::Evaluate,
    ];

    /// Subcommand name, also the stage's directory in the workspace.
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Stats => "stats",
            Stage::BuildEkg => "build-ekg",
            Stage::TrainEkg => "train-ekg",
            Stage::TrainG2s => "train-g2s",
            Stage::Generate => "generate",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Run record kept at the workspace root. Holds no timestamps so identical
/// runs produce identical manifests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<PipelineConfig>,
    pub seed: Option<u64>,
    /// Stage name to artifact path (relative to the workspace) to SHA-256.
    pub stages: BTreeMap<String, BTreeMap<String, String>>,
}

/// One run directory: a subdirectory per stage and `manifest.json` at the
/// root.
#[derive(Clone, Debug)]
pub struct Workspace {
    root: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

impl Workspace {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn artifact(&self, stage: Stage, file: &str) -> PathBuf {
        self.stage_dir(stage).join(file)
    }

    /// Path of an upstream artifact, or an error naming the stage that
    /// produces it.
    pub fn require(&self, stage: Stage, file: &str) -> Result<PathBuf> {
        let path = self.artifact(stage, file);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.name(),
                path,
            })
        }
    }

    /// Creates (or empties) a stage's directory.
    pub fn fresh_stage_dir(&self, stage: Stage) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    /// Takes the workspace lock until the guard drops.
    pub fn lock(&self) -> Result<LockGuard> {
        let path = self.root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Locked { path }),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.root.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Records the config snapshot and the hashes of `files` for `stage`.
    pub fn record(&self, stage: Stage, config: &PipelineConfig, files: &[PathBuf]) -> Result<()> {
        let mut manifest = self.manifest()?;
        manifest.config = Some(config.clone());
        manifest.seed = Some(config.seed);
        let mut hashes = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(&self.root).unwrap_or(f);
            hashes.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(f)?);
        }
        manifest.stages.insert(stage.name().to_string(), hashes);
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_err(&path))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(io_err(path))?;
    Ok(hex::encode(h.finalize()))
}

/// Removes the lock file on drop.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
