//! Run manifest: per-stage completion markers with artifact hashes, so
//! `--resume` can skip finished stages after verifying the files on disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const STAGES: [&str; 4] = ["gen", "train", "eval", "report"];

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    /// Stage name -> artifacts; presence marks the stage complete.
    pub stages: BTreeMap<String, Vec<Artifact>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing artifact {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config_hash: String) -> RunManifest {
        RunManifest {
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
        }
    }

    pub fn path(out_dir: &Path) -> PathBuf {
        out_dir.join("manifest.json")
    }

    pub fn load(out_dir: &Path) -> Result<Option<RunManifest>> {
        let path = Self::path(out_dir);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Ok(Some(serde_json::from_str(&text).context("parsing manifest.json")?))
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        sps_core::io::atomic_write(&Self::path(out_dir), text.as_bytes())
            .context("writing manifest.json")?;
        Ok(())
    }

    /// True when the stage is marked complete and every artifact on disk
    /// still matches its recorded hash.
    pub fn stage_verified(&self, out_dir: &Path, stage: &str) -> bool {
        match self.stages.get(stage) {
            None => false,
            Some(artifacts) => artifacts.iter().all(|a| {
                hash_file(&out_dir.join(&a.path)).map(|h| h == a.sha256).unwrap_or(false)
            }),
        }
    }

    /// Records a completed stage from the artifacts' current disk contents.
    pub fn record_stage(
        &mut self,
        out_dir: &Path,
        stage: &str,
        paths: &[PathBuf],
    ) -> Result<()> {
        let mut artifacts = Vec::with_capacity(paths.len());
        for p in paths {
            let rel = p.strip_prefix(out_dir).unwrap_or(p).to_path_buf();
            artifacts.push(Artifact { path: rel, sha256: hash_file(&out_dir.join_rel(p))? });
        }
        self.stages.insert(stage.to_string(), artifacts);
        self.save(out_dir)
    }
}

trait JoinRel {
    fn join_rel(&self, p: &Path) -> PathBuf;
}

impl JoinRel for Path {
    fn join_rel(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else if p.starts_with(self) {
            p.to_path_buf()
        } else {
            self.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_round_trip_and_verification() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        std::fs::write(out.join("a.bin"), b"hello").unwrap();
        let mut m = RunManifest::new("cfg".into());
        m.record_stage(out, "gen", &[PathBuf::from("a.bin")]).unwrap();
        assert!(m.stage_verified(out, "gen"));
        assert!(!m.stage_verified(out, "train"));
        // Reload from disk.
        let loaded = RunManifest::load(out).unwrap().unwrap();
        assert!(loaded.stage_verified(out, "gen"));
        // Tampering breaks verification.
        std::fs::write(out.join("a.bin"), b"tampered").unwrap();
        assert!(!loaded.stage_verified(out, "gen"));
    }
}
