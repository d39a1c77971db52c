//! `manifest.json`: what each stage consumed and produced, by SHA-256.
//!
//! A stage is cached when its key (config hash, input digests, upstream
//! output digests) matches the recorded one and every recorded output is
//! still on disk with its recorded digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StageRecord {
    pub key: String,
    /// Output path relative to the output directory → digest.
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    /// Input label → digest.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Digest over the names and contents of the `.txt` files in `dir`.
pub fn sha256_corpus_dir(dir: &Path) -> Result<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect();
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update(name.as_bytes());
        hasher.update([0]);
        hasher.update(sha256_file(&dir.join(&name))?.as_bytes());
        hasher.update([b'\n']);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    /// The manifest in `out`, or an empty one when there is none yet.
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| PipelineError::Json { path, source })
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
        let path = out.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| PipelineError::io(&path, e))
    }

    /// True when `stage` was recorded under `key` and its outputs are intact.
    pub fn is_fresh(&self, stage: &str, key: &str, out: &Path) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.key == key
            && rec.outputs.iter().all(|(rel, digest)| {
                let path = out.join(rel);
                path.exists() && sha256_file(&path).is_ok_and(|d| &d == digest)
            })
    }

    /// Digests of `producer`'s outputs, checked against the files on disk.
    pub fn upstream(&self, consumer: &'static str, producer: &'static str, out: &Path) -> Result<&BTreeMap<String, String>> {
        let rec = self.stages.get(producer).ok_or_else(|| PipelineError::MissingArtifact {
            stage: consumer,
            producer,
            artifact: format!("{producer} outputs (no manifest record)"),
        })?;
        for (rel, digest) in &rec.outputs {
            let path = out.join(rel);
            if !path.exists() {
                return Err(PipelineError::MissingArtifact { stage: consumer, producer, artifact: rel.clone() });
            }
            if &sha256_file(&path)? != digest {
                return Err(PipelineError::StaleDigest { producer, artifact: rel.clone() });
            }
        }
        Ok(&rec.outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(out: &Path, rel: &str, text: &str) -> StageRecord {
        fs::write(out.join(rel), text).unwrap();
        let mut outputs = BTreeMap::new();
        outputs.insert(rel.to_string(), sha256_bytes(text.as_bytes()));
        StageRecord { key: "k1".into(), outputs, seconds: 0.0 }
    }

    #[test]
    fn freshness_follows_key_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::default();
        m.stages.insert("curve".into(), record(dir.path(), "f.csv", "a\n"));
        assert!(m.is_fresh("curve", "k1", dir.path()));
        assert!(!m.is_fresh("curve", "k2", dir.path()));
        assert!(!m.is_fresh("topics", "k1", dir.path()));
        fs::write(dir.path().join("f.csv"), "b\n").unwrap();
        assert!(!m.is_fresh("curve", "k1", dir.path()));
    }

    #[test]
    fn upstream_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::default();
        assert!(matches!(m.upstream("regress", "curve", dir.path()), Err(PipelineError::MissingArtifact { .. })));
        m.stages.insert("curve".into(), record(dir.path(), "f.csv", "a\n"));
        assert!(m.upstream("regress", "curve", dir.path()).is_ok());
        fs::write(dir.path().join("f.csv"), "tampered\n").unwrap();
        assert!(matches!(m.upstream("regress", "curve", dir.path()), Err(PipelineError::StaleDigest { .. })));
        fs::remove_file(dir.path().join("f.csv")).unwrap();
        assert!(matches!(m.upstream("regress", "curve", dir.path()), Err(PipelineError::MissingArtifact { .. })));
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest { tool_version: "0.1.0".into(), config_hash: "abc".into(), ..Default::default() };
        m.inputs.insert("yields".into(), "d".into());
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        assert_eq!(RunManifest::load(&dir.path().join("none")).unwrap(), RunManifest::default());
    }

    #[test]
    fn corpus_digest_depends_on_names_and_contents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("2001-01-01.txt"), "a").unwrap();
        let a = sha256_corpus_dir(dir.path()).unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        assert_eq!(sha256_corpus_dir(dir.path()).unwrap(), a);
        fs::rename(dir.path().join("2001-01-01.txt"), dir.path().join("2001-01-02.txt")).unwrap();
        assert_ne!(sha256_corpus_dir(dir.path()).unwrap(), a);
    }
}
