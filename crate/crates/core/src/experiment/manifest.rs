//! Run manifests: what a command wrote, with content digests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Taken from `SOURCE_DATE_EPOCH` when set; omitted otherwise so that
    /// re-runs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Collects the files a command writes under one root.
#[derive(Debug)]
pub struct ArtifactSet {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactSet {
    pub fn new(root: &Path) -> Self {
        ArtifactSet {
            root: root.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.entries.push(entry(rel, contents));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Records a file that something else already wrote.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let contents = fs::read(self.root.join(rel))?;
        self.entries.push(entry(rel, &contents));
        Ok(())
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = ArtifactEntry>) {
        self.entries.extend(entries);
    }

    /// Writes `<name>.manifest.json` listing every recorded file.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<RunManifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.entries.dedup_by(|a, b| a.path == b.path);
        let manifest = RunManifest {
            tool: "refprint".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            experiment: config.name.clone(),
            config_hash: config.hash(),
            master_seed: config.master_seed,
            created: std::env::var("SOURCE_DATE_EPOCH").ok(),
            artifacts: self.entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join(format!("{command}.manifest.json")), text)?;
        Ok(manifest)
    }
}

pub fn entry(rel: &str, contents: &[u8]) -> ArtifactEntry {
    ArtifactEntry {
        path: rel.to_owned(),
        bytes: contents.len() as u64,
        sha256: hex::encode(Sha256::digest(contents)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::zoo::default_vector_config;

    #[test]
    fn entry_digest() {
        let e = entry("a.txt", b"abc");
        assert_eq!(e.bytes, 3);
        assert_eq!(
            e.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn finish_sorts_and_writes() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = ArtifactSet::new(dir.path());
        set.write("z/b.txt", b"2").unwrap();
        set.write_json("a.json", &[1, 2]).unwrap();
        std::fs::write(dir.path().join("c.bin"), b"xyz").unwrap();
        set.record("c.bin").unwrap();
        set.write("z/b.txt", b"2").unwrap();
        let m = set.finish("demo", &default_vector_config()).unwrap();
        let paths: Vec<_> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
        assert_eq!(paths, ["a.json", "c.bin", "z/b.txt"]);
        let text = std::fs::read_to_string(dir.path().join("demo.manifest.json")).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
