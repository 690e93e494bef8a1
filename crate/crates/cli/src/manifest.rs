use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::CliResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    /// SHA-256 over `blob <len>\0<content>`, as git frames objects.
    pub sha256: String,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Digest over the input digests in order.
    pub input_hash: String,
    pub started_at: String,
    pub finished_at: String,
}

pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

pub fn digest(path: &Path) -> CliResult<FileDigest> {
    let content = std::fs::read(path)?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        bytes: content.len() as u64,
        sha256: blob_hash(&content),
    })
}

/// Digests of every file under `path` (or of `path` itself), in sorted order.
pub fn digest_tree(path: &Path) -> CliResult<Vec<FileDigest>> {
    if !path.is_dir() {
        return Ok(vec![digest(path)?]);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    let mut out = Vec::new();
    for e in entries {
        out.extend(digest_tree(&e)?);
    }
    Ok(out)
}

pub fn combined_hash(digests: &[FileDigest]) -> String {
    let mut h = Sha256::new();
    for d in digests {
        h.update(d.sha256.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `FHOI_DETERMINISTIC=1` asks for deterministic numerics. Every kernel here
/// is single-threaded with a fixed reduction order, so the flag is recorded
/// rather than acted on.
pub fn deterministic_mode() -> bool {
    std::env::var("FHOI_DETERMINISTIC").is_ok_and(|v| v == "1")
}

/// Path of the manifest that accompanies `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("manifest.json");
    }
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_uses_git_framing() {
        let mut h = Sha256::new();
        h.update(b"blob 5\0hello");
        assert_eq!(blob_hash(b"hello"), hex::encode(h.finalize()));
        assert_ne!(blob_hash(b"hello"), blob_hash(b"hello "));
    }

    #[test]
    fn manifest_sits_next_to_its_output() {
        assert_eq!(manifest_path(Path::new("out/data.jsonl")), Path::new("out/data.jsonl.manifest.json"));
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(manifest_path(dir.path()), dir.path().join("manifest.json"));
    }

    #[test]
    fn tree_digests_are_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b"), "2").unwrap();
        std::fs::write(dir.path().join("a"), "1").unwrap();
        let d = digest_tree(dir.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d[0].path.ends_with("a"));
        assert_eq!(combined_hash(&d), combined_hash(&digest_tree(dir.path()).unwrap()));
    }
}
