//! Manifests: which command produced which files, with SHA-256 checksums.
//!
//! Paths inside a manifest are relative to the manifest's own directory, so
//! a directory of artifacts can be moved and still replayed.

use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::Recorded;
use crate::error::{Failure, Kind, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub command: Recorded,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

/// What a command read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub parameters: Option<serde_json::Value>,
    /// Where to write the manifest, if anywhere.
    pub manifest: Option<PathBuf>,
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

/// Lexically absolute path with `.` and `..` resolved.
fn normalized(path: &Path) -> io::Result<PathBuf> {
    let abs = std::path::absolute(path)?;
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    Ok(out)
}

/// `target` expressed relative to directory `base`.
pub fn relative_to(target: &Path, base: &Path) -> io::Result<PathBuf> {
    let (t, b) = (normalized(target)?, normalized(base)?);
    let (tc, bc): (Vec<_>, Vec<_>) = (t.components().collect(), b.components().collect());
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &tc[common..] {
        out.push(c);
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    Ok(out)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn record(path: &Path, base: &Path) -> Result<FileRecord> {
    let (bytes, sha256) = sha256_file(path).map_err(|e| Failure::io(path, e))?;
    let rel = relative_to(path, base).map_err(|e| Failure::io(path, e))?;
    Ok(FileRecord { path: rel, bytes, sha256 })
}

pub fn write(path: &Path, command: &Recorded, outcome: &Outcome) -> Result<()> {
    let base = parent_dir(path);
    let mut command = command.clone();
    for p in command.paths_mut() {
        *p = relative_to(p, &base).map_err(|e| Failure::io(p, e))?;
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: format!("photonstat {}", env!("CARGO_PKG_VERSION")),
        command,
        seed: outcome.seed,
        parameters: outcome.parameters.clone(),
        inputs: outcome.inputs.iter().map(|p| record(p, &base)).collect::<Result<_>>()?,
        outputs: outcome.outputs.iter().map(|p| record(p, &base)).collect::<Result<_>>()?,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

pub fn read(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let manifest: Manifest = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Failure::config(format!(
            "{}: unsupported manifest schema_version {} (expected {SCHEMA_VERSION})",
            path.display(),
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

/// The recorded command with its paths resolved against the manifest location.
pub fn resolved_command(manifest: &Manifest, manifest_path: &Path) -> Recorded {
    let base = parent_dir(manifest_path);
    let mut command = manifest.command.clone();
    for p in command.paths_mut() {
        let joined = base.join(&*p);
        *p = normalized(&joined).unwrap_or(joined);
    }
    command
}

/// Checks the recorded files under `base` against their checksums; returns
/// a description of each mismatch.
pub fn verify(records: &[FileRecord], base: &Path) -> Vec<String> {
    records
        .iter()
        .filter_map(|r| {
            let path = base.join(&r.path);
            match sha256_file(&path) {
                Ok((bytes, sha)) if bytes == r.bytes && sha == r.sha256 => None,
                Ok((bytes, sha)) => Some(format!(
                    "{}: expected {} bytes sha256 {}, found {bytes} bytes sha256 {sha}",
                    path.display(),
                    r.bytes,
                    r.sha256
                )),
                Err(e) => Some(format!("{}: {e}", path.display())),
            }
        })
        .collect()
}

pub fn manifest_dir(path: &Path) -> PathBuf {
    parent_dir(path)
}

pub fn mismatch(kind_of_files: &str, problems: Vec<String>) -> Failure {
    Failure::new(Kind::CheckFailed, format!("{kind_of_files} differ from the manifest:\n  {}", problems.join("\n  ")))
}
