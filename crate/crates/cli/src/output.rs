//! Provenance, input digests, and failure markers for command outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fnrate::io::{Provenance, RATINGS_FILE, SIDECAR_FILE};
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Digests every regular file under `path` (one level), sorted by name.
pub fn digest_inputs(label: &str, path: &Path) -> Result<Vec<(String, String)>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !is_marker(p))
            .collect();
        files.sort();
        files
            .iter()
            .map(|f| {
                let name = f
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((format!("{label}/{name}"), sha256_file(f)?))
            })
            .collect()
    } else {
        Ok(vec![(label.to_string(), sha256_file(path)?)])
    }
}

/// Digests the two files that make up a saved fit.
pub fn digest_fit(label: &str, dir: &Path) -> Result<Vec<(String, String)>> {
    [RATINGS_FILE, SIDECAR_FILE]
        .iter()
        .map(|f| Ok((format!("{label}/{f}"), sha256_file(&dir.join(f))?)))
        .collect()
}

pub fn provenance(command: &str, inputs: Vec<(String, String)>) -> Provenance {
    Provenance {
        tool: "fnrate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        inputs,
        model: None,
        constraint: None,
    }
}

pub fn require_input(path: &Path) -> Result<PathBuf> {
    if !path.exists() {
        bail!("input {} does not exist", path.display());
    }
    Ok(path.to_path_buf())
}

fn is_marker(p: &Path) -> bool {
    p.file_name().is_some_and(|n| n == "FAILED") || p.extension().is_some_and(|e| e == "FAILED")
}

/// Output locations of one command, with the marker written if it fails.
#[derive(Debug, Default)]
pub struct Outputs {
    markers: Vec<PathBuf>,
}

impl Outputs {
    /// Creates an output directory; its marker is `DIR/FAILED`.
    pub fn dir(&mut self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let marker = dir.join("FAILED");
        self.clear(&marker)?;
        self.markers.push(marker);
        Ok(dir.to_path_buf())
    }

    /// Checks an output file's directory exists; its marker is `FILE.FAILED`.
    pub fn file(&mut self, path: &Path) -> Result<PathBuf> {
        let parent = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            bail!("output directory {} does not exist", parent.display());
        }
        let mut marker = path.as_os_str().to_owned();
        marker.push(".FAILED");
        let marker = PathBuf::from(marker);
        self.clear(&marker)?;
        self.markers.push(marker);
        Ok(path.to_path_buf())
    }

    fn clear(&self, marker: &Path) -> Result<()> {
        if marker.exists() {
            fs::remove_file(marker)
                .with_context(|| format!("removing stale {}", marker.display()))?;
        }
        Ok(())
    }

    /// Leaves a marker beside every registered output.
    pub fn mark_failed(&self, message: &str) {
        for marker in &self.markers {
            if let Ok(mut f) = fs::File::create(marker) {
                let _ = writeln!(f, "FAILED: {message}");
            }
        }
    }
}
