//! Artifact emission: CSV files with full-precision numeric cells and a
//! reproducibility manifest. Outputs are deterministic byte-for-byte for a
//! given configuration and seed, so no timestamps or wall times appear here.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use sha2::{Digest, Sha256};

/// Full double precision: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    pub fn add_manifest(&mut self, command: &str, canonical_config: &str, seed: u64, repeats: usize) {
        let mut hasher = Sha256::new();
        hasher.update(canonical_config.as_bytes());
        let hash = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in hash {
            hex.push_str(&format!("{byte:02x}"));
        }
        let manifest = format!(
            "command={command}\nconfig_sha256={hex}\nseed={seed}\nrepeats={repeats}\nversion={}\n",
            env!("CARGO_PKG_VERSION")
        );
        self.add("manifest.txt", manifest);
    }

    /// Write every artifact under `dir`; on any failure remove the files
    /// written so far so no partial output survives.
    pub fn write_all(self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, content) in &self.files {
            let path = dir.join(name);
            match fs::write(&path, content) {
                Ok(()) => written.push(path),
                Err(err) => {
                    for w in &written {
                        let _ = fs::remove_file(w);
                    }
                    return Err(err).with_context(|| format!("writing {}", path.display()));
                }
            }
        }
        Ok(written)
    }
}

/// Simple CSV assembly: a header row plus formatted records.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}
