use std::fs;
use std::path::{Path, PathBuf};

use psz_core::dataset::file_sha256;
use psz_core::{PszError, Result};
use serde::Serialize;
use serde_json::Value;

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
}

/// Everything a command writes goes through here so that `run.json` can
/// list each file with its checksum. Nothing time- or host-dependent is
/// recorded, so identical runs give identical bytes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<OutputFile>,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    tool: String,
    command: &'a str,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    parameters: Value,
    outputs: &'a [OutputFile],
}

pub fn io_err(path: &Path, source: std::io::Error) -> PszError {
    PszError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.record(rel)
    }

    /// Registers a file some other writer already put under the root.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let sha256 = file_sha256(&self.path(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(OutputFile {
            path: rel.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn finish(
        mut self,
        command: &str,
        config_hash: &str,
        seed: Option<u64>,
        parameters: Value,
    ) -> Result<()> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            schema_version: 1,
            tool: format!("psz {}", env!("CARGO_PKG_VERSION")),
            command,
            config_hash,
            seed,
            parameters,
            outputs: &self.files,
        };
        let path = self.path(RUN_MANIFEST);
        fs::write(&path, to_json(&manifest)).map_err(|e| io_err(&path, e))
    }
}
