use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SceneConfig;
use crate::error::{PszError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Tensor file keys.
pub const H_CTRL: &str = "h_ctrl";
pub const H_MON: &str = "h_mon";
pub const CONTROL_TARGETS: &str = "control_targets";
pub const MONITOR_TARGETS: &str = "monitor_targets";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the dataset directory.
    pub path: String,
    pub dims: Vec<u64>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub samples: usize,
    pub freqs: usize,
    pub control_grid: [usize; 2],
    pub monitor_grid: [usize; 2],
    pub speakers: usize,
    /// Bright then dark control points.
    pub control_rows: usize,
    /// Bright then dark monitor points.
    pub monitor_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = PszError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            other => Err(PszError::InvalidInput(format!(
                "unknown subset `{other}` (expected train, val, test or all)"
            ))),
        }
    }
}

impl Splits {
    pub fn indices(&self, subset: Subset, total: usize) -> Vec<usize> {
        match subset {
            Subset::Train => self.train.clone(),
            Subset::Val => self.val.clone(),
            Subset::Test => self.test.clone(),
            Subset::All => (0..total).collect(),
        }
    }
}

/// JSON description of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub format: String,
    pub config_hash: String,
    pub config: SceneConfig,
    pub counts: Counts,
    pub freqs_hz: Vec<f64>,
    pub seed: u64,
    pub max_order: u32,
    pub reference_speaker: usize,
    pub source_positions: Vec<[f64; 3]>,
    pub splits: Splits,
    pub files: BTreeMap<String, FileEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PszError::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| PszError::Parse {
                what: path.display().to_string(),
                reason: e.to_string(),
            })?;
        // Check the version before the full schema so old files get a clear error.
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| PszError::Parse {
                what: path.display().to_string(),
                reason: "missing schema_version".into(),
            })?;
        if version != MANIFEST_VERSION as u64 {
            return Err(PszError::VersionMismatch {
                path: path.to_path_buf(),
                found: version as u32,
                expected: MANIFEST_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| PszError::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest always serializes");
        s.push('\n');
        s
    }

    pub fn file(&self, key: &str) -> Result<&FileEntry> {
        self.files.get(key).ok_or_else(|| PszError::Parse {
            what: "dataset manifest".into(),
            reason: format!("no `{key}` file entry"),
        })
    }

    /// Expected tensor shapes for each file key.
    pub fn expected_dims(&self) -> BTreeMap<&'static str, Vec<u64>> {
        let c = &self.counts;
        let u = |v: usize| v as u64;
        BTreeMap::from([
            (H_CTRL, vec![u(c.freqs), u(c.control_rows), u(c.speakers)]),
            (H_MON, vec![u(c.freqs), u(c.monitor_rows), u(c.speakers)]),
            (
                CONTROL_TARGETS,
                vec![
                    u(c.samples),
                    u(c.freqs),
                    u(c.control_grid[0]),
                    u(c.control_grid[1]),
                ],
            ),
            (
                MONITOR_TARGETS,
                vec![
                    u(c.samples),
                    u(c.freqs),
                    u(c.monitor_grid[0]),
                    u(c.monitor_grid[1]),
                ],
            ),
        ])
    }
}
