//! Pre-filter files: a `(K, L)` PSZD tensor plus a JSON sidecar with the
//! same stem carrying the metadata. This pair is how externally designed
//! pre-filters (for example from a trained network) enter evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{write_tensor, TensorFile};
use crate::error::{PszError, Result};
use crate::room::FrequencyGrid;
use crate::solver::PreFilterSet;

pub const PREFILTER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefilterMeta {
    pub schema_version: u32,
    /// Free-form method id, e.g. `pm` or a model name.
    pub method: String,
    pub mask: String,
    /// Dataset sample the filters were designed for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub freqs_hz: Vec<f64>,
    /// SHA-256 of the tensor file; filled in on write.
    #[serde(default)]
    pub sha256: String,
}

impl PrefilterMeta {
    pub fn new(method: impl Into<String>, mask: impl Into<String>, freqs: &FrequencyGrid) -> Self {
        PrefilterMeta {
            schema_version: PREFILTER_SCHEMA_VERSION,
            method: method.into(),
            mask: mask.into(),
            sample: None,
            lambda: None,
            config_hash: None,
            freqs_hz: freqs.freqs().to_vec(),
            sha256: String::new(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_prefilters(path: &Path, set: &PreFilterSet, meta: &PrefilterMeta) -> Result<()> {
    if meta.freqs_hz.as_slice() != set.freqs().freqs() {
        return Err(PszError::InvalidInput(
            "pre-filter metadata frequencies differ from the filter set".into(),
        ));
    }
    let dims = [set.n_freqs() as u64, set.speakers() as u64];
    let mut meta = meta.clone();
    meta.sha256 = write_tensor(path, &dims, set.data())?;
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata always serializes");
    text.push('\n');
    std::fs::write(&side, text).map_err(|e| PszError::io(&side, e))
}

/// Reads a pre-filter file and its sidecar. When `expected_speakers` is
/// given, a different speaker count is a dimension error.
pub fn read_prefilters(
    path: &Path,
    expected_speakers: Option<usize>,
) -> Result<(PreFilterSet, PrefilterMeta)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| PszError::io(&side, e))?;
    let meta: PrefilterMeta = serde_json::from_str(&text).map_err(|e| PszError::Parse {
        what: side.display().to_string(),
        reason: e.to_string(),
    })?;
    if meta.schema_version != PREFILTER_SCHEMA_VERSION {
        return Err(PszError::VersionMismatch {
            path: side,
            found: meta.schema_version,
            expected: PREFILTER_SCHEMA_VERSION,
        });
    }
    let tensor = TensorFile::open(path)?;
    if tensor.dims().len() != 2 {
        return Err(PszError::Dimension {
            path: path.to_path_buf(),
            reason: format!("expected a (K, L) tensor, found dims {:?}", tensor.dims()),
        });
    }
    let (k_len, l_len) = (tensor.dims()[0] as usize, tensor.dims()[1] as usize);
    if let Some(l) = expected_speakers {
        if l != l_len {
            return Err(PszError::Dimension {
                path: path.to_path_buf(),
                reason: format!("{l_len} loudspeakers, scene has {l}"),
            });
        }
    }
    if meta.freqs_hz.len() != k_len {
        return Err(PszError::Dimension {
            path: path.to_path_buf(),
            reason: format!("{k_len} bins but sidecar lists {}", meta.freqs_hz.len()),
        });
    }
    if !meta.sha256.is_empty() && tensor.sha256()? != meta.sha256 {
        return Err(PszError::ChecksumMismatch {
            path: path.to_path_buf(),
        });
    }
    let freqs = FrequencyGrid::from_values(meta.freqs_hz.clone())?;
    let set = PreFilterSet::new(tensor.read_all()?, l_len, freqs)?;
    Ok((set, meta))
}
