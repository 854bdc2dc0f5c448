//! Dataset generation, storage and loading.
//!
//! A dataset directory holds four PSZD tensors and a JSON manifest:
//!
//! | file                    | shape                  |
//! |-------------------------|------------------------|
//! | `h_ctrl.pszd`           | `(K, 2*12*12, L)`      |
//! | `h_mon.pszd`            | `(K, 2*17*17, L)`      |
//! | `control_targets.pszd`  | `(N, K, 12, 12)`       |
//! | `monitor_targets.pszd`  | `(N, K, 17, 17)`       |
//!
//! Receiver rows list the bright zone first, then the dark zone, each in
//! grid order. Dark-zone targets are zero and are not stored.

mod format;
mod generate;
mod manifest;
mod prefilters;

use std::path::{Path, PathBuf};

pub use format::{
    encode_header, file_sha256, header_len, write_tensor, TensorFile, TensorWriter, MAGIC,
    SCHEMA_VERSION,
};
pub use generate::{generate_dataset, make_splits, sample_sources, simulate_targets};
pub use manifest::{
    Counts, DatasetManifest, FileEntry, Splits, Subset, CONTROL_TARGETS, H_CTRL, H_MON,
    MANIFEST_FILE, MANIFEST_VERSION, MONITOR_TARGETS,
};
pub use prefilters::{
    read_prefilters, sidecar_path, write_prefilters, PrefilterMeta, PREFILTER_SCHEMA_VERSION,
};

use crate::config::SceneConfig;
use crate::error::{PszError, Result};
use crate::geometry::Point3;
use crate::room::{AtfTensor, FrequencyGrid};
use crate::scene::{make_scene, GridTensor, Scene};
use crate::solver::TargetAtf;

/// One virtual source and its bright-zone targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub source_pos: Point3,
    /// `(K, 12, 12)`.
    pub control_target: GridTensor,
    /// `(K, 17, 17)`.
    pub monitor_target_b: GridTensor,
}

/// A validated dataset directory. Per-sample tensors are read lazily.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    scene: Scene,
    freqs: FrequencyGrid,
    control: TensorFile,
    monitor: TensorFile,
}

impl Dataset {
    /// Opens `dir`, checking the manifest, every file's header, size and
    /// checksum, and that the embedded config matches its hash.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))?;
        let hash = manifest.config.scene_hash();
        if hash != manifest.config_hash {
            return Err(PszError::ConfigHashMismatch {
                expected: manifest.config_hash.clone(),
                found: hash,
            });
        }
        let scene = make_scene(&manifest.config)?;
        let freqs = FrequencyGrid::from_values(manifest.freqs_hz.clone())?;
        if freqs != scene.freqs {
            return Err(PszError::Parse {
                what: "dataset manifest".into(),
                reason: "frequency list does not match the embedded config".into(),
            });
        }
        let c = &manifest.counts;
        if c.freqs != freqs.len()
            || c.speakers != scene.array.len()
            || c.control_rows != scene.control_points().len()
            || c.monitor_rows != scene.monitor_points().len()
            || c.samples != manifest.source_positions.len()
        {
            return Err(PszError::Parse {
                what: "dataset manifest".into(),
                reason: "counts disagree with the embedded config".into(),
            });
        }
        for (key, dims) in manifest.expected_dims() {
            let entry = manifest.file(key)?;
            let path = dir.join(&entry.path);
            let tensor = TensorFile::open(&path)?;
            if tensor.dims() != dims.as_slice() || entry.dims != dims {
                return Err(PszError::Dimension {
                    path,
                    reason: format!("expected dims {dims:?}, found {:?}", tensor.dims()),
                });
            }
            if tensor.sha256()? != entry.sha256 {
                return Err(PszError::ChecksumMismatch { path });
            }
        }
        let control = TensorFile::open(&dir.join(&manifest.file(CONTROL_TARGETS)?.path))?;
        let monitor = TensorFile::open(&dir.join(&manifest.file(MONITOR_TARGETS)?.path))?;
        Ok(Dataset {
            root: dir.to_path_buf(),
            manifest,
            scene,
            freqs,
            control,
            monitor,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &SceneConfig {
        &self.manifest.config
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn len(&self) -> usize {
        self.manifest.counts.samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rejects evaluation against a scene other than the one this dataset
    /// was generated from.
    pub fn check_scene(&self, config: &SceneConfig) -> Result<()> {
        let hash = config.scene_hash();
        if hash != self.manifest.config_hash {
            return Err(PszError::ConfigHashMismatch {
                expected: self.manifest.config_hash.clone(),
                found: hash,
            });
        }
        Ok(())
    }

    fn load_atf(&self, key: &str) -> Result<AtfTensor> {
        let entry = self.manifest.file(key)?;
        let tensor = TensorFile::open(&self.root.join(&entry.path))?;
        let d = tensor.dims();
        AtfTensor::new(
            tensor.read_all()?,
            d[1] as usize,
            d[2] as usize,
            self.freqs.clone(),
        )
    }

    /// Local-room transfer functions to the control points, `(K, 288, L)`.
    pub fn h_ctrl(&self) -> Result<AtfTensor> {
        self.load_atf(H_CTRL)
    }

    /// Local-room transfer functions to the monitor points, `(K, 578, L)`.
    pub fn h_mon(&self) -> Result<AtfTensor> {
        self.load_atf(H_MON)
    }

    pub fn sample(&self, index: usize) -> Result<SampleRecord> {
        let c = &self.manifest.counts;
        let k_len = c.freqs;
        let control = GridTensor::new(
            self.control.read_outer(index as u64)?,
            k_len,
            c.control_grid[0],
            c.control_grid[1],
        )?;
        let monitor = GridTensor::new(
            self.monitor.read_outer(index as u64)?,
            k_len,
            c.monitor_grid[0],
            c.monitor_grid[1],
        )?;
        Ok(SampleRecord {
            index,
            source_pos: self.manifest.source_positions[index].into(),
            control_target: control,
            monitor_target_b: monitor,
        })
    }

    pub fn indices(&self, subset: Subset) -> Vec<usize> {
        self.manifest.splits.indices(subset, self.len())
    }

    /// The solver-side target for a sample: bright control grid plus the
    /// implicit dark-zone zeros.
    pub fn target(&self, record: &SampleRecord) -> Result<TargetAtf> {
        let dark = self.manifest.counts.control_rows - record.control_target.cells();
        TargetAtf::new(record.control_target.clone(), dark)
    }
}
