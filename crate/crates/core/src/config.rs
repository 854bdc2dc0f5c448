//! Scene configuration, read from TOML.
//!
//! Every field has a default matching the reference desk-scale setup, so an
//! empty file is a valid configuration. The `[dataset]` table controls
//! generation only and is excluded from the scene hash: two datasets drawn
//! from the same scene with different seeds stay comparable.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PszError, Result};
use crate::room::{FrequencyGrid, RoomSpec, DEFAULT_SPEED_OF_SOUND};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub dims: [f64; 3],
    pub rt60: f64,
    pub speed_of_sound: f64,
    /// Total reflection-count cap. Derived from RT60 when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_order: Option<u32>,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            dims: [8.0, 8.0, 3.0],
            rt60: 0.25,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            max_order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub count: usize,
    pub radius: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            count: 30,
            radius: 1.68,
        }
    }
}

/// How the zone `gap` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    /// Distance between the facing zone edges.
    EdgeToEdge,
    /// Distance between zone centres.
    CenterToCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneConfig {
    /// Zone footprint `(width along x, depth along y)` in metres.
    pub size: [f64; 2],
    pub gap: f64,
    pub gap_mode: GapMode,
    /// Control points per side.
    pub control_points: usize,
    /// Monitor points per side.
    pub monitor_points: usize,
    pub plane_height: f64,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        ZoneConfig {
            size: [0.4, 0.4],
            gap: 1.0,
            gap_mode: GapMode::EdgeToEdge,
            control_points: 12,
            monitor_points: 17,
            plane_height: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyConfig {
    pub count: usize,
    pub max_hz: f64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig {
            count: 128,
            max_hz: 2000.0,
        }
    }
}

/// Annulus around the room centre from which virtual sources are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            r_min: 1.7,
            r_max: 3.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub samples: usize,
    pub seed: u64,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            samples: 2000,
            seed: 7,
            split: [0.9, 0.05, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub room: RoomConfig,
    pub array: ArrayConfig,
    pub zones: ZoneConfig,
    pub frequencies: FrequencyConfig,
    pub sources: SourceConfig,
    pub dataset: DatasetConfig,
}

impl SceneConfig {
    /// Full-scale settings: 512 bins and 20,000 samples.
    pub fn full_scale() -> Self {
        let mut cfg = SceneConfig::default();
        cfg.frequencies.count = 512;
        cfg.dataset.samples = 20_000;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PszError::Parse {
            what: "scene config".into(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PszError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene config always serializes")
    }

    pub fn room_spec(&self) -> Result<RoomSpec> {
        RoomSpec::new(self.room.dims, self.room.rt60, self.room.speed_of_sound)
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::uniform(self.frequencies.count, self.frequencies.max_hz)
    }

    pub fn max_order(&self) -> Result<u32> {
        Ok(match self.room.max_order {
            Some(n) => n,
            None => self.room_spec()?.default_max_order(),
        })
    }

    /// SHA-256 over the canonical JSON of everything except `[dataset]`.
    pub fn scene_hash(&self) -> String {
        let scene = serde_json::json!({
            "room": self.room,
            "array": self.array,
            "zones": self.zones,
            "frequencies": self.frequencies,
            "sources": self.sources,
        });
        let bytes = serde_json::to_vec(&scene).expect("scene config always serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
