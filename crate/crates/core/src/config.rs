//! Run configuration shared by the library and the command line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{ArrayConfig, FeatureConfig, RoomSpec, TestConfig, TrainGrid};
use crate::error::{Error, IoContext, Result};
use crate::nn::{ModelSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    pub train_grid: TrainGrid,
    pub test: TestConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub training: TrainConfig,
}

fn one() -> usize {
    1
}

fn room(name: &str, x: f64, y: f64, z: f64, rt60: f64) -> RoomSpec {
    RoomSpec {
        name: name.into(),
        dims: [x, y, z],
        rt60,
    }
}

impl RunConfig {
    /// Full five-room training grid with the reverberant test room.
    pub fn paper_table1() -> Self {
        Self {
            seed: 1,
            threads: 1,
            array: ArrayConfig::default(),
            features: FeatureConfig::default(),
            train_grid: TrainGrid {
                rooms: vec![
                    room("R1", 6.0, 6.0, 2.7, 0.3),
                    room("R2", 5.0, 4.0, 2.7, 0.2),
                    room("R3", 10.0, 6.0, 2.7, 0.8),
                    room("R4", 8.0, 3.0, 2.7, 0.4),
                    room("R5", 8.0, 5.0, 2.7, 0.6),
                ],
                positions_per_room: 7,
                distances: vec![1.0, 2.0],
                snr_range_db: [0.0, 20.0],
                doa_resolution_deg: 5.0,
                signal_duration_s: 2.0,
                pairs: None,
                single_source: false,
            },
            test: TestConfig {
                room: room("test", 9.0, 4.0, 3.0, 0.7),
                distance: 1.8,
                snr_db: 30.0,
                pair_stride: 1,
                duration_s: 2.0,
                doa_resolution_deg: 5.0,
            },
            model: ModelSpec::default(),
            training: TrainConfig::default(),
        }
    }

    /// One room, one array position, an unseen moderately reverberant test room.
    pub fn desk_scale() -> Self {
        let full = Self::paper_table1();
        Self {
            train_grid: TrainGrid {
                rooms: vec![full.train_grid.rooms[0].clone()],
                positions_per_room: 1,
                ..full.train_grid
            },
            test: TestConfig {
                room: room("test", 7.0, 5.0, 3.0, 0.5),
                pair_stride: 6,
                ..full.test
            },
            training: TrainConfig {
                epochs: 3,
                ..full.training
            },
            ..full
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.train_grid.validate()?;
        self.test.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.array.mic_count < 2 || !(self.array.spacing > 0.0) {
            return Err(Error::Config("array needs >= 2 mics and positive spacing".into()));
        }
        let classes = self.train_grid.classes()?.count();
        if self.model.mics != self.array.mic_count || self.model.bands != self.features.band_count() || self.model.classes != classes {
            return Err(Error::Config(format!(
                "model is M={} K={} I={}, data gives M={} K={} I={}",
                self.model.mics,
                self.model.bands,
                self.model.classes,
                self.array.mic_count,
                self.features.band_count(),
                classes
            )));
        }
        if self.test.doa_resolution_deg != self.train_grid.doa_resolution_deg {
            return Err(Error::Config("train and test DOA grids differ".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).context(|| format!("writing {}", path.display()))
    }
}
