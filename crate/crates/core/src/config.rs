//! JSON run configuration shared by every CLI command.
//!
//! Every field is optional; missing fields take the defaults below. File
//! paths are resolved relative to the directory holding the config file.

use crate::bevfusion::{CfsDims, CfsWeights, GridSpec};
use crate::binning::{DepthBinSpec, HeightBinSpec};
use crate::geometry::{make_rig, CameraRig, Extrinsics, Intrinsics, RigJson};
use crate::lifting::{HeadDims, ToyHeadWeights};
use crate::oracle::{default_rig, ImageSize, NoiseSpec, PipelineMode, PipelineSpec, DEFAULT_IMAGE, DEFAULT_QUANTILE};
use crate::weights::{WeightStore, WeightsError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("referenced file `{field}` does not exist: {path}")]
    MissingFile { field: String, path: PathBuf },
    #[error("loading `{field}`: {source}")]
    Weights { field: String, source: WeightsError },
}

fn invalid(field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Boxes in a synthesized scene, used when no scene file is given.
    pub n_boxes: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { n_boxes: 20 }
    }
}

/// Toy prediction head. Bin counts come from the bin specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub c_feat: usize,
    pub c_cam: usize,
    pub weights: Option<PathBuf>,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            c_feat: 16,
            c_cam: 8,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfsConfig {
    pub c_out: usize,
    /// Weight-store directory; seeded weights when absent.
    pub weights: Option<PathBuf>,
}

impl Default for CfsConfig {
    fn default() -> Self {
        Self { c_out: 4, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub focal_sigma: f64,
    pub angle_sigma_deg: f64,
    pub trials: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Self {
            focal_sigma: n.focal_sigma,
            angle_sigma_deg: n.angle_sigma_deg,
            trials: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub distances: Vec<f64>,
    pub cam_heights: Vec<f64>,
    /// Ground distance of the car in the camera-height sweep.
    pub height_sweep_distance: f64,
    /// Pitch of the cameras built for the camera-height sweep.
    pub pitch_deg: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distances: (1..=10).map(|i| 10.0 * i as f64).collect(),
            cam_heights: vec![5.0, 6.0, 7.0],
            height_sweep_distance: 50.0,
            pitch_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Roadside default camera when absent.
    pub rig: Option<RigJson>,
    pub image: ImageSize,
    pub depth_bins: DepthBinSpec,
    pub height_bins: HeightBinSpec,
    pub grid: GridSpec,
    pub downsample: usize,
    /// Context channels fed to both lifting branches.
    pub channels: usize,
    pub quantile: f64,
    pub scene: SceneConfig,
    pub head: HeadConfig,
    pub cfs: CfsConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    /// Distillation adapter weight-store directory.
    pub adapter: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            out: PathBuf::from("out"),
            threads: None,
            rig: None,
            image: DEFAULT_IMAGE,
            depth_bins: DepthBinSpec::default(),
            height_bins: HeightBinSpec::default(),
            grid: GridSpec::default(),
            downsample: 1,
            channels: 4,
            quantile: DEFAULT_QUANTILE,
            scene: SceneConfig::default(),
            head: HeadConfig::default(),
            cfs: CfsConfig::default(),
            noise: NoiseConfig::default(),
            sweep: SweepConfig::default(),
            adapter: None,
        }
    }
}

impl Config {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_json_str(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.head.weights, &mut cfg.cfs.weights, &mut cfg.adapter].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rig()?;
        self.depth_bins.validate().map_err(|e| invalid("depth_bins", e))?;
        self.height_bins.validate().map_err(|e| invalid("height_bins", e))?;
        self.grid.validate().map_err(|e| invalid("grid", e))?;
        if self.image.width == 0 || self.image.height == 0 {
            return Err(invalid("image", "width and height must be positive"));
        }
        if self.downsample == 0 {
            return Err(invalid("downsample", "must be >= 1"));
        }
        if self.channels == 0 {
            return Err(invalid("channels", "must be >= 1"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(invalid("quantile", format!("must lie in (0, 1], got {}", self.quantile)));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be >= 1"));
        }
        if self.cfs.c_out == 0 {
            return Err(invalid("cfs.c_out", "must be >= 1"));
        }
        if self.head.c_feat == 0 || self.head.c_cam == 0 {
            return Err(invalid("head", "c_feat and c_cam must be >= 1"));
        }
        self.noise_spec().validate().map_err(|m| invalid("noise", m))?;
        let s = &self.sweep;
        if s.distances.iter().chain(&s.cam_heights).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("sweep", "distances and camera heights must be positive"));
        }
        for (field, p) in [
            ("head.weights", &self.head.weights),
            ("cfs.weights", &self.cfs.weights),
            ("adapter", &self.adapter),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingFile {
                        field: field.to_string(),
                        path: p.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<CameraRig, ConfigError> {
        match &self.rig {
            Some(r) => r.to_rig().map_err(|e| invalid("rig", e)),
            None => Ok(default_rig()),
        }
    }

    pub fn pipeline_spec(&self, mode: PipelineMode) -> PipelineSpec {
        PipelineSpec {
            depth_bins: self.depth_bins,
            height_bins: self.height_bins,
            grid: self.grid,
            downsample: self.downsample,
            channels: self.channels,
            quantile: self.quantile,
            mode,
        }
    }

    pub fn cfs_dims(&self) -> CfsDims {
        CfsDims {
            channels: self.channels,
            c_out: self.cfs.c_out,
            slabs: self.grid.nz(),
        }
    }

    pub fn cfs_weights(&self) -> Result<CfsWeights, ConfigError> {
        match &self.cfs.weights {
            Some(dir) => load_store(dir, "cfs.weights")
                .and_then(|s| CfsWeights::from_store(self.cfs_dims(), s).map_err(|source| weights_err("cfs.weights", source))),
            None => Ok(CfsWeights::seeded(self.cfs_dims(), self.seed)),
        }
    }

    pub fn head_dims(&self) -> HeadDims {
        HeadDims {
            c_feat: self.head.c_feat,
            c_cam: self.head.c_cam,
            c_ctx: self.channels,
            n_depth: self.depth_bins.n_bins,
            n_height: self.height_bins.n_bins,
        }
    }

    pub fn head_weights(&self) -> Result<ToyHeadWeights, ConfigError> {
        match &self.head.weights {
            Some(dir) => load_store(dir, "head.weights").and_then(|s| {
                ToyHeadWeights::from_store(self.head_dims(), s).map_err(|source| weights_err("head.weights", source))
            }),
            None => Ok(ToyHeadWeights::seeded(self.head_dims(), self.seed)),
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            focal_sigma: self.noise.focal_sigma,
            angle_sigma_deg: self.noise.angle_sigma_deg,
            seed: self.seed,
            ..NoiseSpec::default()
        }
    }

    /// Intrinsics of the configured rig, reused by the camera-height sweep.
    pub fn sweep_intrinsics(&self) -> Result<Intrinsics, ConfigError> {
        Ok(*self.rig()?.intrinsics())
    }

    /// Checks that a pitched camera at every sweep height is buildable.
    pub fn check_sweep_rigs(&self) -> Result<(), ConfigError> {
        let k = self.sweep_intrinsics()?;
        for &h in &self.sweep.cam_heights {
            make_rig(k, Extrinsics::pitched(self.sweep.pitch_deg, h)).map_err(|e| invalid("sweep", e))?;
        }
        Ok(())
    }
}

fn weights_err(field: &str, source: WeightsError) -> ConfigError {
    ConfigError::Weights {
        field: field.to_string(),
        source,
    }
}

fn load_store(dir: &Path, field: &str) -> Result<WeightStore, ConfigError> {
    WeightStore::load_dir(dir).map_err(|source| weights_err(field, source))
}
