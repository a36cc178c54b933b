//! Ground-truth lifting pipeline: render, one-hot distributions, dual
//! lifting, pooling, fusion, occupancy.

use super::metrics::{occupancy_report, OccupancyReport};
use super::render::{gt_context, gt_sparse, render_gt, GtMaps};
use super::scene::Scene;
use crate::bevfusion::{cfs_fuse, lift_and_pool, CfsDims, CfsWeights, GridSpec, PoolStats, VoxelFeature};
use crate::binning::{BinEdges, DepthBinSpec, HeightBinSpec};
use crate::geometry::CameraRig;
use crate::lifting::{LiftError, LiftMode, SparseDist};
use crate::tensor::{Tensor, TensorError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    Fused,
    DepthOnly,
    HeightOnly,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [PipelineMode::Fused, PipelineMode::DepthOnly, PipelineMode::HeightOnly];

    pub fn name(&self) -> &'static str {
        match self {
            PipelineMode::Fused => "fused",
            PipelineMode::DepthOnly => "depth-only",
            PipelineMode::HeightOnly => "height-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSpec {
    pub depth_bins: DepthBinSpec,
    pub height_bins: HeightBinSpec,
    pub grid: GridSpec,
    pub downsample: usize,
    pub channels: usize,
    pub quantile: f64,
    pub mode: PipelineMode,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            depth_bins: DepthBinSpec::default(),
            height_bins: HeightBinSpec::default(),
            grid: GridSpec::default(),
            downsample: 1,
            channels: 4,
            quantile: super::metrics::DEFAULT_QUANTILE,
            mode: PipelineMode::Fused,
        }
    }
}

impl PipelineSpec {
    pub fn cfs_dims(&self, c_out: usize) -> CfsDims {
        CfsDims {
            channels: self.channels,
            c_out,
            slabs: self.grid.nz(),
        }
    }
}

/// Everything derived from the true rig: rendered maps, context and the
/// one-hot distributions.
#[derive(Debug, Clone)]
pub struct GtInputs {
    pub maps: GtMaps,
    pub context: Tensor,
    pub depth: SparseDist,
    pub height: SparseDist,
    pub depth_edges: BinEdges,
    pub height_edges: BinEdges,
}

impl GtInputs {
    pub fn new(scene: &Scene, spec: &PipelineSpec) -> Self {
        let maps = render_gt(scene, spec.downsample);
        let depth_edges = spec.depth_bins.edges();
        let height_edges = spec.height_bins.edges();
        Self {
            context: gt_context(&maps, spec.channels),
            depth: gt_sparse(&maps, &depth_edges, LiftMode::Depth),
            height: gt_sparse(&maps, &height_edges, LiftMode::Height),
            maps,
            depth_edges,
            height_edges,
        }
    }

    /// Drops cells with zero context. Pooled values are unchanged; only the
    /// point counts shrink.
    pub fn foreground_only(mut self) -> Self {
        let plane = self.context.shape()[1] * self.context.shape()[2];
        let ctx = &self.context.data()[..plane];
        let keep = |p: usize| ctx[p] != 0.0;
        self.depth.retain_pixels(keep);
        self.height.retain_pixels(keep);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineMetrics {
    pub mode: PipelineMode,
    pub iou: Option<f64>,
    pub occupancy: OccupancyReport,
    pub n_boxes: usize,
    pub rays: usize,
    pub ray_hits: usize,
    /// BEV cells reached by any lifted point, per branch.
    pub hit_cells_depth: Option<usize>,
    pub hit_cells_height: Option<usize>,
    pub pool_depth: Option<PoolStats>,
    pub pool_height: Option<PoolStats>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub bev: Tensor,
    pub depth_voxels: Option<VoxelFeature>,
    pub height_voxels: Option<VoxelFeature>,
    pub metrics: PipelineMetrics,
}

fn branch(
    inputs: &GtInputs,
    rig: &CameraRig,
    spec: &PipelineSpec,
    mode: LiftMode,
) -> Result<(VoxelFeature, PoolStats), PipelineError> {
    let (dist, edges) = match mode {
        LiftMode::Depth => (&inputs.depth, &inputs.depth_edges),
        LiftMode::Height => (&inputs.height, &inputs.height_edges),
    };
    Ok(lift_and_pool(
        &inputs.context,
        dist,
        rig,
        edges,
        mode,
        spec.downsample as f64,
        &spec.grid,
    )?)
}

/// Lifts the ground-truth inputs with `lift_rig`, which may differ from the
/// rig that rendered them.
pub fn run_with_rig(
    scene: &Scene,
    inputs: &GtInputs,
    lift_rig: &CameraRig,
    spec: &PipelineSpec,
    weights: &CfsWeights,
) -> Result<PipelineOutput, PipelineError> {
    let need_depth = spec.mode != PipelineMode::HeightOnly;
    let need_height = spec.mode != PipelineMode::DepthOnly;
    let d = need_depth
        .then(|| branch(inputs, lift_rig, spec, LiftMode::Depth))
        .transpose()?;
    let h = need_height
        .then(|| branch(inputs, lift_rig, spec, LiftMode::Height))
        .transpose()?;
    let bev = match (&d, &h) {
        (Some((fd, _)), Some((fh, _))) => cfs_fuse(fd, fh, weights)?,
        (Some((f, _)), None) | (None, Some((f, _))) => f.collapse(),
        (None, None) => unreachable!("every mode lifts at least one branch"),
    };
    let occupancy = occupancy_report(&bev, &scene.boxes, &spec.grid, spec.quantile)?;
    let metrics = PipelineMetrics {
        mode: spec.mode,
        iou: occupancy.iou,
        occupancy,
        n_boxes: scene.boxes.len(),
        rays: inputs.maps.hits.len(),
        ray_hits: inputs.maps.hit_count(),
        hit_cells_depth: d.as_ref().map(|x| x.1.cells_hit),
        hit_cells_height: h.as_ref().map(|x| x.1.cells_hit),
        pool_depth: d.as_ref().map(|x| x.1),
        pool_height: h.as_ref().map(|x| x.1),
    };
    Ok(PipelineOutput {
        bev,
        depth_voxels: d.map(|x| x.0),
        height_voxels: h.map(|x| x.0),
        metrics,
    })
}

pub fn run_pipeline(scene: &Scene, spec: &PipelineSpec, weights: &CfsWeights) -> Result<PipelineOutput, PipelineError> {
    let inputs = GtInputs::new(scene, spec);
    run_with_rig(scene, &inputs, &scene.rig, spec, weights)
}
