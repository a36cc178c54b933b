//! Synthetic scenes with exact ground truth, and the metrics and sweeps
//! built on them.

mod metrics;
mod noise;
mod pipeline;
mod polygon;
mod render;
mod scene;
mod sweep;

pub use metrics::{
    bev_occupancy_iou, cell_norms, footprint_coverage, occupancy_report, quantile, truth_cells,
    voxel_occupancy_iou, OccupancyReport, DEFAULT_QUANTILE,
};
pub use pipeline::{
    run_pipeline, run_with_rig, GtInputs, PipelineError, PipelineMetrics, PipelineMode, PipelineOutput,
    PipelineSpec,
};
pub use noise::{
    apply_draw, noise_draw, perturb_rig, robustness_sweep, robustness_table, Factors, NoiseDraw, NoiseSpec,
    RobustnessRow, MAX_REDRAWS, MIN_FOCAL_SCALE,
};
pub use polygon::{area as polygon_area, clip_convex, intersection_area, Point2};
pub use render::{feature_extent, gt_bins, gt_context, gt_distributions, gt_sparse, render_gt, GtMaps, Hit};
pub use scene::{synth_scene, Box3D, Face, ImageSize, Scene, SceneError, MAX_REJECTIONS};

pub use sweep::{height_sweep, placement_error, range_sweep, sweep_table, SweepRow, UNIT_CAR};

use crate::geometry::{make_rig, CameraRig, Extrinsics, Intrinsics};

/// Image of the default roadside camera.
pub const DEFAULT_IMAGE: ImageSize = ImageSize {
    width: 1536,
    height: 864,
};

/// Roadside camera 7 m up, pitched 20° down, 2000 px focal length.
pub fn default_rig() -> CameraRig {
    make_rig(
        Intrinsics::new(2000.0, 2000.0, 768.0, 432.0).expect("valid intrinsics"),
        Extrinsics::pitched(20.0, 7.0),
    )
    .expect("valid extrinsics")
}
