//! Synthetic scene through all three lifting modes.

use bevlift::bevfusion::CfsWeights;
use bevlift::oracle::{default_rig, run_pipeline, synth_scene, PipelineMode, PipelineSpec, DEFAULT_IMAGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rig = default_rig();
    let base = PipelineSpec::default();
    let scene = synth_scene(7, 20, &rig, DEFAULT_IMAGE, &base.grid)?;
    let weights = CfsWeights::seeded(base.cfs_dims(4), 7);
    for mode in PipelineMode::ALL {
        let spec = PipelineSpec { mode, ..base };
        let m = run_pipeline(&scene, &spec, &weights)?.metrics;
        println!(
            "{:<12} iou {:.4}  active {} truth {} intersection {}",
            mode.name(),
            m.iou.unwrap_or(0.0),
            m.occupancy.active_cells,
            m.occupancy.truth_cells,
            m.occupancy.intersection
        );
    }
    Ok(())
}
