//! Occupancy IoU under focal, roll and pitch perturbations.

use bevlift::bevfusion::{CfsWeights, GridSpec};
use bevlift::oracle::{default_rig, robustness_sweep, robustness_table, synth_scene, NoiseSpec, PipelineSpec, DEFAULT_IMAGE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let spec = PipelineSpec { grid: GridSpec::with_cell(0.8), ..PipelineSpec::default() };
    let scene = synth_scene(7, 20, &default_rig(), DEFAULT_IMAGE, &spec.grid)?;
    let weights = CfsWeights::seeded(spec.cfs_dims(4), 7);
    let rows = robustness_sweep(&scene, &spec, &weights, &NoiseSpec::default(), trials)?;
    print!("{}", robustness_table(&rows).to_csv_string());
    Ok(())
}
