//! Placement error of a quantized car roof by range and by camera height.

use bevlift::binning::{DepthBinSpec, HeightBinSpec};
use bevlift::lifting::LiftMode;
use bevlift::oracle::{default_rig, height_sweep, range_sweep, sweep_table};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rig = default_rig();
    let distances: Vec<f64> = (1..=10).map(|i| i as f64 * 10.0).collect();
    let depth = DepthBinSpec::default().edges();
    let height = HeightBinSpec::default().edges();

    print!("{}", sweep_table(LiftMode::Depth, &range_sweep(&rig, &distances, LiftMode::Depth, &depth)?).to_csv_string());
    print!("{}", sweep_table(LiftMode::Height, &range_sweep(&rig, &distances, LiftMode::Height, &height)?).to_csv_string());

    let rows = height_sweep(*rig.intrinsics(), 20.0, &[5.0, 6.0, 7.0], 50.0, LiftMode::Height, &height)?;
    print!("{}", sweep_table(LiftMode::Height, &rows).to_csv_string());
    Ok(())
}
