//! Fuse two random voxel volumes and inspect both attention maps.

use bevlift::bevfusion::{cfs_forward, CfsDims, CfsWeights, GridSpec, VoxelFeature};
use bevlift::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec { x_range: [-6.4, 6.4], y_range: [0.0, 12.8], ..GridSpec::default() };
    let shape = [grid.nz(), 4, grid.ny(), grid.nx()];
    let fd = VoxelFeature::new(Tensor::from_fn(&shape, |i| (i % 7) as f32 / 7.0), grid)?;
    let fh = VoxelFeature::new(Tensor::from_fn(&shape, |i| (i % 5) as f32 / 5.0), grid)?;
    let w = CfsWeights::seeded(CfsDims { channels: 4, c_out: 8, slabs: grid.nz() }, 3);
    let out = cfs_forward(&fd, &fh, &w)?;
    println!("channel weights {:?}", out.a1.data());
    let a2 = out.a2.data();
    let mean = a2.iter().map(|&v| v as f64).sum::<f64>() / a2.len() as f64;
    println!("spatial weights {:?}, mean {mean:.4}", out.a2.shape());
    println!("bev {:?}", out.bev.shape());
    Ok(())
}
