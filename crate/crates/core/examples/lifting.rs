//! Toy camera-aware heads on a random feature map, lifted both ways.

use bevlift::binning::{DepthBinSpec, HeightBinSpec};
use bevlift::lifting::{build_context, encode_camera, lift_frustum, predict_distributions, HeadDims, LiftMode, ToyHeadWeights};
use bevlift::oracle::default_rig;
use bevlift::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rig = default_rig();
    let depth = DepthBinSpec::new(32, 2.0, 104.4)?.edges();
    let height = HeightBinSpec::new(32, -1.5, 3.0, 1.5)?.edges();
    let dims = HeadDims { c_feat: 8, c_cam: 4, c_ctx: 4, n_depth: 32, n_height: 32 };
    let w = ToyHeadWeights::seeded(dims, 11);

    // 1/64 of the image: 24 x 13.5 rounded down
    let feat = Tensor::from_fn(&[8, 13, 24], |i| ((i * 37 % 101) as f32 / 50.0) - 1.0);
    let f_cam = encode_camera(&rig, &w)?;
    let (d, h) = predict_distributions(&feat, &f_cam, &w)?;
    let ctx = build_context(&feat, &f_cam, &w)?;

    for (mode, dist, edges) in [(LiftMode::Depth, &d, &depth), (LiftMode::Height, &h, &height)] {
        let cloud = lift_frustum(&ctx, dist, &rig, edges, mode, 64.0)?;
        println!("{mode}: {} bins x {:?} pixels, {} valid points", cloud.n_bins(), cloud.spatial(), cloud.valid_count());
    }
    Ok(())
}
