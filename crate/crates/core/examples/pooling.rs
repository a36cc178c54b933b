//! Scatter a handful of points into the voxel grid.

use bevlift::bevfusion::{pool_points, GridSpec};

fn main() {
    let grid = GridSpec::default();
    let points = [[0.1, 10.0, 0.2], [0.3, 10.2, 0.4], [5.0, 30.0, 2.0], [0.0, -3.0, 0.0]];
    let feats = [1.0, 2.0, 0.5, 9.0];
    let (vox, stats) = pool_points(&points, &feats, &grid);
    println!("grid {} x {} x {} slabs", grid.nx(), grid.ny(), grid.nz());
    println!("{stats:?}");
    let bev = vox.collapse();
    let (iy, ix) = grid.bev_cell(0.1, 10.0).expect("inside grid");
    println!("cell ({iy}, {ix}) holds {}", bev.data()[iy * grid.nx() + ix]);
    println!("total {}", bev.sum_f64());
}
