//! Voxel pooling and complementary fusion of the two lifted branches.

mod cfs;
mod pooling;

pub use cfs::{
    cfs_forward, cfs_fuse, cfs_stage1, cfs_stage2, collapse_height, CfsDims, CfsOutput, CfsWeights,
    CHANNEL_REDUCTION, SPATIAL_KERNEL,
};
pub use pooling::{lift_and_pool, pool_points, voxel_pool, GridError, GridSpec, PoolStats, VoxelFeature};
