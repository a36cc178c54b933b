//! Two-stage complementary feature selection between depth- and
//! height-lifted voxel features.

use super::pooling::VoxelFeature;
use crate::tensor::{
    channel_pool, conv3d, global_pool3d, mlp_apply, Activation, Dense, Padding, PoolMode, Tensor, TensorError,
};
use crate::weights::{uniform_tensor, WeightStore, WeightsError, TOY_WEIGHT_BOUND};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default hidden-layer reduction of the channel MLP.
pub const CHANNEL_REDUCTION: usize = 4;
pub const SPATIAL_KERNEL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfsDims {
    /// Channels of each input branch.
    pub channels: usize,
    pub c_out: usize,
    /// Height slabs `Zc`.
    pub slabs: usize,
}

impl CfsDims {
    pub fn hidden(&self) -> usize {
        (2 * self.channels / CHANNEL_REDUCTION).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfsWeights {
    pub dims: CfsDims,
    /// `2C → hidden`, relu.
    pub w1: Dense,
    /// `hidden → C`.
    pub w2: Dense,
    /// `[1, 2, 7, 7, 7]`.
    pub conv7: Tensor,
    /// Scalar added before the stage-two sigmoid.
    pub conv7_bias: f32,
    /// `[C_out, C, Zc, 1, 1]`.
    pub fuse_kernel: Tensor,
    pub fuse_bias: Tensor,
    pub seed: Option<u64>,
}

impl CfsWeights {
    pub fn zeros(dims: CfsDims) -> Self {
        let k = SPATIAL_KERNEL;
        Self {
            dims,
            w1: Dense::zeros(2 * dims.channels, dims.hidden(), Activation::Relu),
            w2: Dense::zeros(dims.hidden(), dims.channels, Activation::None),
            conv7: Tensor::zeros(&[1, 2, k, k, k]),
            conv7_bias: 0.0,
            fuse_kernel: Tensor::zeros(&[dims.c_out, dims.channels, dims.slabs, 1, 1]),
            fuse_bias: Tensor::zeros(&[dims.c_out]),
            seed: None,
        }
    }

    /// `U(−0.1, 0.1)` entries; the stage-two bias and the fuse bias stay zero.
    pub fn seeded(dims: CfsDims, seed: u64) -> Self {
        let mut w = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in [
            &mut w.w1.weight,
            &mut w.w1.bias,
            &mut w.w2.weight,
            &mut w.w2.bias,
            &mut w.conv7,
            &mut w.fuse_kernel,
        ] {
            let shape = t.shape().to_vec();
            *t = uniform_tensor(&mut rng, &shape, TOY_WEIGHT_BOUND);
        }
        w.seed = Some(seed);
        w
    }

    pub fn to_store(&self) -> WeightStore {
        let mut s = WeightStore::new("cfs");
        s.insert("w1.weight", self.w1.weight.clone());
        s.insert("w1.bias", self.w1.bias.clone());
        s.insert("w2.weight", self.w2.weight.clone());
        s.insert("w2.bias", self.w2.bias.clone());
        s.insert("conv7", self.conv7.clone());
        s.insert("conv7_bias", Tensor::scalar_vec(&[self.conv7_bias]));
        s.insert("fuse_kernel", self.fuse_kernel.clone());
        s.insert("fuse_bias", self.fuse_bias.clone());
        s
    }

    pub fn from_store(dims: CfsDims, mut s: WeightStore) -> Result<Self, WeightsError> {
        let z = Self::zeros(dims);
        let mut take = |role: &str, like: &Tensor| s.take(role, like.shape());
        Ok(Self {
            w1: Dense {
                weight: take("w1.weight", &z.w1.weight)?,
                bias: take("w1.bias", &z.w1.bias)?,
                activation: Activation::Relu,
            },
            w2: Dense {
                weight: take("w2.weight", &z.w2.weight)?,
                bias: take("w2.bias", &z.w2.bias)?,
                activation: Activation::None,
            },
            conv7: take("conv7", &z.conv7)?,
            conv7_bias: take("conv7_bias", &Tensor::zeros(&[1]))?.data()[0],
            fuse_kernel: take("fuse_kernel", &z.fuse_kernel)?,
            fuse_bias: take("fuse_bias", &z.fuse_bias)?,
            dims,
            seed: None,
        })
    }
}

fn check_pair(fd: &VoxelFeature, fh: &VoxelFeature, w: &CfsWeights) -> Result<(), TensorError> {
    let s = fd.data.shape();
    if s != fh.data.shape() || fd.grid != fh.grid {
        return Err(TensorError::ShapeMismatch(format!(
            "depth branch {:?} vs height branch {:?}",
            s,
            fh.data.shape()
        )));
    }
    if s[0] != w.dims.slabs || s[1] != w.dims.channels {
        return Err(TensorError::ShapeMismatch(format!(
            "voxel features {s:?} do not match weights ({} slabs, {} channels)",
            w.dims.slabs, w.dims.channels
        )));
    }
    Ok(())
}

/// `a·x + (1 − a)·y` in f64. Rounds back to `x` exactly when `x == y`.
#[inline]
fn blend(a: f32, x: f32, y: f32) -> f32 {
    let a = a as f64;
    (a * x as f64 + (1.0 - a) * y as f64) as f32
}

/// Channel-wise global selection. Returns `f1 [Zc, C, Y, X]` and `a1 [C]`.
pub fn cfs_stage1(fd: &VoxelFeature, fh: &VoxelFeature, w: &CfsWeights) -> Result<(Tensor, Tensor), TensorError> {
    check_pair(fd, fh, w)?;
    let cat = Tensor::concat(&[&fd.data, &fh.data], 1)?.permute(&[1, 0, 2, 3])?;
    let layers = [w.w1.clone(), w.w2.clone()];
    let g_a = mlp_apply(&global_pool3d(&cat, PoolMode::Avg)?, &layers)?;
    let g_m = mlp_apply(&global_pool3d(&cat, PoolMode::Max)?, &layers)?;
    let a1 = g_a.add(&g_m)?.sigmoid();
    let s = fd.data.shape();
    let plane = s[2] * s[3];
    let (d, h) = (fd.data.data(), fh.data.data());
    let data = (0..d.len())
        .map(|i| blend(a1.data()[(i / plane) % s[1]], d[i], h[i]))
        .collect();
    Ok((Tensor::new(s.to_vec(), data)?, a1))
}

/// Voxel-wise local selection. Returns `f2 [Zc, C, Y, X]` and `a2 [Zc, Y, X]`.
pub fn cfs_stage2(
    f1: &Tensor,
    fd: &VoxelFeature,
    fh: &VoxelFeature,
    w: &CfsWeights,
) -> Result<(Tensor, Tensor), TensorError> {
    check_pair(fd, fh, w)?;
    let s = fd.data.shape();
    if f1.shape() != s {
        return Err(TensorError::ShapeMismatch(format!(
            "stage-one output {:?} vs voxel features {s:?}",
            f1.shape()
        )));
    }
    let pooled = channel_pool(&f1.permute(&[1, 0, 2, 3])?)?;
    let logits = conv3d(&pooled, &w.conv7, [1, 1, 1], Padding::Same)?;
    let b = w.conv7_bias;
    let a2 = logits.map(|v| v + b).sigmoid().reshape(vec![s[0], s[2], s[3]])?;
    let plane = s[2] * s[3];
    let c_plane = s[1] * plane;
    let (d, h) = (fd.data.data(), fh.data.data());
    let data = (0..d.len())
        .map(|i| blend(a2.data()[(i / c_plane) * plane + i % plane], d[i], h[i]))
        .collect();
    Ok((Tensor::new(s.to_vec(), data)?, a2))
}

/// Intermediates of one fusion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CfsOutput {
    pub f1: Tensor,
    pub a1: Tensor,
    pub f2: Tensor,
    pub a2: Tensor,
    /// `[C_out, Y, X]`.
    pub bev: Tensor,
}

pub fn cfs_forward(fd: &VoxelFeature, fh: &VoxelFeature, w: &CfsWeights) -> Result<CfsOutput, TensorError> {
    let (f1, a1) = cfs_stage1(fd, fh, w)?;
    let (f2, a2) = cfs_stage2(&f1, fd, fh, w)?;
    let bev = collapse_height(&f1.add(&f2)?, w)?;
    Ok(CfsOutput { f1, a1, f2, a2, bev })
}

/// Full fusion to a BEV map `[C_out, Y, X]`.
pub fn cfs_fuse(fd: &VoxelFeature, fh: &VoxelFeature, w: &CfsWeights) -> Result<Tensor, TensorError> {
    Ok(cfs_forward(fd, fh, w)?.bev)
}

/// Strided height convolution collapsing `Zc` slabs to one.
pub fn collapse_height(v: &Tensor, w: &CfsWeights) -> Result<Tensor, TensorError> {
    let s = v.shape().to_vec();
    if s.len() != 4 {
        return Err(TensorError::ShapeMismatch(format!("expected [Zc, C, Y, X], got {s:?}")));
    }
    if w.fuse_kernel.shape()[2] != s[0] {
        return Err(TensorError::ShapeMismatch(format!(
            "fuse kernel spans {} slabs, input has {}",
            w.fuse_kernel.shape()[2],
            s[0]
        )));
    }
    let out = conv3d(&v.permute(&[1, 0, 2, 3])?, &w.fuse_kernel, [s[0], 1, 1], Padding::Valid)?;
    let c_out = out.shape()[0];
    let plane = s[2] * s[3];
    let mut out = out.reshape(vec![c_out, s[2], s[3]])?;
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += w.fuse_bias.data()[i / plane];
    }
    Ok(out)
}
