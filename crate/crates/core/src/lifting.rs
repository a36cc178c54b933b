//! Camera-aware hybrid lifting: camera encoding, distribution and context
//! heads, and frustum construction in depth or height mode.
//!
//! The heads are small seeded networks standing in for trained ones. Every
//! pipeline invariant here holds for any weights.

use crate::binning::BinEdges;
use crate::geometry::CameraRig;
use crate::tensor::{
    mlp_apply, outer_lift, pointwise_linear, Activation, Dense, Tensor, TensorError,
};
use crate::weights::{uniform_tensor, WeightStore, WeightsError, TOY_WEIGHT_BOUND};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 12 extrinsic + 9 intrinsic entries.
pub const CAMERA_CODE_LEN: usize = 21;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftMode {
    Depth,
    Height,
}

impl std::fmt::Display for LiftMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LiftMode::Depth => "depth",
            LiftMode::Height => "height",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDims {
    /// Image feature channels `C`.
    pub c_feat: usize,
    pub c_cam: usize,
    pub c_ctx: usize,
    pub n_depth: usize,
    pub n_height: usize,
}

/// Per-pixel linear head `[out, in]` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearHead {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn apply(&self, t: &Tensor) -> Result<Tensor, TensorError> {
        pointwise_linear(t, &self.weight, &self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHeadWeights {
    pub dims: HeadDims,
    pub cam_mlp: Vec<Dense>,
    pub se_depth: Vec<Dense>,
    pub se_height: Vec<Dense>,
    pub se_context: Vec<Dense>,
    pub head_depth: LinearHead,
    pub head_height: LinearHead,
    pub head_context: LinearHead,
    pub seed: Option<u64>,
}

impl ToyHeadWeights {
    pub fn zeros(dims: HeadDims) -> Self {
        let HeadDims {
            c_feat,
            c_cam,
            c_ctx,
            n_depth,
            n_height,
        } = dims;
        Self {
            dims,
            cam_mlp: vec![
                Dense::zeros(CAMERA_CODE_LEN, c_cam, Activation::Relu),
                Dense::zeros(c_cam, c_cam, Activation::None),
            ],
            se_depth: vec![Dense::zeros(c_cam, c_feat, Activation::None)],
            se_height: vec![Dense::zeros(c_cam, c_feat, Activation::None)],
            se_context: vec![Dense::zeros(c_cam, c_feat, Activation::None)],
            head_depth: LinearHead::zeros(c_feat, n_depth),
            head_height: LinearHead::zeros(c_feat, n_height),
            head_context: LinearHead::zeros(c_feat, c_ctx),
            seed: None,
        }
    }

    /// All entries `U(−0.1, 0.1)` from a ChaCha8 stream, drawn in the order
    /// the roles are listed by [`ToyHeadWeights::to_store`].
    pub fn seeded(dims: HeadDims, seed: u64) -> Self {
        let mut w = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in w.tensors_mut() {
            let shape = t.shape().to_vec();
            *t = uniform_tensor(&mut rng, &shape, TOY_WEIGHT_BOUND);
        }
        w.seed = Some(seed);
        w
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        let groups: [(&str, &mut Vec<Dense>); 4] = [
            ("cam_mlp", &mut self.cam_mlp),
            ("se_depth", &mut self.se_depth),
            ("se_height", &mut self.se_height),
            ("se_context", &mut self.se_context),
        ];
        for (name, layers) in groups {
            for (i, l) in layers.iter_mut().enumerate() {
                out.push((format!("{name}.{i}.weight"), &mut l.weight));
                out.push((format!("{name}.{i}.bias"), &mut l.bias));
            }
        }
        let heads: [(&str, &mut LinearHead); 3] = [
            ("head_depth", &mut self.head_depth),
            ("head_height", &mut self.head_height),
            ("head_context", &mut self.head_context),
        ];
        for (name, h) in heads {
            out.push((format!("{name}.weight"), &mut h.weight));
            out.push((format!("{name}.bias"), &mut h.bias));
        }
        out
    }

    pub fn to_store(&self) -> WeightStore {
        let mut store = WeightStore::new("toy_heads");
        let mut copy = self.clone();
        for (role, t) in copy.tensors_mut() {
            store.insert(role, t.clone());
        }
        store
    }

    pub fn from_store(dims: HeadDims, mut store: WeightStore) -> Result<Self, WeightsError> {
        let mut w = Self::zeros(dims);
        for (role, t) in w.tensors_mut() {
            let shape = t.shape().to_vec();
            *t = store.take(&role, &shape)?;
        }
        Ok(w)
    }
}

/// Fixed-scale camera code: rotation raw, translation / 100, focal and
/// principal point / 1000, the constant row of `I` as-is.
pub fn camera_code(rig: &CameraRig) -> Tensor {
    let e = rig.extrinsics();
    let k = rig.intrinsics();
    let mut v = Vec::with_capacity(CAMERA_CODE_LEN);
    for r in 0..3 {
        for c in 0..3 {
            v.push(e.rotation[(r, c)] as f32);
        }
    }
    v.extend(e.translation.iter().map(|&t| (t / 100.0) as f32));
    v.extend_from_slice(&[
        (k.fx / 1000.0) as f32,
        0.0,
        (k.cx / 1000.0) as f32,
        0.0,
        (k.fy / 1000.0) as f32,
        (k.cy / 1000.0) as f32,
        0.0,
        0.0,
        1.0,
    ]);
    Tensor::scalar_vec(&v)
}

pub fn encode_camera(rig: &CameraRig, w: &ToyHeadWeights) -> Result<Tensor, LiftError> {
    Ok(mlp_apply(&camera_code(rig), &w.cam_mlp)?)
}

fn gated(feat: &Tensor, f_cam: &Tensor, se: &[Dense]) -> Result<Tensor, LiftError> {
    if feat.rank() != 3 {
        return Err(LiftError::ShapeMismatch(format!(
            "image features must be [C, H, W], got {:?}",
            feat.shape()
        )));
    }
    let gates = mlp_apply(f_cam, se)?.sigmoid();
    Ok(feat.scale_channels(&gates)?)
}

/// Depth and height distributions, softmax-normalized over the bin axis.
pub fn predict_distributions(
    feat: &Tensor,
    f_cam: &Tensor,
    w: &ToyHeadWeights,
) -> Result<(Tensor, Tensor), LiftError> {
    let d = w.head_depth.apply(&gated(feat, f_cam, &w.se_depth)?)?;
    let h = w.head_height.apply(&gated(feat, f_cam, &w.se_height)?)?;
    Ok((d.softmax_axis(0)?, h.softmax_axis(0)?))
}

pub fn build_context(feat: &Tensor, f_cam: &Tensor, w: &ToyHeadWeights) -> Result<Tensor, LiftError> {
    Ok(w.head_context.apply(&gated(feat, f_cam, &w.se_context)?)?)
}

/// Pixel coordinate of feature cell `i` at the given downsampling factor.
#[inline]
pub fn cell_center(i: usize, downsample: f64) -> f64 {
    downsample * (i as f64 + 0.5)
}

/// Ego coordinates of one frustum sample, `None` if height lifting fails.
#[inline]
pub(crate) fn lift_sample(rig: &CameraRig, mode: LiftMode, u: f64, v: f64, value: f64) -> Option<Vector3<f64>> {
    match mode {
        LiftMode::Depth => Some(rig.camera.lift_depth_unchecked(u, v, value)),
        LiftMode::Height => rig.lift_height_vec(u, v, value).ok(),
    }
}

/// Frustum-shaped point cloud: one point per (bin, feature cell).
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumCloud {
    /// `[N, Hf, Wf, 3]` ego xyz.
    pub coords: Tensor,
    /// `[N, C, Hf, Wf]`.
    pub feats: Tensor,
    /// `N · Hf · Wf` validity bits in `(n, y, x)` order.
    pub mask: Vec<bool>,
    pub mode: LiftMode,
    pub bin_values: Vec<f64>,
}

impl FrustumCloud {
    pub fn n_bins(&self) -> usize {
        self.feats.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.feats.shape()[1]
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.feats.shape()[2], self.feats.shape()[3])
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_tensor(&self) -> Tensor {
        let (h, w) = self.spatial();
        Tensor::new(
            vec![self.n_bins(), h, w],
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask length matches frustum extents")
    }

    /// Reassembles a cloud from its serialized tensors.
    pub fn from_parts(coords: Tensor, feats: Tensor, mask: &Tensor, mode: LiftMode) -> Result<Self, LiftError> {
        let fs = feats.shape();
        let ok = fs.len() == 4
            && coords.shape() == [fs[0], fs[2], fs[3], 3]
            && mask.shape() == [fs[0], fs[2], fs[3]];
        if !ok {
            return Err(LiftError::ShapeMismatch(format!(
                "coords {:?}, feats {:?}, mask {:?}",
                coords.shape(),
                fs,
                mask.shape()
            )));
        }
        Ok(Self {
            mask: mask.data().iter().map(|&v| v != 0.0).collect(),
            coords,
            feats,
            mode,
            bin_values: Vec::new(),
        })
    }
}

/// Lifts `context ⊗ dist` into ego space at the bin centers of `edges`.
pub fn lift_frustum(
    context: &Tensor,
    dist: &Tensor,
    rig: &CameraRig,
    edges: &BinEdges,
    mode: LiftMode,
    downsample: f64,
) -> Result<FrustumCloud, LiftError> {
    if dist.rank() != 3 || dist.shape()[0] != edges.n_bins() {
        return Err(LiftError::ShapeMismatch(format!(
            "distribution {:?} does not match {} bins",
            dist.shape(),
            edges.n_bins()
        )));
    }
    let feats = outer_lift(context, dist)?;
    let (n, h, w) = (dist.shape()[0], dist.shape()[1], dist.shape()[2]);
    let centers = edges.centers();
    let mut coords = vec![0f32; n * h * w * 3];
    let mut mask = vec![false; n * h * w];
    for (k, &value) in centers.iter().enumerate() {
        for y in 0..h {
            let v = cell_center(y, downsample);
            for x in 0..w {
                let u = cell_center(x, downsample);
                let i = (k * h + y) * w + x;
                if let Some(p) = lift_sample(rig, mode, u, v, value) {
                    mask[i] = true;
                    coords[i * 3] = p.x as f32;
                    coords[i * 3 + 1] = p.y as f32;
                    coords[i * 3 + 2] = p.z as f32;
                }
            }
        }
    }
    Ok(FrustumCloud {
        coords: Tensor::new(vec![n, h, w, 3], coords)?,
        feats,
        mask,
        mode,
        bin_values: centers,
    })
}

/// Distribution stored per bin as `(pixel, weight)` lists in increasing
/// pixel order, dropping zero entries. Iterating bins then entries visits
/// points in the same `(n, y, x)` order as the dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDist {
    pub n_bins: usize,
    pub height: usize,
    pub width: usize,
    pub by_bin: Vec<Vec<(u32, f32)>>,
}

impl SparseDist {
    pub fn from_dense(dist: &Tensor) -> Result<Self, LiftError> {
        if dist.rank() != 3 {
            return Err(LiftError::ShapeMismatch(format!(
                "distribution must be [N, H, W], got {:?}",
                dist.shape()
            )));
        }
        let (n, h, w) = (dist.shape()[0], dist.shape()[1], dist.shape()[2]);
        let hw = h * w;
        let by_bin = (0..n)
            .map(|k| {
                dist.data()[k * hw..(k + 1) * hw]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(i, &p)| (i as u32, p))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_bins: n,
            height: h,
            width: w,
            by_bin,
        })
    }

    /// One-hot per pixel; `None` pixels carry no mass.
    pub fn one_hot(n_bins: usize, height: usize, width: usize, index: &[Option<usize>]) -> Self {
        assert_eq!(index.len(), height * width);
        let mut by_bin = vec![Vec::new(); n_bins];
        for (pix, bin) in index.iter().enumerate() {
            if let Some(b) = bin {
                by_bin[*b].push((pix as u32, 1.0));
            }
        }
        Self {
            n_bins,
            height,
            width,
            by_bin,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let hw = self.height * self.width;
        let mut t = Tensor::zeros(&[self.n_bins, self.height, self.width]);
        for (k, entries) in self.by_bin.iter().enumerate() {
            for &(pix, p) in entries {
                t.data_mut()[k * hw + pix as usize] = p;
            }
        }
        t
    }

    /// Drops every entry whose pixel fails `keep`.
    pub fn retain_pixels(&mut self, keep: impl Fn(usize) -> bool) {
        for entries in &mut self.by_bin {
            entries.retain(|&(pix, _)| keep(pix as usize));
        }
    }

    pub fn nnz(&self) -> usize {
        self.by_bin.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{DepthBinSpec, HeightBinSpec};
    use crate::geometry::{make_rig, Extrinsics, Intrinsics};
    use rand::Rng;

    fn dims() -> HeadDims {
        HeadDims {
            c_feat: 6,
            c_cam: 8,
            c_ctx: 5,
            n_depth: 12,
            n_height: 9,
        }
    }

    fn rig() -> CameraRig {
        make_rig(
            Intrinsics::new(200.0, 200.0, 32.0, 24.0).unwrap(),
            Extrinsics::pitched(20.0, 7.0),
        )
        .unwrap()
    }

    fn features(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[dims().c_feat, h, w], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn camera_encoding_is_deterministic() {
        let w = ToyHeadWeights::seeded(dims(), 42);
        let a = encode_camera(&rig(), &w).unwrap();
        let b = encode_camera(&rig(), &ToyHeadWeights::seeded(dims(), 42)).unwrap();
        assert_eq!(a, b);
        let z = encode_camera(&rig(), &ToyHeadWeights::zeros(dims())).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn camera_encoding_sees_focal_length() {
        let w = ToyHeadWeights::seeded(dims(), 42);
        let r1 = rig();
        let r2 = make_rig(
            Intrinsics::new(900.0, 200.0, 32.0, 24.0).unwrap(),
            Extrinsics::pitched(20.0, 7.0),
        )
        .unwrap();
        assert_ne!(encode_camera(&r1, &w).unwrap(), encode_camera(&r2, &w).unwrap());
    }

    #[test]
    fn distributions_sum_to_one() {
        let w = ToyHeadWeights::seeded(dims(), 3);
        let f_cam = encode_camera(&rig(), &w).unwrap();
        let (d, h) = predict_distributions(&features(1, 4, 5), &f_cam, &w).unwrap();
        for t in [&d, &h] {
            let n = t.shape()[0];
            for p in 0..20 {
                let s: f64 = (0..n).map(|k| t.data()[k * 20 + p] as f64).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_heads_give_uniform() {
        let w = ToyHeadWeights::zeros(dims());
        let f_cam = encode_camera(&rig(), &w).unwrap();
        let (d, h) = predict_distributions(&features(2, 3, 3), &f_cam, &w).unwrap();
        assert!(d.data().iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-7));
        assert!(h.data().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-7));
        let ctx = build_context(&features(2, 3, 3), &f_cam, &w).unwrap();
        assert!(ctx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_context_passthrough() {
        let mut d = dims();
        d.c_ctx = d.c_feat;
        let mut w = ToyHeadWeights::zeros(d);
        w.se_context[0].bias = Tensor::full(&[d.c_feat], 100.0);
        w.head_context.weight = Tensor::from_fn(&[d.c_feat, d.c_feat], |i| {
            if i / d.c_feat == i % d.c_feat { 1.0 } else { 0.0 }
        });
        let f_cam = encode_camera(&rig(), &w).unwrap();
        let feat = features(5, 3, 4);
        assert_eq!(build_context(&feat, &f_cam, &w).unwrap(), feat);
    }

    #[test]
    fn weights_store_round_trip() {
        let w = ToyHeadWeights::seeded(dims(), 9);
        let dir = tempfile::tempdir().unwrap();
        w.to_store().save_dir(dir.path()).unwrap();
        let back = ToyHeadWeights::from_store(dims(), WeightStore::load_dir(dir.path()).unwrap()).unwrap();
        assert_eq!(back.head_height, w.head_height);
        assert_eq!(back.cam_mlp, w.cam_mlp);
        let mut wrong = dims();
        wrong.n_depth = 13;
        assert!(ToyHeadWeights::from_store(wrong, w.to_store()).is_err());
    }

    #[test]
    fn one_hot_single_pixel_frustum() {
        let edges = DepthBinSpec::new(8, 2.0, 18.0).unwrap().edges();
        let ctx = Tensor::new(vec![2, 1, 1], vec![0.5, -1.0]).unwrap();
        let mut dist = Tensor::zeros(&[8, 1, 1]);
        dist.set(&[5, 0, 0], 1.0);
        let cloud = lift_frustum(&ctx, &dist, &rig(), &edges, LiftMode::Depth, 16.0).unwrap();
        let expected = rig().lift_depth(8.0, 8.0, edges.bin_center(5).unwrap()).unwrap();
        let c = &cloud.coords;
        assert_eq!(c.get(&[5, 0, 0, 0]), expected.x as f32);
        assert_eq!(c.get(&[5, 0, 0, 1]), expected.y as f32);
        assert_eq!(c.get(&[5, 0, 0, 2]), expected.z as f32);
        let nonzero: Vec<usize> = (0..8).filter(|&k| cloud.feats.get(&[k, 0, 0, 0]) != 0.0).collect();
        assert_eq!(nonzero, vec![5]);

        let hedges = HeightBinSpec::new(6, -1.0, 2.0, 1.5).unwrap().edges();
        let mut hdist = Tensor::zeros(&[6, 1, 1]);
        hdist.set(&[2, 0, 0], 1.0);
        let hc = lift_frustum(&ctx, &hdist, &rig(), &hedges, LiftMode::Height, 16.0).unwrap();
        let p = rig().lift_height(8.0, 8.0, hedges.bin_center(2).unwrap()).unwrap();
        assert_eq!(hc.coords.get(&[2, 0, 0, 1]), p.y as f32);
    }

    #[test]
    fn depth_coords_match_pointwise_lifting() {
        let edges = DepthBinSpec::new(4, 2.0, 10.0).unwrap().edges();
        let ctx = Tensor::full(&[1, 2, 2], 1.0);
        let dist = Tensor::full(&[4, 2, 2], 0.25);
        let cloud = lift_frustum(&ctx, &dist, &rig(), &edges, LiftMode::Depth, 16.0).unwrap();
        for k in 0..4 {
            for y in 0..2 {
                for x in 0..2 {
                    let p = rig()
                        .lift_depth(16.0 * (x as f64 + 0.5), 16.0 * (y as f64 + 0.5), edges.bin_center(k).unwrap())
                        .unwrap();
                    assert_eq!(cloud.coords.get(&[k, y, x, 0]), p.x as f32);
                    assert_eq!(cloud.coords.get(&[k, y, x, 2]), p.z as f32);
                }
            }
        }
        assert_eq!(cloud.valid_count(), 16);
    }

    #[test]
    fn height_mode_masks_sky() {
        // horizon-level camera: top rows look upward and cannot reach low planes
        let rig = make_rig(
            Intrinsics::new(100.0, 100.0, 32.0, 32.0).unwrap(),
            Extrinsics::pitched(0.0, 7.0),
        )
        .unwrap();
        let edges = HeightBinSpec::new(4, 0.0, 2.0, 1.5).unwrap().edges();
        let ctx = Tensor::full(&[1, 4, 4], 1.0);
        let dist = Tensor::full(&[4, 4, 4], 0.25);
        let cloud = lift_frustum(&ctx, &dist, &rig, &edges, LiftMode::Height, 16.0).unwrap();
        assert_eq!(cloud.valid_count(), 4 * 2 * 4);
        for k in 0..4 {
            for y in 0..2 {
                assert!(!cloud.mask[(k * 4 + y) * 4]);
                assert_eq!(cloud.coords.get(&[k, y, 0, 1]), 0.0);
            }
        }
    }

    #[test]
    fn sparse_dist_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dense = Tensor::from_fn(&[5, 3, 4], |_| if rng.random_bool(0.3) { rng.random() } else { 0.0 });
        let s = SparseDist::from_dense(&dense).unwrap();
        assert_eq!(s.to_dense(), dense);
        let oh = SparseDist::one_hot(3, 1, 2, &[Some(2), None]);
        assert_eq!(oh.to_dense().data(), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
