//! Analytic ground truth by ray casting against boxes and the ground plane.

use super::scene::{Face, Scene};
use crate::binning::{BinEdges, BinMode};
use crate::lifting::{cell_center, LiftMode, SparseDist};
use crate::tensor::Tensor;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hit {
    Miss,
    Ground,
    Box { index: usize, face: Face },
}

/// Per feature cell ground truth, all `[Hf, Wf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtMaps {
    /// Camera-frame z of the first hit.
    pub depth: Tensor,
    /// Ego z of the first hit.
    pub height: Tensor,
    pub hit_mask: Tensor,
    /// Ground-plane area seen by the cell when it hits a horizontal face
    /// (box top or ground), zero otherwise.
    pub area: Tensor,
    pub hits: Vec<Hit>,
    pub downsample: usize,
}

impl GtMaps {
    pub fn extent(&self) -> (usize, usize) {
        (self.depth.shape()[0], self.depth.shape()[1])
    }

    pub fn hit_count(&self) -> usize {
        self.hits.iter().filter(|h| **h != Hit::Miss).count()
    }
}

/// Feature grid extents for an image downsampled by `ds`.
pub fn feature_extent(scene: &Scene, ds: usize) -> (usize, usize) {
    (scene.image.height / ds, scene.image.width / ds)
}

/// Casts one ray per feature-cell center. The nearest positive hit wins.
pub fn render_gt(scene: &Scene, downsample: usize) -> GtMaps {
    assert!(downsample >= 1, "downsample must be >= 1");
    let (hf, wf) = feature_extent(scene, downsample);
    let rig = &scene.rig;
    let cam = rig.extrinsics().center();
    let k = rig.intrinsics();
    let ds = downsample as f64;
    let pixel_area = ds * ds / (k.fx * k.fy);

    let rows: Vec<Vec<(f32, f32, f32, Hit)>> = (0..hf)
        .into_par_iter()
        .map(|y| {
            (0..wf)
                .map(|x| {
                    let dir = rig.camera.ray_ego(cell_center(x, ds), cell_center(y, ds));
                    let mut best = (f64::INFINITY, Hit::Miss);
                    if dir.z < 0.0 {
                        best = (-cam.z / dir.z, Hit::Ground);
                    }
                    for (index, b) in scene.boxes.iter().enumerate() {
                        if let Some((t, face)) = b.ray_entry(&cam, &dir) {
                            if t < best.0 {
                                best = (t, Hit::Box { index, face });
                            }
                        }
                    }
                    let (t, hit) = best;
                    let height = match hit {
                        Hit::Miss => return (0.0, 0.0, 0.0, hit),
                        Hit::Ground => 0.0,
                        Hit::Box { index, face: Face::Top } => scene.boxes[index].top(),
                        Hit::Box { .. } => cam.z + t * dir.z,
                    };
                    let horizontal = matches!(hit, Hit::Ground | Hit::Box { face: Face::Top, .. });
                    // the ray carries unit camera-z, so t is the depth and
                    // t²·ds²/(fx·fy·|dir_z|) the footprint on a horizontal plane
                    let area = if horizontal { t * t * pixel_area / dir.z.abs() } else { 0.0 };
                    (t as f32, height as f32, area as f32, hit)
                })
                .collect()
        })
        .collect();

    let n = hf * wf;
    let (mut depth, mut height, mut area, mut hits) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (d, h, a, hit) in rows.into_iter().flatten() {
        depth.push(d);
        height.push(h);
        area.push(a);
        hits.push(hit);
    }
    let mask = hits.iter().map(|h| if *h == Hit::Miss { 0.0 } else { 1.0 }).collect();
    let shape = vec![hf, wf];
    GtMaps {
        depth: Tensor::new(shape.clone(), depth).expect("extents"),
        height: Tensor::new(shape.clone(), height).expect("extents"),
        hit_mask: Tensor::new(shape.clone(), mask).expect("extents"),
        area: Tensor::new(shape, area).expect("extents"),
        hits,
        downsample,
    }
}

/// Bin of each hit cell (clamp mode), `None` for misses.
pub fn gt_bins(maps: &GtMaps, edges: &BinEdges, mode: LiftMode) -> Vec<Option<usize>> {
    let values = match mode {
        LiftMode::Depth => &maps.depth,
        LiftMode::Height => &maps.height,
    };
    maps.hits
        .iter()
        .zip(values.data())
        .map(|(hit, &v)| {
            (*hit != Hit::Miss).then(|| {
                edges
                    .value_to_bin(v as f64, BinMode::Clamp)
                    .expect("clamp lookup is total")
                    .index
            })
        })
        .collect()
}

/// One-hot depth and height distributions; miss cells are all-zero.
pub fn gt_distributions(maps: &GtMaps, depth_edges: &BinEdges, height_edges: &BinEdges) -> (Tensor, Tensor) {
    (
        gt_sparse(maps, depth_edges, LiftMode::Depth).to_dense(),
        gt_sparse(maps, height_edges, LiftMode::Height).to_dense(),
    )
}

pub fn gt_sparse(maps: &GtMaps, edges: &BinEdges, mode: LiftMode) -> SparseDist {
    let (hf, wf) = maps.extent();
    SparseDist::one_hot(edges.n_bins(), hf, wf, &gt_bins(maps, edges, mode))
}

/// Context carrying the footprint area of box-top cells in every channel.
/// Ground and side hits carry nothing.
pub fn gt_context(maps: &GtMaps, channels: usize) -> Tensor {
    let (hf, wf) = maps.extent();
    let plane: Vec<f32> = maps
        .hits
        .iter()
        .zip(maps.area.data())
        .map(|(hit, &a)| match hit {
            Hit::Box { face: Face::Top, .. } => a,
            _ => 0.0,
        })
        .collect();
    let mut data = Vec::with_capacity(channels * plane.len());
    for _ in 0..channels {
        data.extend_from_slice(&plane);
    }
    Tensor::new(vec![channels, hf, wf], data).expect("extents")
}
