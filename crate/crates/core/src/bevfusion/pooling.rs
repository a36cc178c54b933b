//! Partial-pillar voxel pooling.

use crate::binning::BinEdges;
use crate::geometry::CameraRig;
use crate::lifting::{cell_center, lift_sample, FrustumCloud, LiftError, LiftMode, SparseDist};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub cell: f64,
    pub z_range: [f64; 2],
    pub n_z_fine: usize,
    pub reduction_r: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_range: [-51.2, 51.2],
            y_range: [0.0, 102.4],
            cell: 0.8,
            z_range: [-1.5, 3.0],
            n_z_fine: 8,
            reduction_r: 2,
        }
    }
}

fn cells_in(span: f64, cell: f64) -> Option<usize> {
    let n = (span / cell).round();
    ((n * cell - span).abs() <= 1e-9 && n >= 1.0).then_some(n as usize)
}

impl GridSpec {
    pub fn with_cell(cell: f64) -> Self {
        Self {
            cell,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::Invalid(m));
        for (name, r) in [("x", self.x_range), ("y", self.y_range), ("z", self.z_range)] {
            if !(r[1] > r[0] && r[0].is_finite() && r[1].is_finite()) {
                return bad(format!("{name}_range {r:?} must have positive length"));
            }
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return bad(format!("cell must be positive, got {}", self.cell));
        }
        for (name, r) in [("x", self.x_range), ("y", self.y_range)] {
            if cells_in(r[1] - r[0], self.cell).is_none() {
                return bad(format!("cell {} does not divide {name}_range {r:?}", self.cell));
            }
        }
        if self.n_z_fine == 0 || self.reduction_r == 0 || !self.n_z_fine.is_multiple_of(self.reduction_r) {
            return bad(format!(
                "n_z_fine {} must be a positive multiple of reduction_r {}",
                self.n_z_fine, self.reduction_r
            ));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        cells_in(self.x_range[1] - self.x_range[0], self.cell).expect("validated grid")
    }

    pub fn ny(&self) -> usize {
        cells_in(self.y_range[1] - self.y_range[0], self.cell).expect("validated grid")
    }

    /// Coarse slab count `Zc`.
    pub fn nz(&self) -> usize {
        self.n_z_fine / self.reduction_r
    }

    pub fn dz_fine(&self) -> f64 {
        (self.z_range[1] - self.z_range[0]) / self.n_z_fine as f64
    }

    /// Center of BEV cell `(iy, ix)` in ego meters.
    pub fn cell_center(&self, iy: usize, ix: usize) -> (f64, f64) {
        (
            self.x_range[0] + (ix as f64 + 0.5) * self.cell,
            self.y_range[0] + (iy as f64 + 0.5) * self.cell,
        )
    }

    /// BEV cell holding `(x, y)`, left-closed and right-open.
    pub fn bev_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = axis_index(x, self.x_range[0], self.cell, self.nx())?;
        let iy = axis_index(y, self.y_range[0], self.cell, self.ny())?;
        Some((iy, ix))
    }

    /// `(z_coarse, y, x)` voxel of an ego point.
    pub fn voxel_of(&self, p: [f32; 3]) -> Option<(usize, usize, usize)> {
        let (iy, ix) = self.bev_cell(p[0] as f64, p[1] as f64)?;
        let fine = axis_index(p[2] as f64, self.z_range[0], self.dz_fine(), self.n_z_fine)?;
        Some((fine / self.reduction_r, iy, ix))
    }

    /// The same grid collapsed to a single height slab.
    pub fn pillar(&self) -> Self {
        Self {
            reduction_r: self.n_z_fine,
            ..*self
        }
    }
}

#[inline]
fn axis_index(v: f64, lo: f64, step: f64, n: usize) -> Option<usize> {
    if !v.is_finite() || v < lo {
        return None;
    }
    let i = ((v - lo) / step).floor() as usize;
    (i < n).then_some(i)
}

/// Pooled features `[Zc, C, Y, X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeature {
    pub data: Tensor,
    pub grid: GridSpec,
}

impl VoxelFeature {
    pub fn new(data: Tensor, grid: GridSpec) -> Result<Self, GridError> {
        let s = data.shape();
        if s.len() != 4 || s[0] != grid.nz() || s[2] != grid.ny() || s[3] != grid.nx() {
            return Err(GridError::Invalid(format!(
                "voxel tensor {s:?} does not match grid [{}, C, {}, {}]",
                grid.nz(),
                grid.ny(),
                grid.nx()
            )));
        }
        Ok(Self { data, grid })
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    /// Sum over height slabs, `[C, Y, X]`.
    pub fn collapse(&self) -> Tensor {
        let s = self.data.shape();
        let vol = s[1] * s[2] * s[3];
        let mut acc = vec![0f64; vol];
        for z in 0..s[0] {
            for (a, &v) in acc.iter_mut().zip(&self.data.data()[z * vol..(z + 1) * vol]) {
                *a += v as f64;
            }
        }
        Tensor::new(vec![s[1], s[2], s[3]], acc.into_iter().map(|v| v as f32).collect())
            .expect("collapsed extents")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolStats {
    /// Frustum points visited.
    pub points: usize,
    /// Points with a valid lift.
    pub valid: usize,
    /// Valid points scattered into the grid.
    pub pooled: usize,
    /// Valid points outside the grid.
    pub dropped: usize,
    /// BEV cells that received at least one point.
    pub cells_hit: usize,
}

struct Accumulator {
    grid: GridSpec,
    c: usize,
    plane: usize,
    acc: Vec<f64>,
    touched: Vec<bool>,
    stats: PoolStats,
}

impl Accumulator {
    fn new(grid: &GridSpec, c: usize) -> Self {
        let plane = grid.ny() * grid.nx();
        Self {
            grid: *grid,
            c,
            plane,
            acc: vec![0f64; grid.nz() * c * plane],
            touched: vec![false; plane],
            stats: PoolStats::default(),
        }
    }

    #[inline]
    fn scatter(&mut self, p: [f32; 3], feat: impl Iterator<Item = f32>) {
        self.stats.valid += 1;
        match self.grid.voxel_of(p) {
            Some((z, y, x)) => {
                self.stats.pooled += 1;
                self.touched[y * self.grid.nx() + x] = true;
                let base = z * self.c * self.plane + y * self.grid.nx() + x;
                for (ch, f) in feat.enumerate() {
                    self.acc[base + ch * self.plane] += f as f64;
                }
            }
            None => self.stats.dropped += 1,
        }
    }

    fn finish(mut self) -> (VoxelFeature, PoolStats) {
        self.stats.cells_hit = self.touched.iter().filter(|&&t| t).count();
        let shape = vec![self.grid.nz(), self.c, self.grid.ny(), self.grid.nx()];
        let data = Tensor::new(shape, self.acc.into_iter().map(|v| v as f32).collect())
            .expect("accumulator extents");
        (VoxelFeature { data, grid: self.grid }, self.stats)
    }
}

/// Sum-scatters every unmasked frustum point into its voxel, visiting
/// points in `(n, y, x)` order.
pub fn voxel_pool(cloud: &FrustumCloud, grid: &GridSpec) -> (VoxelFeature, PoolStats) {
    let (n, c) = (cloud.n_bins(), cloud.channels());
    let (h, w) = cloud.spatial();
    let hw = h * w;
    let coords = cloud.coords.data();
    let feats = cloud.feats.data();
    let mut acc = Accumulator::new(grid, c);
    for k in 0..n {
        for pix in 0..hw {
            let i = k * hw + pix;
            acc.stats.points += 1;
            if !cloud.mask[i] {
                continue;
            }
            let p = [coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]];
            let base = k * c * hw + pix;
            acc.scatter(p, (0..c).map(|ch| feats[base + ch * hw]));
        }
    }
    acc.finish()
}

/// Lifting and pooling fused over a sparse distribution. Pooled values
/// are bit-identical to `voxel_pool(lift_frustum(..))` on the dense
/// equivalent; the stats only count stored (nonzero) entries.
pub fn lift_and_pool(
    context: &Tensor,
    dist: &SparseDist,
    rig: &CameraRig,
    edges: &BinEdges,
    mode: LiftMode,
    downsample: f64,
    grid: &GridSpec,
) -> Result<(VoxelFeature, PoolStats), LiftError> {
    let cs = context.shape();
    if cs.len() != 3 || cs[1] != dist.height || cs[2] != dist.width || dist.n_bins != edges.n_bins() {
        return Err(LiftError::ShapeMismatch(format!(
            "context {cs:?}, distribution [{}, {}, {}], {} bins",
            dist.n_bins,
            dist.height,
            dist.width,
            edges.n_bins()
        )));
    }
    let (c, w) = (cs[0], dist.width);
    let hw = dist.height * w;
    let ctx = context.data();
    let mut acc = Accumulator::new(grid, c);
    for (k, value) in edges.centers().into_iter().enumerate() {
        for &(pix, p) in &dist.by_bin[k] {
            let pix = pix as usize;
            acc.stats.points += 1;
            let (u, v) = (cell_center(pix % w, downsample), cell_center(pix / w, downsample));
            let Some(pt) = lift_sample(rig, mode, u, v, value) else {
                continue;
            };
            let pt = [pt.x as f32, pt.y as f32, pt.z as f32];
            acc.scatter(pt, (0..c).map(|ch| ctx[ch * hw + pix] * p));
        }
    }
    Ok(acc.finish())
}

/// Pools an explicit point list, `feats` row-major `[N, C]`.
pub fn pool_points(points: &[[f32; 3]], feats: &[f32], grid: &GridSpec) -> (VoxelFeature, PoolStats) {
    let c = if points.is_empty() { 0 } else { feats.len() / points.len() };
    let mut acc = Accumulator::new(grid, c);
    for (i, p) in points.iter().enumerate() {
        acc.stats.points += 1;
        acc.scatter(*p, feats[i * c..(i + 1) * c].iter().copied());
    }
    acc.finish()
}
