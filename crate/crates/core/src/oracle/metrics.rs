//! BEV occupancy against rasterized box footprints.

use super::polygon::{intersection_area, square};
use super::scene::Box3D;
use crate::bevfusion::{GridSpec, VoxelFeature};
use crate::tensor::{Tensor, TensorError};
use serde::Serialize;

pub const DEFAULT_QUANTILE: f64 = 0.9;

/// Fraction of each BEV cell `[Y · X]` covered by the union of footprints.
/// Footprints are assumed disjoint; sums are clamped to 1.
pub fn footprint_coverage(boxes: &[Box3D], grid: &GridSpec) -> Vec<f64> {
    let (ny, nx, cell) = (grid.ny(), grid.nx(), grid.cell);
    let mut cov = vec![0f64; ny * nx];
    for b in boxes {
        let fp = b.footprint();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &fp {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let range = |lo: f64, hi: f64, origin: f64, n: usize| {
            let a = ((lo - origin) / cell).floor().max(0.0) as usize;
            let b = (((hi - origin) / cell).ceil().max(0.0) as usize).min(n);
            a..b
        };
        for iy in range(lo[1], hi[1], grid.y_range[0], ny) {
            for ix in range(lo[0], hi[0], grid.x_range[0], nx) {
                let x0 = grid.x_range[0] + ix as f64 * cell;
                let y0 = grid.y_range[0] + iy as f64 * cell;
                cov[iy * nx + ix] += intersection_area(&fp, &square(x0, y0, cell)) / (cell * cell);
            }
        }
    }
    for c in &mut cov {
        *c = c.min(1.0);
    }
    cov
}

/// Cells at least half covered by some footprint.
pub fn truth_cells(boxes: &[Box3D], grid: &GridSpec) -> Vec<bool> {
    footprint_coverage(boxes, grid).into_iter().map(|c| c >= 0.5).collect()
}

/// Per-cell L2 norm over channels of a `[C, Y, X]` map.
pub fn cell_norms(bev: &Tensor) -> Result<Vec<f64>, TensorError> {
    let s = bev.shape();
    if s.len() != 3 {
        return Err(TensorError::ShapeMismatch(format!("BEV map must be [C, Y, X], got {s:?}")));
    }
    let plane = s[1] * s[2];
    let mut sq = vec![0f64; plane];
    for c in 0..s[0] {
        for (a, &v) in sq.iter_mut().zip(&bev.data()[c * plane..(c + 1) * plane]) {
            *a += v as f64 * v as f64;
        }
    }
    Ok(sq.into_iter().map(f64::sqrt).collect())
}

/// Linear-interpolated quantile of unsorted samples.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    Some(if i + 1 < v.len() { v[i] + frac * (v[i + 1] - v[i]) } else { v[i] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyReport {
    /// `None` when there are no truth cells.
    pub iou: Option<f64>,
    /// Activity level at the requested quantile of the nonzero cells.
    pub reference: f64,
    pub nonzero_cells: usize,
    pub active_cells: usize,
    pub truth_cells: usize,
    pub intersection: usize,
}

/// A cell is active when its norm reaches half the activity quantile, the
/// level a cell with full ground coverage reaches.
pub fn occupancy_report(
    bev: &Tensor,
    boxes: &[Box3D],
    grid: &GridSpec,
    threshold_quantile: f64,
) -> Result<OccupancyReport, TensorError> {
    let s = bev.shape();
    if s.len() != 3 || s[1] != grid.ny() || s[2] != grid.nx() {
        return Err(TensorError::ShapeMismatch(format!(
            "BEV map {s:?} does not match grid [C, {}, {}]",
            grid.ny(),
            grid.nx()
        )));
    }
    let norms = cell_norms(bev)?;
    let nonzero: Vec<f64> = norms.iter().copied().filter(|&n| n > 0.0).collect();
    let reference = quantile(&nonzero, threshold_quantile).unwrap_or(0.0);
    let truth = truth_cells(boxes, grid);
    let active: Vec<bool> = norms.iter().map(|&n| n > 0.0 && n >= 0.5 * reference).collect();
    let intersection = active.iter().zip(&truth).filter(|(a, t)| **a && **t).count();
    let (n_active, n_truth) = (
        active.iter().filter(|&&a| a).count(),
        truth.iter().filter(|&&t| t).count(),
    );
    let union = n_active + n_truth - intersection;
    Ok(OccupancyReport {
        iou: (n_truth > 0).then(|| intersection as f64 / union as f64),
        reference,
        nonzero_cells: nonzero.len(),
        active_cells: n_active,
        truth_cells: n_truth,
        intersection,
    })
}

pub fn bev_occupancy_iou(
    bev: &Tensor,
    boxes: &[Box3D],
    grid: &GridSpec,
    threshold_quantile: f64,
) -> Result<Option<f64>, TensorError> {
    Ok(occupancy_report(bev, boxes, grid, threshold_quantile)?.iou)
}

/// Occupancy of a voxel feature after summing its height slabs.
pub fn voxel_occupancy_iou(
    v: &VoxelFeature,
    boxes: &[Box3D],
    threshold_quantile: f64,
) -> Result<Option<f64>, TensorError> {
    bev_occupancy_iou(&v.collapse(), boxes, &v.grid, threshold_quantile)
}
