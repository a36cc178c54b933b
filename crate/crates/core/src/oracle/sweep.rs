//! Placement error of a single car under depth or height quantization.

use crate::binning::{BinEdges, BinMode};
use crate::geometry::{make_rig, CameraRig, EgoPoint, Extrinsics, GeometryError, Intrinsics};
use crate::lifting::LiftMode;
use crate::report::Table;

/// Length, width, height of the reference car.
pub const UNIT_CAR: [f64; 3] = [4.5, 1.8, 1.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// Ground distance ahead of the camera.
    pub distance: f64,
    pub cam_height: f64,
    pub true_value: f64,
    pub quantized_value: f64,
    /// Horizontal distance between the lifted and the true roof center.
    pub placement_error: f64,
    /// Worst-case horizontal error from half a bin at this pixel.
    pub bound: f64,
}

/// Quantizes the roof center of a car `distance` meters straight ahead and
/// lifts it back.
pub fn placement_error(rig: &CameraRig, distance: f64, mode: LiftMode, edges: &BinEdges) -> Result<SweepRow, GeometryError> {
    let c = rig.extrinsics().center();
    let roof = EgoPoint::new(c.x, c.y + distance, UNIT_CAR[2]);
    let (u, v, depth) = rig.project(&roof)?;
    let true_value = match mode {
        LiftMode::Depth => depth,
        LiftMode::Height => roof.z,
    };
    let lookup = edges
        .value_to_bin(true_value, BinMode::Clamp)
        .expect("clamp lookup is total");
    let q = edges.bin_center(lookup.index).expect("index from lookup");
    let half = 0.5 * edges.width(lookup.index).expect("index from lookup");
    let ray = rig.camera.ray_ego(u, v);
    let horizontal = ray.xy().norm();
    let (lifted, bound) = match mode {
        LiftMode::Depth => (rig.lift_depth(u, v, q)?, half * horizontal),
        // each meter of height moves the point horizontal/|dz| meters
        LiftMode::Height => (rig.lift_height(u, v, q)?, half * horizontal / ray.z.abs()),
    };
    let err = ((lifted.x - roof.x).powi(2) + (lifted.y - roof.y).powi(2)).sqrt();
    Ok(SweepRow {
        distance,
        cam_height: rig.cam_height,
        true_value,
        quantized_value: q,
        placement_error: err,
        bound,
    })
}

pub fn range_sweep(rig: &CameraRig, distances: &[f64], mode: LiftMode, edges: &BinEdges) -> Result<Vec<SweepRow>, GeometryError> {
    distances.iter().map(|&d| placement_error(rig, d, mode, edges)).collect()
}

/// Same car at a fixed distance, seen from cameras at several heights with
/// the same intrinsics and pitch.
pub fn height_sweep(
    intrinsics: Intrinsics,
    pitch_deg: f64,
    heights: &[f64],
    distance: f64,
    mode: LiftMode,
    edges: &BinEdges,
) -> Result<Vec<SweepRow>, GeometryError> {
    heights
        .iter()
        .map(|&h| {
            let rig = make_rig(intrinsics, Extrinsics::pitched(pitch_deg, h))?;
            placement_error(&rig, distance, mode, edges)
        })
        .collect()
}

/// `distance, cam_height, true_value, quantized_value, placement_error, bound`
/// plus `error_increase`, the change from the previous row.
pub fn sweep_table(mode: LiftMode, rows: &[SweepRow]) -> Table {
    let mut t = Table::new(&[
        "mode",
        "distance",
        "cam_height",
        "true_value",
        "quantized_value",
        "placement_error",
        "bound",
        "error_increase",
    ]);
    let name = mode.to_string();
    for (i, r) in rows.iter().enumerate() {
        let inc = if i == 0 { 0.0 } else { r.placement_error - rows[i - 1].placement_error };
        t.push(vec![
            name.as_str().into(),
            r.distance.into(),
            r.cam_height.into(),
            r.true_value.into(),
            r.quantized_value.into(),
            r.placement_error.into(),
            r.bound.into(),
            inc.into(),
        ]);
    }
    t
}
