//! Cuboid scenes: boxes, ray intersection, and the seeded scene generator.

use super::polygon::{intersection_area, Point2};
use crate::bevfusion::GridSpec;
use crate::geometry::{CameraRig, EgoPoint};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("placed {placed} of {requested} boxes before {MAX_REJECTIONS} consecutive rejections")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Yawed cuboid; `(x, y, z)` is the bottom center in ego meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

/// Face of a box hit by a ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Top,
    Bottom,
    Side,
}

impl Box3D {
    pub fn new(p: [f64; 7]) -> Result<Self, SceneError> {
        let [x, y, z, l, w, h, theta] = p;
        if !p.iter().all(|v| v.is_finite()) || l <= 0.0 || w <= 0.0 || h <= 0.0 {
            return Err(SceneError::InvalidBox(format!("{p:?}")));
        }
        if !(-PI..PI).contains(&theta) {
            return Err(SceneError::InvalidBox(format!("theta {theta} outside [-pi, pi)")));
        }
        Ok(Self { x, y, z, l, w, h, theta })
    }

    pub fn params(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.l, self.w, self.h, self.theta]
    }

    pub fn top(&self) -> f64 {
        self.z + self.h
    }

    /// Box-local `(along length, along width)` offset to ego xy.
    pub fn local_to_ego(&self, a: f64, b: f64) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * a - s * b, self.y + s * a + c * b]
    }

    pub fn ego_to_local(&self, x: f64, y: f64) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Counter-clockwise ground footprint.
    pub fn footprint(&self) -> [Point2; 4] {
        let (a, b) = (self.l / 2.0, self.w / 2.0);
        [
            self.local_to_ego(a, b),
            self.local_to_ego(-a, b),
            self.local_to_ego(-a, -b),
            self.local_to_ego(a, -b),
        ]
    }

    pub fn corners(&self) -> Vec<EgoPoint> {
        let fp = self.footprint();
        [self.z, self.top()]
            .iter()
            .flat_map(|&z| fp.iter().map(move |p| EgoPoint::new(p[0], p[1], z)))
            .collect()
    }

    /// Nearest positive entry along `origin + t·dir`, by the slab method in
    /// the box frame.
    pub fn ray_entry(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Face)> {
        let [ox, oy] = self.ego_to_local(origin.x, origin.y);
        let (s, c) = self.theta.sin_cos();
        let o = [ox, oy, origin.z - self.z - self.h / 2.0];
        let d = [c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z];
        let half = [self.l / 2.0, self.w / 2.0, self.h / 2.0];
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut enter_axis = 0;
        for a in 0..3 {
            if d[a] == 0.0 {
                if o[a].abs() > half[a] {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((-half[a] - o[a]) / d[a], (half[a] - o[a]) / d[a]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            if ta > t0 {
                t0 = ta;
                enter_axis = a;
            }
            t1 = t1.min(tb);
        }
        if t0 > t1 || t0 <= 0.0 {
            return None;
        }
        let face = match enter_axis {
            2 if d[2] < 0.0 => Face::Top,
            2 => Face::Bottom,
            _ => Face::Side,
        };
        Some((t0, face))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub boxes: Vec<Box3D>,
    pub rig: CameraRig,
    pub image: ImageSize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    boxes: Vec<[f64; 7]>,
}

impl Scene {
    pub fn new(boxes: Vec<Box3D>, rig: CameraRig, image: ImageSize) -> Self {
        Self { boxes, rig, image }
    }

    pub fn from_json(text: &str, rig: CameraRig, image: ImageSize) -> Result<Self, SceneError> {
        let raw: SceneJson = serde_json::from_str(text)?;
        let boxes = raw.boxes.into_iter().map(Box3D::new).collect::<Result<_, _>>()?;
        Ok(Self::new(boxes, rig, image))
    }

    pub fn boxes_json(&self) -> String {
        let raw = SceneJson {
            boxes: self.boxes.iter().map(Box3D::params).collect(),
        };
        serde_json::to_string(&raw).expect("finite box parameters serialize")
    }
}

fn in_image(rig: &CameraRig, image: ImageSize, p: &EgoPoint) -> bool {
    match rig.project(p) {
        Ok((u, v, d)) => d > 0.0 && u >= 0.0 && v >= 0.0 && u < image.width as f64 && v < image.height as f64,
        Err(_) => false,
    }
}

/// 5×5 sample points on the top face of `b`.
fn top_samples(b: &Box3D) -> impl Iterator<Item = Vector3<f64>> + '_ {
    (0..25).map(move |i| {
        let a = ((i % 5) as f64 + 0.5) / 5.0 - 0.5;
        let c = ((i / 5) as f64 + 0.5) / 5.0 - 0.5;
        let [x, y] = b.local_to_ego(a * b.l, c * b.w);
        Vector3::new(x, y, b.top())
    })
}

/// Whether `occluder` blocks the camera's view of any top sample of `b`.
fn blocks_top(cam: &Vector3<f64>, occluder: &Box3D, b: &Box3D) -> bool {
    top_samples(b).any(|p| {
        let dir = p - cam;
        matches!(occluder.ray_entry(cam, &dir), Some((t, _)) if t < 1.0 - 1e-9)
    })
}

/// `n_boxes` car-sized boxes inside the grid, with disjoint footprints, fully
/// inside the image, and unoccluded top faces.
pub fn synth_scene(
    seed: u64,
    n_boxes: usize,
    rig: &CameraRig,
    image: ImageSize,
    grid: &GridSpec,
) -> Result<Scene, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = rig.extrinsics().center();
    let mut boxes: Vec<Box3D> = Vec::with_capacity(n_boxes);
    while boxes.len() < n_boxes {
        let mut rejections = 0;
        loop {
            let l = rng.random_range(3.5..=5.5);
            let w = rng.random_range(1.6..=2.1);
            let h = rng.random_range(1.4..=1.8);
            let x = rng.random_range(grid.x_range[0]..grid.x_range[1]);
            let y = rng.random_range(grid.y_range[0]..grid.y_range[1]);
            let theta = rng.random_range(-PI..PI);
            let b = Box3D { x, y, z: 0.0, l, w, h, theta };
            let inside_grid = b.footprint().iter().all(|p| {
                p[0] >= grid.x_range[0] && p[0] < grid.x_range[1] && p[1] >= grid.y_range[0] && p[1] < grid.y_range[1]
            });
            let ok = inside_grid
                && b.top() < rig.cam_height
                && b.corners().iter().all(|p| in_image(rig, image, p))
                && boxes
                    .iter()
                    .all(|o| intersection_area(&o.footprint(), &b.footprint()) == 0.0)
                && boxes
                    .iter()
                    .all(|o| !blocks_top(&cam, o, &b) && !blocks_top(&cam, &b, o));
            if ok {
                boxes.push(b);
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(SceneError::PlacementFailure {
                    placed: boxes.len(),
                    requested: n_boxes,
                });
            }
        }
    }
    Ok(Scene::new(boxes, *rig, image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_rig, Extrinsics, Intrinsics};
    use approx::assert_abs_diff_eq;

    fn rig() -> CameraRig {
        make_rig(
            Intrinsics::new(2000.0, 2000.0, 768.0, 432.0).unwrap(),
            Extrinsics::pitched(20.0, 7.0),
        )
        .unwrap()
    }

    const IMAGE: ImageSize = ImageSize { width: 1536, height: 864 };

    #[test]
    fn footprint_of_rotated_box() {
        let b = Box3D::new([1.0, 2.0, 0.0, 4.0, 2.0, 1.5, PI / 2.0]).unwrap();
        let fp = b.footprint();
        assert_abs_diff_eq!(fp[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fp[0][1], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(super::super::polygon::area(&fp), 8.0, epsilon = 1e-12);
        assert!(Box3D::new([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, PI]).is_err());
        assert!(Box3D::new([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn ray_slab_entry() {
        let b = Box3D::new([0.0, 10.0, 0.0, 4.0, 2.0, 1.5, 0.0]).unwrap();
        let o = Vector3::new(0.0, 0.0, 1.0);
        let (t, face) = b.ray_entry(&o, &Vector3::new(0.0, 1.0, 0.0)).unwrap();
        // box spans y ∈ [9, 11] because its length runs along x
        assert_abs_diff_eq!(t, 9.0, epsilon = 1e-12);
        assert_eq!(face, Face::Side);
        let (t, face) = b.ray_entry(&Vector3::new(0.5, 10.0, 5.0), &Vector3::new(0.0, 0.0, -2.0)).unwrap();
        assert_abs_diff_eq!(t, 1.75, epsilon = 1e-12);
        assert_eq!(face, Face::Top);
        assert!(b.ray_entry(&o, &Vector3::new(0.0, -1.0, 0.0)).is_none());
        assert!(b.ray_entry(&Vector3::new(0.0, 10.0, 1.0), &Vector3::new(0.0, 1.0, 0.0)).is_none());
    }

    #[test]
    fn empty_and_deterministic() {
        let g = GridSpec::default();
        assert!(synth_scene(1, 0, &rig(), IMAGE, &g).unwrap().boxes.is_empty());
        let a = synth_scene(3, 6, &rig(), IMAGE, &g).unwrap();
        let b = synth_scene(3, 6, &rig(), IMAGE, &g).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.boxes, synth_scene(4, 6, &rig(), IMAGE, &g).unwrap().boxes);
    }

    #[test]
    fn seed_seven_has_disjoint_footprints() {
        let s = synth_scene(7, 20, &rig(), IMAGE, &GridSpec::default()).unwrap();
        assert_eq!(s.boxes.len(), 20);
        for (i, a) in s.boxes.iter().enumerate() {
            assert!(a.corners().iter().all(|p| in_image(&rig(), IMAGE, p)));
            for b in &s.boxes[i + 1..] {
                assert_eq!(intersection_area(&a.footprint(), &b.footprint()), 0.0);
            }
        }
    }

    #[test]
    fn impossible_placement_fails() {
        let tiny = ImageSize { width: 4, height: 4 };
        let err = synth_scene(1, 1, &rig(), tiny, &GridSpec::default()).unwrap_err();
        assert!(matches!(err, SceneError::PlacementFailure { placed: 0, requested: 1 }));
    }

    #[test]
    fn json_round_trip() {
        let s = synth_scene(2, 3, &rig(), IMAGE, &GridSpec::default()).unwrap();
        let back = Scene::from_json(&s.boxes_json(), rig(), IMAGE).unwrap();
        assert_eq!(back, s);
        assert!(Scene::from_json(r#"{"boxes":[[0,0,0,1,1]]}"#, rig(), IMAGE).is_err());
    }
}
