//! Camera model, coordinate frames, and the two lifting transforms.
//!
//! Frames used throughout the crate:
//!
//! * **ego**: x right, y forward, z up, origin on the ground plane.
//! * **camera**: x right, y down, z forward (pinhole convention).
//! * **vertical**: origin at the optical center, Y pointing straight down
//!   toward the ground, Z along the horizontal projection of the optical axis.
//!
//! All geometry is evaluated in `f64`; feature tensors stay `f32`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality tolerance accepted by [`make_rig`].
pub const ORTHONORMAL_TOL: f64 = 1e-6;
const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max deviation {0:.3e})")]
    NonOrthonormalRotation(f64),
    #[error("camera center at z = {0} m is not above the ground plane")]
    CameraBelowGround(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("negative depth {0} m")]
    NegativeDepth(f64),
    #[error("viewing ray is parallel to the horizontal plane")]
    RayParallelToPlane,
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("plane at height {h} m has no forward intersection from a camera at {cam_height} m")]
    AbovePlaneDegenerate { h: f64, cam_height: f64 },
    #[error("outside the domain of the sensitivity formula: {0}")]
    DomainError(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must be finite".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Normalized camera ray `I⁻¹ [u, v, 1]ᵀ` (unit camera-z component).
    #[inline]
    pub fn backproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Scales both focal lengths, keeping the principal point.
    pub fn scaled_focal(&self, scale: f64) -> Self {
        Self {
            fx: self.fx * scale,
            fy: self.fy * scale,
            ..*self
        }
    }
}

/// Camera-to-ego rigid transform: `p_ego = R p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// A forward-looking roadside camera at `cam_height` meters above the
    /// ego origin, pitched `pitch_deg` degrees below the horizon.
    pub fn pitched(pitch_deg: f64, cam_height: f64) -> Self {
        let p = pitch_deg.to_radians();
        let x_cam = Vector3::new(1.0, 0.0, 0.0);
        let z_cam = Vector3::new(0.0, p.cos(), -p.sin());
        let y_cam = z_cam.cross(&x_cam);
        let rotation = Matrix3::from_columns(&[x_cam, y_cam, z_cam]);
        Self::new(rotation, Vector3::new(0.0, 0.0, cam_height))
    }

    /// Largest entry of `|RᵀR − I|` and `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = self.rotation.transpose() * self.rotation;
        let dev = (rtr - Matrix3::identity()).abs().max();
        dev.max((self.rotation.determinant() - 1.0).abs())
    }

    /// Camera center in ego coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }
}

/// Rotation + translation pair applied as `R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_inverse(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EgoPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn distance(&self, other: &EgoPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

impl From<Vector3<f64>> for EgoPoint {
    fn from(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Pinhole camera without the derived vertical frame. Depth lifting and
/// projection need nothing more, so they also work for rigs whose center is
/// not above the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
}

impl PinholeCamera {
    pub fn new(intrinsics: Intrinsics, extrinsics: Extrinsics) -> Self {
        Self {
            intrinsics,
            extrinsics,
        }
    }

    /// Viewing ray in ego coordinates, scaled so that its camera-z component is 1.
    #[inline]
    pub fn ray_ego(&self, u: f64, v: f64) -> Vector3<f64> {
        self.extrinsics.rotation * self.intrinsics.backproject(u, v)
    }

    /// `R I⁻¹ [u d, v d, d]ᵀ + t`.
    pub fn lift_depth(&self, u: f64, v: f64, d: f64) -> Result<EgoPoint> {
        if d < 0.0 || d.is_nan() {
            return Err(GeometryError::NegativeDepth(d));
        }
        Ok(self.lift_depth_unchecked(u, v, d).into())
    }

    #[inline]
    pub(crate) fn lift_depth_unchecked(&self, u: f64, v: f64, d: f64) -> Vector3<f64> {
        self.ray_ego(u, v) * d + self.extrinsics.translation
    }

    /// Exact inverse of [`PinholeCamera::lift_depth`]: returns `(u, v, d)`.
    pub fn project(&self, p: &EgoPoint) -> Result<(f64, f64, f64)> {
        let pc = self.extrinsics.rotation.transpose() * (p.to_vector() - self.extrinsics.translation);
        if pc.z <= 0.0 {
            return Err(GeometryError::BehindCamera);
        }
        let k = &self.intrinsics;
        Ok((k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy, pc.z))
    }
}

/// A calibrated camera together with the vertical frame used by height lifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub camera: PinholeCamera,
    /// Height of the optical center above the ego ground plane.
    pub cam_height: f64,
    pub cam_to_vertical: Matrix3<f64>,
    pub vertical_to_ego: RigidTransform,
}

/// Validates the calibration and derives the vertical frame.
pub fn make_rig(intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<CameraRig> {
    let err = extrinsics.orthonormality_error();
    if !(err <= ORTHONORMAL_TOL) {
        return Err(GeometryError::NonOrthonormalRotation(err));
    }
    let center = extrinsics.center();
    if !(center.z > 0.0) {
        return Err(GeometryError::CameraBelowGround(center.z));
    }

    let r = &extrinsics.rotation;
    // Horizontal heading: optical axis, falling back to the image-down and
    // image-right axes for cameras looking straight up or down.
    let heading = [r.column(2), r.column(1), r.column(0)]
        .into_iter()
        .map(|c| Vector3::new(c[0], c[1], 0.0))
        .find(|h| h.norm() > 1e-9)
        .expect("an orthonormal basis always has a non-vertical axis");
    let z_ver = heading.normalize();
    let y_ver = Vector3::new(0.0, 0.0, -1.0);
    let x_ver = y_ver.cross(&z_ver);
    let ver_to_ego = Matrix3::from_columns(&[x_ver, y_ver, z_ver]);

    Ok(CameraRig {
        camera: PinholeCamera::new(intrinsics, extrinsics),
        cam_height: center.z,
        cam_to_vertical: ver_to_ego.transpose() * r,
        vertical_to_ego: RigidTransform {
            rotation: ver_to_ego,
            translation: center,
        },
    })
}

impl CameraRig {
    pub fn intrinsics(&self) -> &Intrinsics {
        &self.camera.intrinsics
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.camera.extrinsics
    }

    pub fn lift_depth(&self, u: f64, v: f64, d: f64) -> Result<EgoPoint> {
        self.camera.lift_depth(u, v, d)
    }

    pub fn project(&self, p: &EgoPoint) -> Result<(f64, f64, f64)> {
        self.camera.project(p)
    }

    /// Ego point on pixel `(u, v)`'s viewing ray at ego height `h`.
    ///
    /// The normalized ray is expressed in the vertical frame, where the drop
    /// from the optical center down to the plane `z = h` is `cam_height − h`;
    /// similar triangles scale the ray by `(cam_height − h) / y_ver`.
    pub fn lift_height(&self, u: f64, v: f64, h: f64) -> Result<EgoPoint> {
        self.lift_height_vec(u, v, h).map(EgoPoint::from)
    }

    pub(crate) fn lift_height_vec(&self, u: f64, v: f64, h: f64) -> Result<Vector3<f64>> {
        let r_ver = self.cam_to_vertical * self.camera.intrinsics.backproject(u, v);
        let y_ver = r_ver.y;
        if y_ver.abs() < PARALLEL_TOL * r_ver.norm() {
            return Err(GeometryError::RayParallelToPlane);
        }
        let drop = self.cam_height - h;
        if drop <= 0.0 && !(drop < 0.0 && y_ver < 0.0) {
            return Err(GeometryError::AbovePlaneDegenerate {
                h,
                cam_height: self.cam_height,
            });
        }
        let scale = drop / y_ver;
        if scale <= 0.0 {
            return Err(GeometryError::BehindCamera);
        }
        Ok(self.vertical_to_ego.apply(&(r_ver * scale)))
    }

    pub fn ego_to_vertical(&self, p: &EgoPoint) -> Vector3<f64> {
        self.vertical_to_ego.apply_inverse(&p.to_vector())
    }

    pub fn vertical_to_ego_point(&self, p: &Vector3<f64>) -> EgoPoint {
        self.vertical_to_ego.apply(p).into()
    }

    /// Same rig with different intrinsics/extrinsics, re-deriving the frames.
    pub fn with_calibration(&self, intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<Self> {
        make_rig(intrinsics, extrinsics)
    }
}

/// Top/bottom depth difference of an object of height `h` seen at distance
/// `distance` by a camera mounted at `cam_height`: `D − √(D² − 2Hh + h²)`.
pub fn delta_d(distance: f64, cam_height: f64, h: f64) -> Result<f64> {
    if !(distance > 0.0 && cam_height > 0.0 && h >= 0.0) {
        return Err(GeometryError::DomainError(format!(
            "need D > 0, H > 0, h >= 0 (D={distance}, H={cam_height}, h={h})"
        )));
    }
    let radicand = distance * distance - 2.0 * cam_height * h + h * h;
    if radicand < 0.0 {
        return Err(GeometryError::DomainError(format!(
            "negative radicand {radicand}"
        )));
    }
    Ok(distance - radicand.sqrt())
}

/// `∂(d/h)/∂H = −(1/h) [(D/h)² − 2H/h + 1]^(−1/2)`.
pub fn dh_sensitivity(distance: f64, cam_height: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(GeometryError::DomainError(format!("need h > 0, got {h}")));
    }
    let ratio = distance / h;
    let radicand = ratio * ratio - 2.0 * cam_height / h + 1.0;
    if !(radicand > 0.0) {
        return Err(GeometryError::DomainError(format!(
            "non-positive radicand {radicand}"
        )));
    }
    Ok(-1.0 / (h * radicand.sqrt()))
}

/// JSON form of a rig: `{"fx","fy","cx","cy","R":[9 row-major],"t":[3]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "t")]
    pub translation: [f64; 3],
}

impl RigJson {
    pub fn from_rig(rig: &CameraRig) -> Self {
        let k = rig.intrinsics();
        let e = rig.extrinsics();
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = e.rotation[(r, c)];
            }
        }
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation,
            translation: [e.translation.x, e.translation.y, e.translation.z],
        }
    }

    pub fn to_rig(&self) -> Result<CameraRig> {
        let intr = Intrinsics::new(self.fx, self.fy, self.cx, self.cy)?;
        let rotation = Matrix3::from_row_slice(&self.rotation);
        let t = Vector3::from_column_slice(&self.translation);
        make_rig(intr, Extrinsics::new(rotation, t))
    }
}

/// Rotation about the camera z (optical) axis.
pub fn roll_matrix(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about the camera x axis.
pub fn pitch_matrix(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}
