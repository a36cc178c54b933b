//! Calibration noise and the Monte-Carlo robustness harness.

use super::pipeline::{run_with_rig, GtInputs, PipelineError, PipelineSpec};
use super::scene::Scene;
use crate::bevfusion::CfsWeights;
use crate::geometry::{pitch_matrix, roll_matrix, CameraRig, Extrinsics, GeometryError, Intrinsics};
use crate::report::Table;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const MAX_REDRAWS: usize = 100;
pub const MIN_FOCAL_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Standard deviation of the focal scale around 1.
    pub focal_sigma: f64,
    /// Standard deviation of roll and pitch offsets, degrees.
    pub angle_sigma_deg: f64,
    pub focal: bool,
    pub roll: bool,
    pub pitch: bool,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            focal_sigma: 0.2,
            angle_sigma_deg: 1.67,
            focal: true,
            roll: true,
            pitch: true,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.focal_sigma >= 0.0 && self.angle_sigma_deg >= 0.0) {
            return Err(format!(
                "noise sigmas must be non-negative, got focal {} and angle {}",
                self.focal_sigma, self.angle_sigma_deg
            ));
        }
        Ok(())
    }

    pub fn with_factors(&self, f: Factors) -> Self {
        Self {
            focal: f.focal,
            roll: f.roll,
            pitch: f.pitch,
            ..*self
        }
    }
}

/// One draw of every factor, whether enabled or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub focal_scale: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
}

/// Draws for trial `trial`. Each trial has its own ChaCha8 stream and
/// always draws focal, roll, pitch in that order, so factor subsets of the
/// same trial see the same numbers.
fn draws(spec: &NoiseSpec, trial: u64) -> impl Iterator<Item = NoiseDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial);
    let s = *spec;
    std::iter::repeat_with(move || {
        let zf: f64 = rng.sample(StandardNormal);
        let zr: f64 = rng.sample(StandardNormal);
        let zp: f64 = rng.sample(StandardNormal);
        NoiseDraw {
            focal_scale: (1.0 + s.focal_sigma * zf).max(MIN_FOCAL_SCALE),
            roll_deg: s.angle_sigma_deg * zr,
            pitch_deg: s.angle_sigma_deg * zp,
        }
    })
}

pub fn apply_draw(rig: &CameraRig, spec: &NoiseSpec, d: &NoiseDraw) -> Result<CameraRig, GeometryError> {
    let k = *rig.intrinsics();
    let e = *rig.extrinsics();
    let intr = if spec.focal {
        Intrinsics::new(k.fx * d.focal_scale, k.fy * d.focal_scale, k.cx, k.cy)?
    } else {
        k
    };
    let mut rotation = e.rotation;
    if spec.pitch {
        rotation *= pitch_matrix(d.pitch_deg);
    }
    if spec.roll {
        rotation *= roll_matrix(d.roll_deg);
    }
    rig.with_calibration(intr, Extrinsics::new(rotation, e.translation))
}

/// Mis-calibrated copy of `rig` for trial `trial`. Disabled factors are
/// left untouched.
pub fn perturb_rig(rig: &CameraRig, spec: &NoiseSpec, trial: u64) -> Result<CameraRig, GeometryError> {
    let mut last = None;
    for d in draws(spec, trial).take(MAX_REDRAWS) {
        match apply_draw(rig, spec, &d) {
            Ok(r) => return Ok(r),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

pub fn noise_draw(spec: &NoiseSpec, trial: u64) -> NoiseDraw {
    draws(spec, trial).next().expect("infinite stream")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Factors {
    pub focal: bool,
    pub roll: bool,
    pub pitch: bool,
}

impl Factors {
    pub const NONE: Factors = Factors { focal: false, roll: false, pitch: false };
    pub const ALL: Factors = Factors { focal: true, roll: true, pitch: true };

    /// Rows of the robustness table.
    pub const ROWS: [(&'static str, Factors); 5] = [
        ("none", Factors::NONE),
        ("focal", Factors { focal: true, roll: false, pitch: false }),
        ("roll", Factors { focal: false, roll: true, pitch: false }),
        ("pitch", Factors { focal: false, roll: false, pitch: true }),
        ("all", Factors::ALL),
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub factors: String,
    pub trials: usize,
    pub mean_iou: f64,
    pub std_iou: f64,
    pub min_iou: f64,
    pub max_iou: f64,
    pub ious: Vec<f64>,
}

/// Lifts the true-rig distributions with perturbed rigs and summarizes the
/// occupancy IoU per factor subset. A scene without boxes scores 0.
pub fn robustness_sweep(
    scene: &Scene,
    spec: &PipelineSpec,
    weights: &CfsWeights,
    noise: &NoiseSpec,
    n_trials: usize,
) -> Result<Vec<RobustnessRow>, PipelineError> {
    assert!(n_trials >= 1, "robustness sweep needs at least one trial");
    let inputs = GtInputs::new(scene, spec).foreground_only();
    let mut rows = Vec::new();
    for (name, factors) in Factors::ROWS {
        let ns = noise.with_factors(factors);
        let mut ious = Vec::with_capacity(n_trials);
        for trial in 0..n_trials as u64 {
            let rig = perturb_rig(&scene.rig, &ns, trial)?;
            let out = run_with_rig(scene, &inputs, &rig, spec, weights)?;
            ious.push(out.metrics.iou.unwrap_or(0.0));
        }
        let n = ious.len() as f64;
        let mean = ious.iter().sum::<f64>() / n;
        let var = ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        rows.push(RobustnessRow {
            factors: name.to_string(),
            trials: n_trials,
            mean_iou: mean,
            std_iou: var.sqrt(),
            min_iou: ious.iter().copied().fold(f64::INFINITY, f64::min),
            max_iou: ious.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ious,
        });
    }
    Ok(rows)
}

pub fn robustness_table(rows: &[RobustnessRow]) -> Table {
    let mut t = Table::new(&["factors", "trials", "mean_iou", "std_iou", "min_iou", "max_iou"]);
    for r in rows {
        t.push(vec![
            r.factors.as_str().into(),
            r.trials.into(),
            r.mean_iou.into(),
            r.std_iou.into(),
            r.min_iou.into(),
            r.max_iou.into(),
        ]);
    }
    t
}
