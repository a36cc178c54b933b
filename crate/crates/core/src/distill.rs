//! BEV feature distillation: foreground mask, masked feature losses and the
//! score-weighted response loss.

use crate::bevfusion::GridSpec;
use crate::oracle::Box3D;
use crate::tensor::{conv2d, Padding, Tensor, TensorError};
use crate::weights::{WeightStore, WeightsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QFL_BETA: i32 = 2;
pub const SMOOTH_L1_BETA: f64 = 1.0;
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("probability {value} outside [0, 1] in {field}")]
    ProbabilityOutOfRange { field: String, value: f64 },
    #[error("loss component `{name}` is {value}; components must be finite and non-negative")]
    NegativeComponent { name: String, value: f64 },
    #[error("soft label line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// Foreground weights `[Y, X]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMask {
    pub data: Tensor,
    pub grid: GridSpec,
}

impl GaussianMask {
    pub fn scaled(&self, s: f32) -> Self {
        Self {
            data: self.data.scale(s),
            grid: self.grid,
        }
    }
}

/// Rotated Gaussian per box with `σ = extent / 6`, combined by max. The
/// cell holding each box center is set to 1.
pub fn gaussian_mask(boxes: &[Box3D], grid: &GridSpec) -> GaussianMask {
    let (ny, nx) = (grid.ny(), grid.nx());
    let mut m = vec![0f32; ny * nx];
    for b in boxes {
        let (sl, sw) = (b.l / 6.0, b.w / 6.0);
        // 4σ along the long axis bounds the region worth visiting
        let reach = 4.0 * sl.max(sw);
        let ix = |x: f64| ((x - grid.x_range[0]) / grid.cell).floor().clamp(0.0, nx as f64) as usize;
        let iy = |y: f64| ((y - grid.y_range[0]) / grid.cell).floor().clamp(0.0, ny as f64) as usize;
        for y in iy(b.y - reach)..(iy(b.y + reach) + 1).min(ny) {
            for x in ix(b.x - reach)..(ix(b.x + reach) + 1).min(nx) {
                let (cx, cy) = grid.cell_center(y, x);
                let [a, c] = b.ego_to_local(cx, cy);
                let g = (-0.5 * ((a / sl).powi(2) + (c / sw).powi(2))).exp() as f32;
                let cell = &mut m[y * nx + x];
                *cell = cell.max(g);
            }
        }
        if let Some((y, x)) = grid.bev_cell(b.x, b.y) {
            m[y * nx + x] = 1.0;
        }
    }
    GaussianMask {
        data: Tensor::new(vec![ny, nx], m).expect("grid extents"),
        grid: *grid,
    }
}

/// Three channel-preserving 3×3 convolutions with relu between them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterWeights {
    pub kernels: [Tensor; 3],
}

impl AdapterWeights {
    pub fn new(kernels: [Tensor; 3]) -> Result<Self, TensorError> {
        let c = kernels[0].shape().first().copied().unwrap_or(0);
        for k in &kernels {
            let s = k.shape();
            if s.len() != 4 || s[0] != c || s[1] != c || s[2] % 2 == 0 || s[3] % 2 == 0 {
                return Err(TensorError::ShapeMismatch(format!(
                    "adapter kernels must be [C, C, k, k] with odd k, got {s:?}"
                )));
            }
        }
        Ok(Self { kernels })
    }

    pub fn channels(&self) -> usize {
        self.kernels[0].shape()[0]
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let h = conv2d(x, &self.kernels[0], Padding::Same)?.relu();
        let h = conv2d(&h, &self.kernels[1], Padding::Same)?.relu();
        conv2d(&h, &self.kernels[2], Padding::Same)
    }

    pub fn to_store(&self) -> WeightStore {
        let mut s = WeightStore::new("adapter");
        for (i, k) in self.kernels.iter().enumerate() {
            s.insert(format!("conv{i}"), k.clone());
        }
        s
    }

    pub fn from_store(mut s: WeightStore) -> Result<Self, WeightsError> {
        let mut take = |i: usize| {
            let role = format!("conv{i}");
            let dims = s.dims(&role)?.to_vec();
            s.take(&role, &dims)
        };
        let kernels = [take(0)?, take(1)?, take(2)?];
        Ok(Self::new(kernels)?)
    }
}

fn check_features(t: &Tensor, s: &Tensor, mask: &GaussianMask) -> Result<(), DistillError> {
    let ok = t.rank() == 3 && t.shape() == s.shape() && t.shape()[1..] == *mask.data.shape();
    if !ok {
        return Err(TensorError::ShapeMismatch(format!(
            "teacher {:?}, student {:?}, mask {:?}",
            t.shape(),
            s.shape(),
            mask.data.shape()
        ))
        .into());
    }
    Ok(())
}

fn masked_mse(t: &Tensor, s: &Tensor, mask: &GaussianMask) -> f64 {
    let plane = mask.data.len();
    let m = mask.data.data();
    let sum: f64 = t
        .data()
        .iter()
        .zip(s.data())
        .enumerate()
        .map(|(i, (&a, &b))| {
            let d = m[i % plane] as f64 * (a as f64 - b as f64);
            d * d
        })
        .sum();
    sum / t.len() as f64
}

/// Mean of `(M · (T − adapter(S)))²`; `None` means an identity adapter.
pub fn loss_low(
    teacher: &Tensor,
    student: &Tensor,
    mask: &GaussianMask,
    adapter: Option<&AdapterWeights>,
) -> Result<f64, DistillError> {
    check_features(teacher, student, mask)?;
    match adapter {
        Some(a) => {
            let adapted = a.apply(student)?;
            check_features(teacher, &adapted, mask)?;
            Ok(masked_mse(teacher, &adapted, mask))
        }
        None => Ok(masked_mse(teacher, student, mask)),
    }
}

/// [`loss_low`] without an adapter.
pub fn loss_high(teacher: &Tensor, student: &Tensor, mask: &GaussianMask) -> Result<f64, DistillError> {
    loss_low(teacher, student, mask, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftLabel {
    #[serde(rename = "box")]
    pub bbox: [f64; 7],
    pub cls: Vec<f64>,
    pub score: f64,
}

/// One JSON object per non-empty line.
pub fn parse_soft_labels(text: &str) -> Result<Vec<SoftLabel>, DistillError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| DistillError::Json { line: i + 1, source }))
        .collect()
}

pub fn smooth_l1(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d < SMOOTH_L1_BETA {
        0.5 * d * d / SMOOTH_L1_BETA
    } else {
        d - 0.5 * SMOOTH_L1_BETA
    }
}

/// Quality focal loss `−|y − σ|²·[(1 − y)·ln(1 − σ) + y·ln σ]`.
pub fn qfl(y: f64, sigma: f64) -> f64 {
    let s = sigma.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let focal = (y - s).abs().powi(QFL_BETA);
    -focal * ((1.0 - y) * (1.0 - s).ln() + y * s.ln())
}

fn check_prob(field: &str, v: f64) -> Result<(), DistillError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(DistillError::ProbabilityOutOfRange {
            field: field.to_string(),
            value: v,
        });
    }
    Ok(())
}

/// `Σ_i s_i · (SmoothL1(b_t, b_s) + QFL(c_t, c_s))` over index-aligned pairs.
pub fn response_loss(
    teacher: &[SoftLabel],
    student_boxes: &[[f64; 7]],
    student_cls: &[Vec<f64>],
) -> Result<f64, DistillError> {
    if teacher.len() != student_boxes.len() || teacher.len() != student_cls.len() {
        return Err(DistillError::LengthMismatch(format!(
            "{} teacher labels, {} student boxes, {} student class vectors",
            teacher.len(),
            student_boxes.len(),
            student_cls.len()
        )));
    }
    let mut total = 0.0;
    for (i, (t, (sb, sc))) in teacher.iter().zip(student_boxes.iter().zip(student_cls)).enumerate() {
        check_prob(&format!("teacher[{i}].score"), t.score)?;
        if t.cls.len() != sc.len() {
            return Err(DistillError::LengthMismatch(format!(
                "pair {i}: {} teacher classes vs {} student classes",
                t.cls.len(),
                sc.len()
            )));
        }
        for (k, (&y, &s)) in t.cls.iter().zip(sc).enumerate() {
            check_prob(&format!("teacher[{i}].cls[{k}]"), y)?;
            check_prob(&format!("student[{i}].cls[{k}]"), s)?;
        }
        let reg: f64 = t.bbox.iter().zip(sb).map(|(&a, &b)| smooth_l1(a, b)).sum();
        let cls: f64 = t.cls.iter().zip(sc).map(|(&y, &s)| qfl(y, s)).sum();
        total += t.score * (reg + cls);
    }
    Ok(total)
}

/// Sum of the supplied components.
pub fn total_loss(l_det: Option<f64>, l_low: f64, l_high: f64, l_res: f64) -> Result<f64, DistillError> {
    let parts = [("l_det", l_det), ("l_low", Some(l_low)), ("l_high", Some(l_high)), ("l_res", Some(l_res))];
    let mut sum = 0.0;
    for (name, v) in parts {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DistillError::NegativeComponent {
                    name: name.to_string(),
                    value: v,
                });
            }
            sum += v;
        }
    }
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub l_low: f64,
    pub l_high: f64,
    pub l_res: f64,
    pub l_total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec {
            x_range: [-10.0, 10.0],
            y_range: [0.0, 20.0],
            cell: 0.25,
            z_range: [-1.0, 3.0],
            n_z_fine: 4,
            reduction_r: 2,
        }
    }

    fn random(seed: u64, shape: &[usize]) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn empty_mask() {
        let m = gaussian_mask(&[], &grid());
        assert!(m.data.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_peak_and_falloff() {
        // center on a cell center so the 3σ offset lands on one too
        let b = Box3D::new([0.125, 10.125, 0.0, 4.5, 1.5, 1.5, 0.0]).unwrap();
        let g = grid();
        let m = gaussian_mask(&[b], &g);
        let (cy, cx) = g.bev_cell(b.x, b.y).unwrap();
        assert_eq!(m.data.get(&[cy, cx]), 1.0);
        // 3σ = 2.25 m = 9 cells along the length (ego x)
        assert_abs_diff_eq!(m.data.get(&[cy, cx + 9]) as f64, (-4.5f64).exp(), epsilon = 1e-4);
        for k in 1..12 {
            assert!(m.data.get(&[cy, cx + k]) < m.data.get(&[cy, cx + k - 1]));
            assert!(m.data.get(&[cy + k, cx]) <= m.data.get(&[cy + k - 1, cx]));
        }
        assert!(m.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rotated_mask_follows_heading() {
        let g = grid();
        let b = Box3D::new([0.125, 10.125, 0.0, 4.5, 1.5, 1.5, std::f64::consts::FRAC_PI_2]).unwrap();
        let m = gaussian_mask(&[b], &g);
        let (cy, cx) = g.bev_cell(b.x, b.y).unwrap();
        assert!(m.data.get(&[cy + 6, cx]) > m.data.get(&[cy, cx + 6]));
    }

    #[test]
    fn hand_case() {
        let t = Tensor::new(vec![2, 2, 2], vec![1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        let s = Tensor::zeros(&[2, 2, 2]);
        let g = GridSpec {
            x_range: [0.0, 2.0],
            y_range: [0.0, 2.0],
            cell: 1.0,
            ..grid()
        };
        let mask = GaussianMask {
            data: Tensor::full(&[2, 2], 1.0),
            grid: g,
        };
        assert_eq!(loss_low(&t, &s, &mask, None).unwrap(), 10.0 / 8.0);
        assert_eq!(loss_high(&t, &s, &mask).unwrap(), 1.25);
        assert_eq!(loss_low(&t, &t, &mask, None).unwrap(), 0.0);
        assert_eq!(loss_low(&t, &s, &mask.scaled(0.0), None).unwrap(), 0.0);
    }

    #[test]
    fn loss_matches_loop_oracle() {
        let g = grid();
        let boxes = [Box3D::new([1.0, 8.0, 0.0, 4.0, 2.0, 1.5, 0.4]).unwrap()];
        let mask = gaussian_mask(&boxes, &g);
        let (t, s) = (random(1, &[3, 80, 80]), random(2, &[3, 80, 80]));
        let mut acc = 0f64;
        for c in 0..3 {
            for y in 0..80 {
                for x in 0..80 {
                    let d = mask.data.get(&[y, x]) as f64 * (t.get(&[c, y, x]) as f64 - s.get(&[c, y, x]) as f64);
                    acc += d * d;
                }
            }
        }
        let want = acc / (3.0 * 6400.0);
        assert!((loss_high(&t, &s, &mask).unwrap() - want).abs() < 1e-6 * want.max(1.0));
        for lambda in [0.1f32, 0.5, 1.0] {
            let l = loss_high(&t, &s, &mask.scaled(lambda)).unwrap();
            let expected = (lambda as f64).powi(2) * want;
            assert!((l - expected).abs() <= 1e-6 * expected.max(1e-12));
        }
    }

    #[test]
    fn adapter_identity_and_store() {
        let c = 2;
        let id = Tensor::from_fn(&[c, c, 3, 3], |i| {
            let (o, rest) = (i / (c * 9), i % (c * 9));
            if rest / 9 == o && rest % 9 == 4 { 1.0 } else { 0.0 }
        });
        let a = AdapterWeights::new([id.clone(), id.clone(), id]).unwrap();
        let x = random(3, &[2, 5, 5]).map(f32::abs);
        assert_eq!(a.apply(&x).unwrap(), x);
        let mask = GaussianMask {
            data: Tensor::full(&[5, 5], 1.0),
            grid: GridSpec {
                x_range: [0.0, 5.0],
                y_range: [0.0, 5.0],
                cell: 1.0,
                ..grid()
            },
        };
        assert_eq!(loss_low(&x, &x, &mask, Some(&a)).unwrap(), 0.0);
        let back = AdapterWeights::from_store(a.to_store()).unwrap();
        assert_eq!(back, a);
        assert!(AdapterWeights::new([Tensor::zeros(&[2, 2, 2, 2]), Tensor::zeros(&[2, 2, 3, 3]), Tensor::zeros(&[2, 2, 3, 3])]).is_err());
    }

    #[test]
    fn qfl_grid() {
        for i in 0..100 {
            for j in 0..100 {
                let (y, s) = (i as f64 / 99.0, j as f64 / 99.0);
                let q = qfl(y, s);
                assert!(q >= 0.0);
                if i == j {
                    assert!(q < 1e-12, "qfl({y}, {s}) = {q}");
                } else {
                    assert!(q > 0.0, "qfl({y}, {s}) = {q}");
                }
            }
        }
    }

    #[test]
    fn response_examples() {
        let t = SoftLabel {
            bbox: [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            cls: vec![0.8],
            score: 1.0,
        };
        let l = response_loss(std::slice::from_ref(&t), &[[0.0; 7]], &[vec![0.8]]).unwrap();
        assert_abs_diff_eq!(l, 0.125, epsilon = 1e-15);
        assert_eq!(response_loss(std::slice::from_ref(&t), &[t.bbox], std::slice::from_ref(&t.cls)).unwrap(), 0.0);
        let zero = SoftLabel { score: 0.0, ..t.clone() };
        assert_eq!(response_loss(&[zero], &[[9.0; 7]], &[vec![0.1]]).unwrap(), 0.0);
        assert!(matches!(
            response_loss(std::slice::from_ref(&t), &[], &[]),
            Err(DistillError::LengthMismatch(_))
        ));
        assert!(matches!(
            response_loss(&[t], &[[0.0; 7]], &[vec![1.5]]),
            Err(DistillError::ProbabilityOutOfRange { .. })
        ));
        assert_abs_diff_eq!(smooth_l1(3.0, 0.0), 2.5);
    }

    #[test]
    fn totals() {
        assert_eq!(total_loss(Some(1.0), 2.0, 3.0, 4.0).unwrap(), 10.0);
        assert_eq!(total_loss(None, 2.0, 3.0, 4.0).unwrap(), 9.0);
        assert_eq!(total_loss(Some(0.0), 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(total_loss(None, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn soft_label_lines() {
        let text = "{\"box\":[1,2,0,4,2,1.5,0],\"cls\":[0.9,0.1],\"score\":0.7}\n\n{\"box\":[0,0,0,1,1,1,0],\"cls\":[0.2,0.8],\"score\":1}\n";
        let labels = parse_soft_labels(text).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].bbox[3], 4.0);
        assert!(matches!(parse_soft_labels("{\"box\":[1]}"), Err(DistillError::Json { line: 1, .. })));
    }
}
