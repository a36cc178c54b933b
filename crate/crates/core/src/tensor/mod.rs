//! Dense row-major `f32` tensors with the handful of operations the lifting
//! and fusion pipeline needs.
//!
//! Reductions accumulate in `f64` and round once on store. There is no
//! implicit broadcasting: every binary op requires identical shapes, except
//! [`Tensor::scale_channels`] which multiplies each leading-axis slice by a
//! scalar.

mod io;

pub use io::{read_cbt1, write_cbt1, load_cbt1, save_cbt1, CBT1_MAGIC, CBT1_VERSION};

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("malformed CBT1 data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn shape_err(msg: impl Into<String>) -> TensorError {
    TensorError::ShapeMismatch(msg.into())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar_vec(values: &[f32]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.shape[i + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| {
                debug_assert!(i < n);
                acc * n + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f32) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    fn expect_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn expect_rank(&self, rank: usize, op: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(shape_err(format!(
                "{op} expects rank {rank}, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    fn zip_map(&self, other: &Tensor, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| v.max(0.0))
    }

    /// Multiplies each slice along axis 0 by the matching entry of `s`.
    pub fn scale_channels(&self, s: &Tensor) -> Result<Tensor> {
        s.expect_rank(1, "scale_channels")?;
        if self.rank() == 0 || self.shape[0] != s.len() {
            return Err(shape_err(format!(
                "scale_channels: {} scales for shape {:?}",
                s.len(),
                self.shape
            )));
        }
        let inner = self.len() / s.len();
        let mut out = self.clone();
        for (chunk, &g) in out.data.chunks_mut(inner.max(1)).zip(&s.data) {
            chunk.iter_mut().for_each(|v| *v *= g);
        }
        Ok(out)
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(shape_err(format!("invalid permutation {perm:?} for rank {r}")));
        }
        let in_strides = self.strides();
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let n = self.len();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; r];
        for _ in 0..n {
            let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            data.push(self.data[off]);
            for ax in (0..r).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(ts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = ts.first().ok_or_else(|| shape_err("concat of zero tensors"))?;
        let r = first.rank();
        if axis >= r {
            return Err(TensorError::AxisOutOfRange { axis, rank: r });
        }
        for t in ts {
            if t.rank() != r
                || t.shape.iter().enumerate().any(|(i, &n)| i != axis && n != first.shape[i])
            {
                return Err(shape_err(format!(
                    "concat on axis {axis}: {:?} vs {:?}",
                    first.shape, t.shape
                )));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut shape = first.shape.clone();
        shape[axis] = ts.iter().map(|t| t.shape[axis]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for t in ts {
                let block = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * block..(o + 1) * block]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let n = self.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = self.clone();
        let mut buf = vec![0f64; n];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let mx = (0..n).map(|k| self.data[at(k)]).fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut total = 0.0;
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = (self.data[at(k)] as f64 - mx).exp();
                    total += *b;
                }
                for (k, b) in buf.iter().enumerate() {
                    out.data[at(k)] = (b / total) as f32;
                }
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    let x = v as f64;
    (1.0 / (1.0 + (-x).exp())) as f32
}

/// `out[n, c, y, x] = context[c, y, x] · dist[n, y, x]`.
pub fn outer_lift(context: &Tensor, dist: &Tensor) -> Result<Tensor> {
    context.expect_rank(3, "outer_lift context")?;
    dist.expect_rank(3, "outer_lift dist")?;
    if context.shape[1..] != dist.shape[1..] {
        return Err(shape_err(format!(
            "outer_lift spatial extents: context {:?} vs dist {:?}",
            context.shape, dist.shape
        )));
    }
    let (c, n) = (context.shape[0], dist.shape[0]);
    let hw = context.shape[1] * context.shape[2];
    let mut data = Vec::with_capacity(n * c * hw);
    for k in 0..n {
        let d = &dist.data[k * hw..(k + 1) * hw];
        for ch in 0..c {
            let f = &context.data[ch * hw..(ch + 1) * hw];
            data.extend(f.iter().zip(d).map(|(a, b)| a * b));
        }
    }
    Tensor::new(vec![n, c, context.shape[1], context.shape[2]], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Per-channel global average or max over a `[C, D, H, W]` volume.
pub fn global_pool3d(t: &Tensor, mode: PoolMode) -> Result<Tensor> {
    t.expect_rank(4, "global_pool3d")?;
    let c = t.shape[0];
    let inner = t.len() / c.max(1);
    let data = t
        .data
        .chunks(inner.max(1))
        .take(c)
        .map(|chunk| match mode {
            PoolMode::Avg => (chunk.iter().map(|&v| v as f64).sum::<f64>() / inner as f64) as f32,
            PoolMode::Max => chunk.iter().copied().fold(f32::NEG_INFINITY, f32::max),
        })
        .collect();
    Tensor::new(vec![c], data)
}

/// `[C, D, H, W] → [2, D, H, W]`: channel mean in plane 0, channel max in plane 1.
pub fn channel_pool(t: &Tensor) -> Result<Tensor> {
    t.expect_rank(4, "channel_pool")?;
    let c = t.shape[0];
    if c == 0 {
        return Err(shape_err("channel_pool on zero channels"));
    }
    let vol = t.len() / c;
    let mut data = vec![0f32; 2 * vol];
    for i in 0..vol {
        let mut sum = 0f64;
        let mut mx = f32::NEG_INFINITY;
        for ch in 0..c {
            let v = t.data[ch * vol + i];
            sum += v as f64;
            mx = mx.max(v);
        }
        data[i] = (sum / c as f64) as f32;
        data[vol + i] = mx;
    }
    Tensor::new(vec![2, t.shape[1], t.shape[2], t.shape[3]], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `k / 2` per side (odd kernels keep extents at stride 1).
    Same,
    Valid,
}

/// Direct 3D cross-correlation of `[Cin, D, H, W]` with `[Cout, Cin, kd, kh, kw]`.
pub fn conv3d(t: &Tensor, kernel: &Tensor, stride: [usize; 3], padding: Padding) -> Result<Tensor> {
    t.expect_rank(4, "conv3d input")?;
    kernel.expect_rank(5, "conv3d kernel")?;
    let (cin, dims) = (t.shape[0], [t.shape[1], t.shape[2], t.shape[3]]);
    let (cout, kcin) = (kernel.shape[0], kernel.shape[1]);
    let k = [kernel.shape[2], kernel.shape[3], kernel.shape[4]];
    if kcin != cin {
        return Err(shape_err(format!(
            "conv3d: kernel expects {kcin} input channels, got {cin}"
        )));
    }
    if stride.contains(&0) {
        return Err(shape_err("conv3d: zero stride"));
    }
    let mut pad = [0usize; 3];
    let mut out_dims = [0usize; 3];
    for a in 0..3 {
        if padding == Padding::Same {
            if k[a].is_multiple_of(2) {
                return Err(shape_err("conv3d: same padding needs odd kernel extents"));
            }
            pad[a] = k[a] / 2;
        }
        let padded = dims[a] + 2 * pad[a];
        if k[a] == 0 || k[a] > padded {
            return Err(shape_err(format!(
                "conv3d: kernel {k:?} larger than padded input {dims:?}"
            )));
        }
        out_dims[a] = (padded - k[a]) / stride[a] + 1;
    }
    let [od, oh, ow] = out_dims;
    let [id, ih, iw] = dims;
    let plane = oh * ow;
    let in_vol = id * ih * iw;
    let kvol = k[0] * k[1] * k[2];

    // One task per (output channel, output depth) plane; each plane is
    // accumulated in a fixed order so the result does not depend on threads.
    let planes: Vec<Vec<f32>> = (0..cout * od)
        .into_par_iter()
        .map(|task| {
            let (o, z) = (task / od, task % od);
            let mut acc = vec![0f64; plane];
            for c in 0..cin {
                let src = &t.data[c * in_vol..(c + 1) * in_vol];
                let wbase = (o * cin + c) * kvol;
                for kz in 0..k[0] {
                    let iz = (z * stride[0] + kz) as isize - pad[0] as isize;
                    if iz < 0 || iz >= id as isize {
                        continue;
                    }
                    let slab = &src[iz as usize * ih * iw..(iz as usize + 1) * ih * iw];
                    for ky in 0..k[1] {
                        for kx in 0..k[2] {
                            let w = kernel.data[wbase + (kz * k[1] + ky) * k[2] + kx] as f64;
                            if w == 0.0 {
                                continue;
                            }
                            for y in 0..oh {
                                let iy = (y * stride[1] + ky) as isize - pad[1] as isize;
                                if iy < 0 || iy >= ih as isize {
                                    continue;
                                }
                                let row = &slab[iy as usize * iw..(iy as usize + 1) * iw];
                                let out_row = &mut acc[y * ow..(y + 1) * ow];
                                for (x, a) in out_row.iter_mut().enumerate() {
                                    let ix = (x * stride[2] + kx) as isize - pad[2] as isize;
                                    if ix >= 0 && ix < iw as isize {
                                        *a += w * row[ix as usize] as f64;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            acc.into_iter().map(|v| v as f32).collect()
        })
        .collect();
    Tensor::new(vec![cout, od, oh, ow], planes.concat())
}

/// 2D cross-correlation of `[Cin, H, W]` with `[Cout, Cin, kh, kw]`.
pub fn conv2d(t: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor> {
    t.expect_rank(3, "conv2d input")?;
    kernel.expect_rank(4, "conv2d kernel")?;
    let s = t.shape();
    let ks = kernel.shape();
    let t3 = t.clone().reshape(vec![s[0], 1, s[1], s[2]])?;
    let k3 = kernel.clone().reshape(vec![ks[0], ks[1], 1, ks[2], ks[3]])?;
    let out = conv3d(&t3, &k3, [1, 1, 1], padding)?;
    let os = out.shape().to_vec();
    out.reshape(vec![os[0], os[2], os[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Affine layer `y = act(W x + b)` with `W: [out, in]`, `b: [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        weight.expect_rank(2, "dense weight")?;
        bias.expect_rank(1, "dense bias")?;
        if bias.len() != weight.shape[0] {
            return Err(shape_err(format!(
                "dense bias {} vs weight {:?}",
                bias.len(),
                weight.shape
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(1, "dense input")?;
        if x.len() != self.in_dim() {
            return Err(shape_err(format!(
                "dense expects {} inputs, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let n_in = self.in_dim();
        let data = (0..self.out_dim())
            .map(|o| {
                let row = &self.weight.data[o * n_in..(o + 1) * n_in];
                let acc: f64 = row.iter().zip(&x.data).map(|(&w, &v)| w as f64 * v as f64).sum::<f64>()
                    + self.bias.data[o] as f64;
                let v = acc as f32;
                match self.activation {
                    Activation::Relu => v.max(0.0),
                    Activation::None => v,
                }
            })
            .collect();
        Tensor::new(vec![self.out_dim()], data)
    }
}

pub fn mlp_apply(x: &Tensor, layers: &[Dense]) -> Result<Tensor> {
    layers.iter().try_fold(x.clone(), |h, layer| layer.apply(&h))
}

/// Per-pixel linear map over channels: `[Cin, H, W] → [Cout, H, W]`
/// with weight `[Cout, Cin]` and bias `[Cout]`.
pub fn pointwise_linear(t: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    t.expect_rank(3, "pointwise_linear input")?;
    weight.expect_rank(2, "pointwise_linear weight")?;
    let (cin, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
    let cout = weight.shape[0];
    if weight.shape[1] != cin || bias.shape != [cout] {
        return Err(shape_err(format!(
            "pointwise_linear: input {:?}, weight {:?}, bias {:?}",
            t.shape, weight.shape, bias.shape
        )));
    }
    let hw = h * w;
    let mut data = vec![0f32; cout * hw];
    let mut acc = vec![0f64; hw];
    for o in 0..cout {
        acc.iter_mut().for_each(|a| *a = bias.data[o] as f64);
        for c in 0..cin {
            let wv = weight.data[o * cin + c] as f64;
            for (a, &v) in acc.iter_mut().zip(&t.data[c * hw..(c + 1) * hw]) {
                *a += wv * v as f64;
            }
        }
        for (d, a) in data[o * hw..(o + 1) * hw].iter_mut().zip(&acc) {
            *d = *a as f32;
        }
    }
    Tensor::new(vec![cout, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.get(&[1, 2]), 5.0);
        assert_eq!(t.strides(), vec![3, 1]);
    }

    #[test]
    fn outer_lift_one_hot_and_ones() {
        let ctx = Tensor::new(vec![3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let dist = Tensor::new(vec![4, 1, 1], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let out = outer_lift(&ctx, &dist).unwrap();
        assert_eq!(out.shape(), &[4, 3, 1, 1]);
        for n in 0..4 {
            for c in 0..3 {
                let expected = if n == 2 { ctx.data()[c] } else { 0.0 };
                assert_eq!(out.get(&[n, c, 0, 0]), expected);
            }
        }
        let ones = Tensor::full(&[2, 2, 2], 1.0);
        let d = random(&[3, 2, 2], 1);
        let out = outer_lift(&ones, &d).unwrap();
        for n in 0..3 {
            for c in 0..2 {
                for y in 0..2 {
                    for x in 0..2 {
                        assert_eq!(out.get(&[n, c, y, x]), d.get(&[n, y, x]));
                    }
                }
            }
        }
        assert!(outer_lift(&ones, &random(&[3, 2, 3], 2)).is_err());
    }

    #[test]
    fn softmax_cases() {
        let t = Tensor::full(&[4], 3.0);
        let s = t.softmax_axis(0).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
        let t = Tensor::new(vec![2], vec![0.0, 1000.0]).unwrap();
        let s = t.softmax_axis(0).unwrap();
        assert!(s.data()[0].abs() < 1e-6 && (s.data()[1] - 1.0).abs() < 1e-6);
        assert!(matches!(t.softmax_axis(1), Err(TensorError::AxisOutOfRange { .. })));
    }

    #[test]
    fn global_pool_cases() {
        let t = Tensor::full(&[2, 2, 3, 4], 1.5);
        assert_eq!(global_pool3d(&t, PoolMode::Avg).unwrap().data(), &[1.5, 1.5]);
        assert_eq!(global_pool3d(&t, PoolMode::Max).unwrap().data(), &[1.5, 1.5]);
        let mut t = Tensor::zeros(&[1, 2, 3, 4]);
        t.set(&[0, 1, 2, 3], 1.0);
        assert_eq!(global_pool3d(&t, PoolMode::Avg).unwrap().data(), &[(1.0f64 / 24.0) as f32]);
        assert_eq!(global_pool3d(&t, PoolMode::Max).unwrap().data(), &[1.0]);
        assert!(global_pool3d(&Tensor::zeros(&[2, 2]), PoolMode::Avg).is_err());
    }

    #[test]
    fn channel_pool_cases() {
        let t = random(&[1, 2, 2, 2], 4);
        let p = channel_pool(&t).unwrap();
        assert_eq!(&p.data()[..8], t.data());
        assert_eq!(&p.data()[8..], t.data());
        let t = Tensor::new(vec![2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(channel_pool(&t).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn conv3d_identity_and_box() {
        let t = random(&[2, 3, 4, 5], 7);
        let mut k = Tensor::zeros(&[2, 2, 1, 1, 1]);
        k.set(&[0, 0, 0, 0, 0], 1.0);
        k.set(&[1, 1, 0, 0, 0], 1.0);
        let out = conv3d(&t, &k, [1, 1, 1], Padding::Same).unwrap();
        assert_eq!(out, t);

        let mut imp = Tensor::zeros(&[1, 5, 5, 5]);
        imp.set(&[0, 2, 2, 2], 1.0);
        let ones = Tensor::full(&[1, 1, 3, 3, 3], 1.0);
        let out = conv3d(&imp, &ones, [1, 1, 1], Padding::Same).unwrap();
        assert_eq!(out.shape(), &[1, 5, 5, 5]);
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let inside = (1..=3).contains(&z) && (1..=3).contains(&y) && (1..=3).contains(&x);
                    assert_eq!(out.get(&[0, z, y, x]), if inside { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn conv3d_rejects_bad_shapes() {
        let t = Tensor::zeros(&[2, 3, 3, 3]);
        assert!(conv3d(&t, &Tensor::zeros(&[1, 3, 1, 1, 1]), [1, 1, 1], Padding::Valid).is_err());
        assert!(conv3d(&t, &Tensor::zeros(&[1, 2, 4, 1, 1]), [1, 1, 1], Padding::Valid).is_err());
        assert!(conv3d(&t, &Tensor::zeros(&[1, 2, 2, 1, 1]), [1, 1, 1], Padding::Same).is_err());
    }

    #[test]
    fn mlp_cases() {
        let x = Tensor::scalar_vec(&[0.3, -0.7, 1.1]);
        let layer = Dense::zeros(3, 4, Activation::None);
        assert_eq!(mlp_apply(&x, &[layer]).unwrap().data(), &[0.0; 4]);

        let id = Dense::new(
            Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]),
            Activation::Relu,
        )
        .unwrap();
        let out = id.apply(&Tensor::scalar_vec(&[-1.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);
        assert!(id.apply(&x).is_err());
    }

    #[test]
    fn elementwise_ops() {
        assert_eq!(sigmoid(0.0), 0.5);
        let t = random(&[2, 3], 9);
        assert_eq!(t.mul(&Tensor::full(&[2, 3], 1.0)).unwrap(), t);
        assert!(t.add(&Tensor::zeros(&[3, 2])).is_err());
        let u = random(&[2, 3], 10);
        let c = Tensor::concat(&[&t, &u], 0).unwrap();
        assert_eq!(c.shape(), &[4, 3]);
        assert_eq!(&c.data()[..6], t.data());
        assert_eq!(&c.data()[6..], u.data());
        let s = t.scale_channels(&Tensor::scalar_vec(&[2.0, 0.0])).unwrap();
        assert_eq!(&s.data()[3..], &[0.0; 3]);
        assert_eq!(s.data()[0], 2.0 * t.data()[0]);
    }

    #[test]
    fn permute_matches_index_swap() {
        let t = random(&[2, 3, 4], 12);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(p.get(&[c, a, b]), t.get(&[a, b, c]));
                }
            }
        }
        assert!(t.permute(&[0, 0, 1]).is_err());
    }
}
