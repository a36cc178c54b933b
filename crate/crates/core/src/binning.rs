//! Depth and height discretization.
//!
//! Depth uses uniform bins over `[d0, d_max)`; height uses power-law edges
//! `h0 + (j / n)^α (h_max − h0)` so bin widths grow with `j` when `α > 1`.
//! Bins are left-closed and right-open.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BinningError {
    #[error("invalid bin spec: {0}")]
    InvalidSpec(String),
    #[error("value {value} outside [{lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("bin index {index} out of range for {n_bins} bins")]
    IndexOutOfRange { index: usize, n_bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthBinSpec {
    pub n_bins: usize,
    pub d0: f64,
    pub d_max: f64,
}

impl Default for DepthBinSpec {
    fn default() -> Self {
        Self {
            n_bins: 256,
            d0: 2.0,
            d_max: 104.4,
        }
    }
}

impl DepthBinSpec {
    pub fn new(n_bins: usize, d0: f64, d_max: f64) -> Result<Self, BinningError> {
        let spec = Self { n_bins, d0, d_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BinningError> {
        if self.n_bins == 0 {
            return Err(BinningError::InvalidSpec("depth n_bins must be >= 1".into()));
        }
        if !(self.d0 >= 0.0 && self.d_max > self.d0 && self.d_max.is_finite()) {
            return Err(BinningError::InvalidSpec(format!(
                "need d_max > d0 >= 0, got d0={}, d_max={}",
                self.d0, self.d_max
            )));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.d_max - self.d0) / self.n_bins as f64
    }

    pub fn edges(&self) -> BinEdges {
        depth_bin_edges(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeightBinSpec {
    pub n_bins: usize,
    pub h0: f64,
    pub h_max: f64,
    pub alpha: f64,
}

impl Default for HeightBinSpec {
    /// Same bin count as the depth head.
    fn default() -> Self {
        Self {
            n_bins: 256,
            h0: -1.5,
            h_max: 3.0,
            alpha: 1.5,
        }
    }
}

impl HeightBinSpec {
    pub fn new(n_bins: usize, h0: f64, h_max: f64, alpha: f64) -> Result<Self, BinningError> {
        let spec = Self {
            n_bins,
            h0,
            h_max,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BinningError> {
        if self.n_bins == 0 {
            return Err(BinningError::InvalidSpec("height n_bins must be >= 1".into()));
        }
        if !(self.h_max > self.h0 && self.h0.is_finite() && self.h_max.is_finite()) {
            return Err(BinningError::InvalidSpec(format!(
                "need h_max > h0, got h0={}, h_max={}",
                self.h0, self.h_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(BinningError::InvalidSpec(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn edges(&self) -> BinEdges {
        height_bin_edges(self)
    }
}

/// Strictly increasing bin edges, `n_bins + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BinEdges(Vec<f64>);

/// Result of a lookup in clamp mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinLookup {
    pub index: usize,
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinMode {
    Strict,
    Clamp,
}

impl BinEdges {
    pub fn from_vec(edges: Vec<f64>) -> Result<Self, BinningError> {
        if edges.len() < 2 {
            return Err(BinningError::InvalidSpec("need at least two edges".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BinningError::InvalidSpec("edges must be strictly increasing".into()));
        }
        Ok(Self(edges))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n_bins(&self) -> usize {
        self.0.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.0[0]
    }

    pub fn hi(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.windows(2).map(|w| w[1] - w[0])
    }

    pub fn width(&self, index: usize) -> Result<f64, BinningError> {
        self.check_index(index)?;
        Ok(self.0[index + 1] - self.0[index])
    }

    pub fn bin_center(&self, index: usize) -> Result<f64, BinningError> {
        self.check_index(index)?;
        Ok(0.5 * (self.0[index] + self.0[index + 1]))
    }

    pub fn centers(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    fn check_index(&self, index: usize) -> Result<(), BinningError> {
        if index >= self.n_bins() {
            return Err(BinningError::IndexOutOfRange {
                index,
                n_bins: self.n_bins(),
            });
        }
        Ok(())
    }

    /// Index `j` with `edges[j] <= value < edges[j + 1]`.
    pub fn value_to_bin(&self, value: f64, mode: BinMode) -> Result<BinLookup, BinningError> {
        let (lo, hi) = (self.lo(), self.hi());
        if value >= lo && value < hi {
            // first edge strictly greater than value, minus one
            let index = self.0.partition_point(|&e| e <= value) - 1;
            return Ok(BinLookup {
                index,
                clamped: false,
            });
        }
        match mode {
            BinMode::Strict => Err(BinningError::OutOfRange { value, lo, hi }),
            BinMode::Clamp => Ok(BinLookup {
                index: if value < lo || value.is_nan() { 0 } else { self.n_bins() - 1 },
                clamped: true,
            }),
        }
    }
}

pub fn depth_bin_edges(spec: &DepthBinSpec) -> BinEdges {
    let step = spec.bin_width();
    let n = spec.n_bins;
    let mut edges: Vec<f64> = (0..=n).map(|i| spec.d0 + i as f64 * step).collect();
    edges[n] = spec.d_max;
    BinEdges(edges)
}

pub fn height_bin_edges(spec: &HeightBinSpec) -> BinEdges {
    let n = spec.n_bins;
    let span = spec.h_max - spec.h0;
    let mut edges: Vec<f64> = (0..=n)
        .map(|j| spec.h0 + (j as f64 / n as f64).powf(spec.alpha) * span)
        .collect();
    edges[0] = spec.h0;
    edges[n] = spec.h_max;
    BinEdges(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_depth_spec_constants() {
        let spec = DepthBinSpec::default();
        assert_abs_diff_eq!(spec.bin_width(), 0.4, epsilon = 1e-12);
        let edges = spec.edges();
        assert_eq!(edges.as_slice().len(), 257);
        assert_eq!(edges.lo(), 2.0);
        assert_eq!(edges.hi(), 104.4);
        assert_abs_diff_eq!(edges.bin_center(0).unwrap(), 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(edges.bin_center(1).unwrap(), 2.6, epsilon = 1e-12);
    }

    #[test]
    fn single_bin() {
        let e = DepthBinSpec::new(1, 3.0, 7.0).unwrap().edges();
        assert_eq!(e.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn height_edge_values() {
        let spec = HeightBinSpec::new(10, -1.5, 3.0, 1.5).unwrap();
        let e = spec.edges();
        assert_eq!(e.hi(), 3.0);
        assert_abs_diff_eq!(e.as_slice()[5], 0.0910, epsilon = 1e-4);
        assert_abs_diff_eq!(e.as_slice()[5], -1.5 + 0.5f64.powf(1.5) * 4.5, epsilon = 1e-15);
    }

    #[test]
    fn alpha_one_is_uniform() {
        let h = HeightBinSpec::new(16, 2.0, 10.0, 1.0).unwrap().edges();
        let d = DepthBinSpec::new(16, 2.0, 10.0).unwrap().edges();
        for (a, b) in h.as_slice().iter().zip(d.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lookup_conventions() {
        let e = DepthBinSpec::default().edges();
        assert_eq!(e.value_to_bin(2.0, BinMode::Strict).unwrap().index, 0);
        assert_eq!(e.value_to_bin(50.0, BinMode::Strict).unwrap().index, 120);
        assert!(matches!(
            e.value_to_bin(104.4, BinMode::Strict),
            Err(BinningError::OutOfRange { .. })
        ));
        let c = e.value_to_bin(104.4, BinMode::Clamp).unwrap();
        assert_eq!(c, BinLookup { index: 255, clamped: true });
        let c = e.value_to_bin(0.5, BinMode::Clamp).unwrap();
        assert_eq!(c, BinLookup { index: 0, clamped: true });
    }

    #[test]
    fn center_index_errors() {
        let e = HeightBinSpec::default().edges();
        assert!(matches!(e.bin_center(256), Err(BinningError::IndexOutOfRange { .. })));
        assert_eq!(e.as_slice()[256], 3.0);
    }

    #[test]
    fn partition_and_round_trip() {
        let specs = [
            DepthBinSpec::default().edges(),
            HeightBinSpec::default().edges(),
            HeightBinSpec::new(64, -2.0, 0.0, 1.5).unwrap().edges(),
            HeightBinSpec::new(7, -1.0, 4.0, 0.5).unwrap().edges(),
        ];
        for e in &specs {
            let total: f64 = e.widths().sum();
            assert_abs_diff_eq!(total, e.hi() - e.lo(), epsilon = 1e-9);
            for j in 0..e.n_bins() {
                let c = e.bin_center(j).unwrap();
                assert_eq!(e.value_to_bin(c, BinMode::Strict).unwrap().index, j);
            }
        }
    }

    #[test]
    fn height_widths_non_decreasing() {
        let e = HeightBinSpec::default().edges();
        let w: Vec<f64> = e.widths().collect();
        assert!(w.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn invalid_specs() {
        assert!(DepthBinSpec::new(0, 2.0, 4.0).is_err());
        assert!(DepthBinSpec::new(4, 5.0, 4.0).is_err());
        assert!(HeightBinSpec::new(4, 0.0, 1.0, 0.0).is_err());
        assert!(BinEdges::from_vec(vec![0.0, 0.0, 1.0]).is_err());
    }
}
