//! Rotary positional embedding kernels.
//!
//! A head vector of dimension `d` is treated as `d/2` consecutive pairs
//! `(v[2j], v[2j+1])`. Pair `j` is rotated by the angle `m * theta_j` where
//! `theta_j = base^(-2j/d)`. Split-half layouts are not supported.
//!
//! All arithmetic is `f64`.

use serde::Serialize;

use crate::{Error, Result};

/// Conventional RoPE base.
pub const DEFAULT_BASE: f64 = 10_000.0;

/// Per-pair rotation frequencies for one attention head.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencySpectrum {
    head_dim: usize,
    base: f64,
    thetas: Vec<f64>,
}

impl FrequencySpectrum {
    /// Builds `theta_j = base^(-2j/head_dim)` for `j = 0 .. head_dim/2`.
    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        if head_dim < 2 || !head_dim.is_multiple_of(2) {
            return Err(Error::invalid_arg(format!(
                "head_dim must be a positive even integer, got {head_dim}"
            )));
        }
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::invalid_arg(format!(
                "base must be a positive finite number, got {base}"
            )));
        }
        let d = head_dim as f64;
        let thetas = (0..head_dim / 2)
            .map(|j| base.powf(-2.0 * j as f64 / d))
            .collect();
        Ok(Self {
            head_dim,
            base,
            thetas,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn half_dim(&self) -> usize {
        self.head_dim / 2
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.head_dim {
            return Err(Error::invalid_arg(format!(
                "{what} has length {len}, spectrum head_dim is {}",
                self.head_dim
            )));
        }
        Ok(())
    }
}

/// Rotates one pair by `angle`. Every rotation in the crate funnels through
/// here so that equal angles yield bit-identical outputs.
#[inline]
pub(crate) fn rotate_pair(x0: f64, x1: f64, angle: f64) -> (f64, f64) {
    let (sin, cos) = angle.sin_cos();
    (cos * x0 - sin * x1, sin * x0 + cos * x1)
}

/// Transposed pair rotation (the backward pass of [`rotate_pair`]).
#[inline]
pub(crate) fn rotate_pair_transposed(g0: f64, g1: f64, angle: f64) -> (f64, f64) {
    let (sin, cos) = angle.sin_cos();
    (cos * g0 + sin * g1, -sin * g0 + cos * g1)
}

#[inline]
pub(crate) fn angle(position: i64, theta: f64) -> f64 {
    position as f64 * theta
}

/// Applies the RoPE rotation for position `m` to `v`.
pub fn apply_rotation(v: &[f64], m: i64, spectrum: &FrequencySpectrum) -> Result<Vec<f64>> {
    spectrum.check_len(v.len(), "vector")?;
    let mut out = vec![0.0; v.len()];
    for (j, &theta) in spectrum.thetas.iter().enumerate() {
        let (a, b) = rotate_pair(v[2 * j], v[2 * j + 1], angle(m, theta));
        out[2 * j] = a;
        out[2 * j + 1] = b;
    }
    Ok(out)
}

/// Gradient of [`apply_rotation`] with respect to its input vector, given
/// the upstream cotangent. This is the transposed rotation, which equals
/// the rotation for position `-m`.
pub fn rotation_gradient(
    upstream: &[f64],
    m: i64,
    spectrum: &FrequencySpectrum,
) -> Result<Vec<f64>> {
    spectrum.check_len(upstream.len(), "upstream gradient")?;
    let mut out = vec![0.0; upstream.len()];
    for (j, &theta) in spectrum.thetas.iter().enumerate() {
        let (a, b) = rotate_pair_transposed(upstream[2 * j], upstream[2 * j + 1], angle(m, theta));
        out[2 * j] = a;
        out[2 * j + 1] = b;
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
