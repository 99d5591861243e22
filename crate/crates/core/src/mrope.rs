//! Multi-axis rotary embeddings.
//!
//! Each frequency index `j` of a [`FrequencySpectrum`] is owned by exactly one
//! positional axis. Pair `j` is rotated by `pos[axis(j)] * theta_j`.
//!
//! Two assignment modes are provided:
//!
//! * [`AssignMode::Sequential`]: contiguous chunks in axis order, so the first
//!   axis only sees the highest frequencies and the last axis only the lowest.
//! * [`AssignMode::Interleaved`]: `j` is mapped cyclically. With three axes
//!   `j mod 3 = 0, 1, 2` maps to `w, h, t`; with two axes `j mod 2 = 0, 1`
//!   maps to `h, w`. Every axis then spans the whole spectrum.
//!
//! When all coordinates of a position are equal (text tokens) both modes
//! reduce to plain RoPE bit-for-bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rope::{angle, rotate_pair, rotate_pair_transposed, FrequencySpectrum};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    T,
    H,
    W,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::T => "t",
            Axis::H => "h",
            Axis::W => "w",
        })
    }
}

/// Which positional axes are in play: `(h, w)` or `(t, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AxisCount {
    Two,
    Three,
}

impl AxisCount {
    pub fn get(self) -> usize {
        match self {
            AxisCount::Two => 2,
            AxisCount::Three => 3,
        }
    }

    /// Axes in storage order.
    pub fn axes(self) -> &'static [Axis] {
        match self {
            AxisCount::Two => &[Axis::H, Axis::W],
            AxisCount::Three => &[Axis::T, Axis::H, Axis::W],
        }
    }
}

impl TryFrom<usize> for AxisCount {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        match n {
            2 => Ok(AxisCount::Two),
            3 => Ok(AxisCount::Three),
            _ => Err(Error::invalid_arg(format!(
                "axis count must be 2 or 3, got {n}"
            ))),
        }
    }
}

/// A token's position on every configured axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionId {
    Thw { t: i64, h: i64, w: i64 },
    Hw { h: i64, w: i64 },
}

impl PositionId {
    /// All axes set to `m`, the text-token convention.
    pub fn uniform(m: i64, axes: AxisCount) -> Self {
        match axes {
            AxisCount::Two => PositionId::Hw { h: m, w: m },
            AxisCount::Three => PositionId::Thw { t: m, h: m, w: m },
        }
    }

    /// Builds a position from coordinates in storage order.
    pub fn from_coords(coords: &[i64]) -> Result<Self> {
        match *coords {
            [h, w] => Ok(PositionId::Hw { h, w }),
            [t, h, w] => Ok(PositionId::Thw { t, h, w }),
            _ => Err(Error::invalid_arg(format!(
                "position needs 2 or 3 coordinates, got {}",
                coords.len()
            ))),
        }
    }

    pub fn axis_count(&self) -> AxisCount {
        match self {
            PositionId::Hw { .. } => AxisCount::Two,
            PositionId::Thw { .. } => AxisCount::Three,
        }
    }

    /// Coordinate at storage index `idx`.
    pub fn coord(&self, idx: usize) -> i64 {
        match (*self, idx) {
            (PositionId::Hw { h, .. }, 0) => h,
            (PositionId::Hw { w, .. }, 1) => w,
            (PositionId::Thw { t, .. }, 0) => t,
            (PositionId::Thw { h, .. }, 1) => h,
            (PositionId::Thw { w, .. }, 2) => w,
            _ => panic!("axis index {idx} out of range for {self}"),
        }
    }

    pub fn get(&self, axis: Axis) -> Option<i64> {
        match (*self, axis) {
            (PositionId::Thw { t, .. }, Axis::T) => Some(t),
            (PositionId::Hw { .. }, Axis::T) => None,
            (PositionId::Thw { h, .. } | PositionId::Hw { h, .. }, Axis::H) => Some(h),
            (PositionId::Thw { w, .. } | PositionId::Hw { w, .. }, Axis::W) => Some(w),
        }
    }

    pub fn coords(&self) -> Vec<i64> {
        (0..self.axis_count().get())
            .map(|i| self.coord(i))
            .collect()
    }

    /// Largest coordinate.
    pub fn max_coord(&self) -> i64 {
        self.coords().into_iter().max().unwrap_or_default()
    }

    /// Componentwise difference. Panics if the axis counts differ.
    pub fn offset_from(&self, other: &PositionId) -> PositionId {
        assert_eq!(self.axis_count(), other.axis_count(), "axis count mismatch");
        let diff: Vec<i64> = self
            .coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a - b)
            .collect();
        Self::from_coords(&diff).expect("same arity")
    }

    /// Adds `delta` to every axis.
    pub fn shifted(&self, delta: i64) -> PositionId {
        let c: Vec<i64> = self.coords().iter().map(|x| x + delta).collect();
        Self::from_coords(&c).expect("same arity")
    }
}

impl fmt::Display for PositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PositionId::Hw { h, w } => write!(f, "({h},{w})"),
            PositionId::Thw { t, h, w } => write!(f, "({t},{h},{w})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignMode {
    Sequential,
    Interleaved,
}

impl FromStr for AssignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(AssignMode::Sequential),
            "inter" | "interleaved" => Ok(AssignMode::Interleaved),
            _ => Err(Error::invalid_arg(format!(
                "mode must be seq or inter, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for AssignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignMode::Sequential => "sequential",
            AssignMode::Interleaved => "interleaved",
        })
    }
}

/// Ownership of each frequency index by a positional axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxisAssignment {
    axis_count: AxisCount,
    mode: AssignMode,
    /// `mapping[j]` is the storage index of the axis owning frequency `j`.
    mapping: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    section_sizes: Option<Vec<usize>>,
}

impl AxisAssignment {
    /// Builds an assignment for `half_dim` frequencies.
    ///
    /// Sequential mode takes optional per-axis chunk sizes; the default is a
    /// near-equal split with the remainder handed to the earliest axes.
    /// Interleaved mode rejects section sizes.
    pub fn new(
        half_dim: usize,
        axis_count: AxisCount,
        mode: AssignMode,
        section_sizes: Option<&[usize]>,
    ) -> Result<Self> {
        if half_dim == 0 {
            return Err(Error::invalid_arg("half_dim must be positive"));
        }
        let n = axis_count.get();
        match mode {
            AssignMode::Interleaved => {
                if section_sizes.is_some() {
                    return Err(Error::invalid_arg(
                        "section sizes are only meaningful in sequential mode",
                    ));
                }
                let mapping = (0..half_dim)
                    .map(|j| interleaved_axis(j, axis_count))
                    .collect();
                Ok(Self {
                    axis_count,
                    mode,
                    mapping,
                    section_sizes: None,
                })
            }
            AssignMode::Sequential => {
                let sizes = match section_sizes {
                    Some(sizes) => {
                        if sizes.len() != n {
                            return Err(Error::invalid_arg(format!(
                                "expected {n} section sizes, got {}",
                                sizes.len()
                            )));
                        }
                        let total: usize = sizes.iter().sum();
                        if total != half_dim {
                            return Err(Error::invalid_arg(format!(
                                "section sizes sum to {total}, half_dim is {half_dim}"
                            )));
                        }
                        sizes.to_vec()
                    }
                    None => (0..n)
                        .map(|a| half_dim / n + usize::from(a < half_dim % n))
                        .collect(),
                };
                let mapping = sizes
                    .iter()
                    .enumerate()
                    .flat_map(|(axis, &len)| std::iter::repeat_n(axis, len))
                    .collect();
                Ok(Self {
                    axis_count,
                    mode,
                    mapping,
                    section_sizes: Some(sizes),
                })
            }
        }
    }

    pub fn axis_count(&self) -> AxisCount {
        self.axis_count
    }

    pub fn mode(&self) -> AssignMode {
        self.mode
    }

    pub fn half_dim(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Axis labels per frequency index.
    pub fn axis_labels(&self) -> Vec<Axis> {
        let axes = self.axis_count.axes();
        self.mapping.iter().map(|&a| axes[a]).collect()
    }

    pub fn section_sizes(&self) -> Option<&[usize]> {
        self.section_sizes.as_deref()
    }

    /// Number of frequency indices owned by each axis, in storage order.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.axis_count.get()];
        for &a in &self.mapping {
            counts[a] += 1;
        }
        counts
    }

    fn check_compat(&self, spectrum: &FrequencySpectrum) -> Result<()> {
        if spectrum.half_dim() != self.half_dim() {
            return Err(Error::invalid_arg(format!(
                "assignment covers {} frequencies, spectrum has {}",
                self.half_dim(),
                spectrum.half_dim()
            )));
        }
        Ok(())
    }

    fn check_position(&self, pos: &PositionId) -> Result<()> {
        if pos.axis_count() != self.axis_count {
            return Err(Error::invalid_arg(format!(
                "position {pos} has {} axes, assignment expects {}",
                pos.axis_count().get(),
                self.axis_count.get()
            )));
        }
        Ok(())
    }
}

fn interleaved_axis(j: usize, axes: AxisCount) -> usize {
    match axes {
        // w, h, t in storage order (t=0, h=1, w=2)
        AxisCount::Three => [2, 1, 0][j % 3],
        // h, w
        AxisCount::Two => j % 2,
    }
}

/// Rotates every pair of `v` by the coordinate of its owning axis.
pub fn apply_mrope(
    v: &[f64],
    pos: &PositionId,
    assign: &AxisAssignment,
    spectrum: &FrequencySpectrum,
) -> Result<Vec<f64>> {
    spectrum.check_len(v.len(), "vector")?;
    assign.check_compat(spectrum)?;
    assign.check_position(pos)?;
    let mut out = vec![0.0; v.len()];
    for (j, (&theta, &axis)) in spectrum.thetas().iter().zip(&assign.mapping).enumerate() {
        let (a, b) = rotate_pair(v[2 * j], v[2 * j + 1], angle(pos.coord(axis), theta));
        out[2 * j] = a;
        out[2 * j + 1] = b;
    }
    Ok(out)
}

/// Backward pass of [`apply_mrope`] with respect to `v`.
pub fn mrope_gradient(
    upstream: &[f64],
    pos: &PositionId,
    assign: &AxisAssignment,
    spectrum: &FrequencySpectrum,
) -> Result<Vec<f64>> {
    spectrum.check_len(upstream.len(), "upstream gradient")?;
    assign.check_compat(spectrum)?;
    assign.check_position(pos)?;
    let mut out = vec![0.0; upstream.len()];
    for (j, (&theta, &axis)) in spectrum.thetas().iter().zip(&assign.mapping).enumerate() {
        let (a, b) = rotate_pair_transposed(
            upstream[2 * j],
            upstream[2 * j + 1],
            angle(pos.coord(axis), theta),
        );
        out[2 * j] = a;
        out[2 * j + 1] = b;
    }
    Ok(out)
}

/// Frequency statistics for one axis. Range fields are `None` when the axis
/// owns no frequency (possible only with custom sequential sections).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisProfile {
    pub axis: Axis,
    pub count: usize,
    pub min_j: Option<usize>,
    pub max_j: Option<usize>,
    pub min_theta: Option<f64>,
    pub max_theta: Option<f64>,
}

pub fn axis_frequency_profile(
    assign: &AxisAssignment,
    spectrum: &FrequencySpectrum,
) -> Result<Vec<AxisProfile>> {
    assign.check_compat(spectrum)?;
    let thetas = spectrum.thetas();
    let profiles = assign
        .axis_count
        .axes()
        .iter()
        .enumerate()
        .map(|(idx, &axis)| {
            let owned: Vec<usize> = assign
                .mapping
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == idx)
                .map(|(j, _)| j)
                .collect();
            let fold = |init: f64, f: fn(f64, f64) -> f64| {
                (!owned.is_empty()).then(|| owned.iter().map(|&j| thetas[j]).fold(init, f))
            };
            AxisProfile {
                axis,
                count: owned.len(),
                min_j: owned.first().copied(),
                max_j: owned.last().copied(),
                min_theta: fold(f64::INFINITY, f64::min),
                max_theta: fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rope::apply_rotation;
    use Axis::*;

    #[test]
    fn sequential_default_three_axes() {
        let a = AxisAssignment::new(6, AxisCount::Three, AssignMode::Sequential, None).unwrap();
        assert_eq!(a.axis_labels(), [T, T, H, H, W, W]);
        assert_eq!(a.section_sizes(), Some(&[2, 2, 2][..]));
    }

    #[test]
    fn sequential_remainder_goes_to_earliest_axes() {
        let a = AxisAssignment::new(8, AxisCount::Three, AssignMode::Sequential, None).unwrap();
        assert_eq!(a.section_sizes(), Some(&[3, 3, 2][..]));
        assert_eq!(a.axis_labels(), [T, T, T, H, H, H, W, W]);
    }

    #[test]
    fn sequential_custom_sections() {
        let a = AxisAssignment::new(
            32,
            AxisCount::Three,
            AssignMode::Sequential,
            Some(&[16, 8, 8]),
        )
        .unwrap();
        assert_eq!(a.counts(), [16, 8, 8]);
        let err = AxisAssignment::new(
            32,
            AxisCount::Three,
            AssignMode::Sequential,
            Some(&[16, 8, 7]),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let err = AxisAssignment::new(
            32,
            AxisCount::Three,
            AssignMode::Sequential,
            Some(&[16, 16]),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn interleaved_three_axes() {
        let a = AxisAssignment::new(6, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        assert_eq!(a.axis_labels(), [W, H, T, W, H, T]);
    }

    #[test]
    fn interleaved_two_axes() {
        let a = AxisAssignment::new(4, AxisCount::Two, AssignMode::Interleaved, None).unwrap();
        assert_eq!(a.axis_labels(), [H, W, H, W]);
    }

    #[test]
    fn interleaved_rejects_sections() {
        let err = AxisAssignment::new(
            6,
            AxisCount::Three,
            AssignMode::Interleaved,
            Some(&[2, 2, 2]),
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn interleaved_uneven_split_favours_earliest_residues() {
        let a = AxisAssignment::new(7, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        // residues 0 -> w, 1 -> h, 2 -> t
        assert_eq!(a.counts(), [2, 2, 3]);
    }

    #[test]
    fn uniform_position_reduces_to_rope() {
        let s = FrequencySpectrum::new(12, 10_000.0).unwrap();
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        for mode in [AssignMode::Sequential, AssignMode::Interleaved] {
            for axes in [AxisCount::Two, AxisCount::Three] {
                let a = AxisAssignment::new(6, axes, mode, None).unwrap();
                let pos = PositionId::uniform(41, axes);
                assert_eq!(
                    apply_mrope(&v, &pos, &a, &s).unwrap(),
                    apply_rotation(&v, 41, &s).unwrap()
                );
            }
        }
    }

    #[test]
    fn two_axis_hand_evaluation() {
        let s = FrequencySpectrum::new(4, 100.0).unwrap();
        assert_eq!(s.thetas()[0], 1.0);
        assert!((s.thetas()[1] - 0.1).abs() < 1e-16);
        let a = AxisAssignment::new(2, AxisCount::Two, AssignMode::Interleaved, None).unwrap();
        let out = apply_mrope(
            &[1.0, 0.0, 1.0, 0.0],
            &PositionId::Hw { h: 2, w: 0 },
            &a,
            &s,
        )
        .unwrap();
        assert!((out[0] - -0.416_146_836_547_142_4).abs() < 1e-15);
        assert!((out[1] - 0.909_297_426_825_681_7).abs() < 1e-15);
        assert_eq!(&out[2..], &[1.0, 0.0]);
    }

    #[test]
    fn zero_position_leaves_vector_unchanged() {
        let s = FrequencySpectrum::new(12, 10_000.0).unwrap();
        let a = AxisAssignment::new(6, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        let v: Vec<f64> = (0..12).map(|i| i as f64 - 5.5).collect();
        let out = apply_mrope(&v, &PositionId::Thw { t: 0, h: 0, w: 0 }, &a, &s).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn mismatches_are_rejected() {
        let s = FrequencySpectrum::new(12, 10_000.0).unwrap();
        let a3 = AxisAssignment::new(6, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        let a4 = AxisAssignment::new(4, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        let v = vec![0.0; 12];
        let hw = PositionId::Hw { h: 1, w: 1 };
        assert!(apply_mrope(&v, &hw, &a3, &s).is_err());
        assert!(apply_mrope(&v[..10], &PositionId::uniform(1, AxisCount::Three), &a3, &s).is_err());
        assert!(apply_mrope(&v, &PositionId::uniform(1, AxisCount::Three), &a4, &s).is_err());
        assert!(axis_frequency_profile(&a4, &s).is_err());
    }

    #[test]
    fn profile_interleaved() {
        let s = FrequencySpectrum::new(12, 10_000.0).unwrap();
        let a = AxisAssignment::new(6, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        let p = axis_frequency_profile(&a, &s).unwrap();
        assert!(p.iter().all(|x| x.count == 2));
        let w = p.iter().find(|x| x.axis == W).unwrap();
        let t = p.iter().find(|x| x.axis == T).unwrap();
        assert_eq!(w.min_j, Some(0));
        assert_eq!(w.max_theta, Some(1.0));
        assert_eq!(t.max_j, Some(5));
    }

    #[test]
    fn profile_sequential() {
        let s = FrequencySpectrum::new(12, 10_000.0).unwrap();
        let a = AxisAssignment::new(6, AxisCount::Three, AssignMode::Sequential, None).unwrap();
        let p = axis_frequency_profile(&a, &s).unwrap();
        assert_eq!(p[0].axis, T);
        assert_eq!(p[0].max_j, Some(1));
        assert_eq!(p[2].axis, W);
        assert_eq!(p[2].min_j, Some(4));
    }

    #[test]
    fn profile_one_index_per_axis() {
        let s = FrequencySpectrum::new(6, 10_000.0).unwrap();
        let a = AxisAssignment::new(3, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        let p = axis_frequency_profile(&a, &s).unwrap();
        assert!(p.iter().all(|x| x.count == 1));
    }

    #[test]
    fn profile_empty_section() {
        let s = FrequencySpectrum::new(8, 10_000.0).unwrap();
        let a = AxisAssignment::new(
            4,
            AxisCount::Three,
            AssignMode::Sequential,
            Some(&[0, 2, 2]),
        )
        .unwrap();
        let p = axis_frequency_profile(&a, &s).unwrap();
        assert_eq!(p[0].count, 0);
        assert_eq!(p[0].min_j, None);
        assert_eq!(p[0].min_theta, None);
    }

    #[test]
    fn position_serializes_with_named_axes() {
        let p = PositionId::Thw { t: 1, h: 2, w: 3 };
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"t":1,"h":2,"w":3}"#);
        let back: PositionId = serde_json::from_str(r#"{"h":4,"w":5}"#).unwrap();
        assert_eq!(back, PositionId::Hw { h: 4, w: 5 });
        assert_eq!(p.to_string(), "(1,2,3)");
    }
}
