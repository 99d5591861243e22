//! Single-head attention scoring with a pluggable multi-axis rotary scheme.
//!
//! There are no learned weights here. The scaffold answers a geometric
//! question: given a probe query at a vision patch, which ruler token's key
//! scores highest?

use serde::Serialize;

use crate::mrope::{apply_mrope, mrope_gradient, AxisAssignment, PositionId};
use crate::rope::{dot, FrequencySpectrum};
use crate::ruler::{ImageGrid, RulerTokenSet};
use crate::{Error, Result};

/// Relative tolerance under which two ruler scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    spectrum: FrequencySpectrum,
    assignment: AxisAssignment,
    scale: f64,
}

impl AttentionConfig {
    /// Config with the usual `1/sqrt(d)` scale.
    pub fn new(spectrum: FrequencySpectrum, assignment: AxisAssignment) -> Result<Self> {
        if spectrum.half_dim() != assignment.half_dim() {
            return Err(Error::invalid_arg(format!(
                "spectrum has {} frequencies, assignment covers {}",
                spectrum.half_dim(),
                assignment.half_dim()
            )));
        }
        let scale = 1.0 / (spectrum.head_dim() as f64).sqrt();
        Ok(Self {
            spectrum,
            assignment,
            scale,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid_arg(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn spectrum(&self) -> &FrequencySpectrum {
        &self.spectrum
    }

    pub fn assignment(&self) -> &AxisAssignment {
        &self.assignment
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// `scale * <R(pos_q) q, R(pos_k) k>`.
pub fn score(
    q: &[f64],
    k: &[f64],
    pos_q: &PositionId,
    pos_k: &PositionId,
    cfg: &AttentionConfig,
) -> Result<f64> {
    let rq = apply_mrope(q, pos_q, &cfg.assignment, &cfg.spectrum)?;
    let rk = apply_mrope(k, pos_k, &cfg.assignment, &cfg.spectrum)?;
    Ok(cfg.scale * dot(&rq, &rk))
}

/// Gradient of [`score`] with respect to `q`: `scale * R(pos_q)^T R(pos_k) k`.
pub fn score_gradient_q(
    q: &[f64],
    k: &[f64],
    pos_q: &PositionId,
    pos_k: &PositionId,
    cfg: &AttentionConfig,
) -> Result<Vec<f64>> {
    cfg.spectrum.check_len(q.len(), "query")?;
    let rk = apply_mrope(k, pos_k, &cfg.assignment, &cfg.spectrum)?;
    let mut g = mrope_gradient(&rk, pos_q, &cfg.assignment, &cfg.spectrum)?;
    g.iter_mut().for_each(|x| *x *= cfg.scale);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RulerScore {
    pub index: u32,
    pub score: f64,
}

/// Outcome of [`ruler_peak`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RulerPeak {
    /// Grid index of the winning ruler token (smallest among ties).
    pub index: u32,
    pub score: f64,
    /// Set when another ruler token scores within [`TIE_TOLERANCE`] of the winner.
    pub tie: bool,
    /// Indices of every token tied for the maximum, ascending.
    pub tied: Vec<u32>,
    pub scores: Vec<RulerScore>,
}

/// Scores every ruler token against the vision token at `(row, col)`, using
/// `probe` as both query and key, and returns the best match.
pub fn ruler_peak(
    grid: &ImageGrid,
    rulers: &RulerTokenSet,
    probe_at: (u32, u32),
    cfg: &AttentionConfig,
    probe: &[f64],
) -> Result<RulerPeak> {
    let (row, col) = probe_at;
    if row >= grid.rows || col >= grid.cols {
        return Err(Error::invalid_arg(format!(
            "probe ({row}, {col}) outside {}x{} grid",
            grid.rows, grid.cols
        )));
    }
    if rulers.t0 != grid.t0 || rulers.patch_px != grid.patch_px {
        return Err(Error::invalid_arg(
            "ruler tokens were built for a different grid",
        ));
    }
    if rulers.is_empty() {
        return Err(Error::invalid_arg("no ruler tokens to score"));
    }
    cfg.spectrum.check_len(probe.len(), "probe vector")?;
    if probe.chunks(2).any(|p| p[0] == 0.0 && p[1] == 0.0) {
        return Err(Error::invalid_arg("probe vector has a zero pair"));
    }

    let axes = cfg.assignment.axis_count();
    let vision_pos = grid.patch_position(row, col, axes);
    // The query side is shared by every ruler token, so rotate it once.
    let query = apply_mrope(probe, &vision_pos, &cfg.assignment, &cfg.spectrum)?;
    let scores = rulers
        .tokens
        .iter()
        .map(|t| {
            let key = apply_mrope(probe, &t.position_id(axes), &cfg.assignment, &cfg.spectrum)?;
            Ok(RulerScore {
                index: t.index,
                score: cfg.scale * dot(&query, &key),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = scores
        .iter()
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs().max(1.0);
    let tied: Vec<u32> = scores
        .iter()
        .filter(|s| best - s.score <= tol)
        .map(|s| s.index)
        .collect();
    let winner = scores
        .iter()
        .find(|s| s.index == tied[0])
        .copied()
        .expect("winner is among scores");
    Ok(RulerPeak {
        index: winner.index,
        score: winner.score,
        tie: tied.len() > 1,
        tied,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mrope::{AssignMode, AxisCount};
    use crate::rope::norm;

    fn config(dim: usize, axes: AxisCount, mode: AssignMode) -> AttentionConfig {
        let s = FrequencySpectrum::new(dim, 10_000.0).unwrap();
        let a = AxisAssignment::new(dim / 2, axes, mode, None).unwrap();
        AttentionConfig::new(s, a).unwrap()
    }

    #[test]
    fn self_score_at_equal_positions() {
        let cfg = config(8, AxisCount::Three, AssignMode::Interleaved);
        let q = [0.5, -1.0, 2.0, 0.25, 1.5, -0.5, 0.1, 0.9];
        let p = PositionId::Thw { t: 3, h: 7, w: 2 };
        let s = score(&q, &q, &p, &p, &cfg).unwrap();
        let expected = cfg.scale() * norm(&q).powi(2);
        assert!((s - expected).abs() < 1e-12);
        for dh in -3..=3 {
            for dw in -3..=3 {
                let other = PositionId::Thw {
                    t: 3,
                    h: 7 + dh,
                    w: 2 + dw,
                };
                assert!(score(&q, &q, &p, &other, &cfg).unwrap() <= s + 1e-12);
            }
        }
    }

    #[test]
    fn single_pair_closed_form() {
        let s = FrequencySpectrum::new(2, 10_000.0).unwrap();
        let a =
            AxisAssignment::new(1, AxisCount::Two, AssignMode::Sequential, Some(&[1, 0])).unwrap();
        let cfg = AttentionConfig::new(s, a).unwrap();
        let got = score(
            &[1.0, 0.0],
            &[1.0, 0.0],
            &PositionId::Hw { h: 3, w: 0 },
            &PositionId::Hw { h: 0, w: 0 },
            &cfg,
        )
        .unwrap();
        let want = cfg.scale() * -0.989_992_496_600_445_4;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn shift_leaves_score_unchanged() {
        let cfg = config(16, AxisCount::Two, AssignMode::Interleaved);
        let q: Vec<f64> = (0..16).map(|i| (i as f64 * 1.3).cos()).collect();
        let k: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let pq = PositionId::Hw { h: 4, w: 9 };
        let pk = PositionId::Hw { h: 1, w: 12 };
        let base = score(&q, &k, &pq, &pk, &cfg).unwrap();
        let shifted = score(&q, &k, &pq.shifted(57), &pk.shifted(57), &cfg).unwrap();
        assert!((base - shifted).abs() < 1e-9);
    }

    #[test]
    fn custom_scale() {
        let cfg = config(4, AxisCount::Two, AssignMode::Interleaved)
            .with_scale(2.0)
            .unwrap();
        let p = PositionId::Hw { h: 0, w: 0 };
        assert_eq!(score(&[1.0; 4], &[1.0; 4], &p, &p, &cfg).unwrap(), 8.0);
        assert!(config(4, AxisCount::Two, AssignMode::Interleaved)
            .with_scale(0.0)
            .is_err());
    }

    #[test]
    fn config_rejects_mismatch() {
        let s = FrequencySpectrum::new(8, 10_000.0).unwrap();
        let a = AxisAssignment::new(3, AxisCount::Three, AssignMode::Interleaved, None).unwrap();
        assert!(AttentionConfig::new(s, a).is_err());
    }

    fn peak(rows: u32, cols: u32, s: u32, r: u32, c: u32) -> RulerPeak {
        let cfg = config(32, AxisCount::Two, AssignMode::Interleaved);
        let grid = ImageGrid::new(cols * 28, rows * 28, 28, 5).unwrap();
        let rulers = RulerTokenSet::new(&grid, s).unwrap();
        ruler_peak(&grid, &rulers, (r, c), &cfg, &[1.0; 32]).unwrap()
    }

    #[test]
    fn diagonal_probe_nine_picks_eight() {
        let p = peak(16, 16, 4, 9, 9);
        assert_eq!(p.index, 8);
        assert!(!p.tie);
    }

    #[test]
    fn exact_match_wins_with_full_norm() {
        let p = peak(20, 20, 4, 12, 12);
        assert_eq!(p.index, 12);
        assert!((p.score - 32.0 / 32f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_offsets_tie() {
        let p = peak(16, 16, 4, 10, 10);
        assert_eq!(p.index, 8);
        assert!(p.tie);
        assert_eq!(p.tied, [8, 12]);
        let s8 = p.scores.iter().find(|s| s.index == 8).unwrap().score;
        let s12 = p.scores.iter().find(|s| s.index == 12).unwrap().score;
        assert!((s8 - s12).abs() < 1e-12);
    }

    #[test]
    fn ruler_peak_validates_inputs() {
        let cfg = config(32, AxisCount::Two, AssignMode::Interleaved);
        let grid = ImageGrid::new(280, 280, 28, 0).unwrap();
        let rulers = RulerTokenSet::new(&grid, 4).unwrap();
        assert!(ruler_peak(&grid, &rulers, (10, 0), &cfg, &[1.0; 32]).is_err());
        let mut zero_pair = [1.0; 32];
        zero_pair[4] = 0.0;
        zero_pair[5] = 0.0;
        assert!(ruler_peak(&grid, &rulers, (1, 1), &cfg, &zero_pair).is_err());
        let other = RulerTokenSet::new(&grid.with_t0(3), 4).unwrap();
        assert!(ruler_peak(&grid, &other, (1, 1), &cfg, &[1.0; 32]).is_err());
    }

    #[test]
    fn score_gradient_matches_central_differences() {
        let cfg = config(8, AxisCount::Three, AssignMode::Interleaved);
        let q = [0.5, -1.0, 2.0, 0.25, 1.5, -0.5, 0.1, 0.9];
        let k = [1.1, 0.3, -0.4, 0.8, -1.2, 0.6, 0.2, -0.7];
        let pq = PositionId::Thw { t: 2, h: 5, w: 9 };
        let pk = PositionId::Thw { t: 2, h: 1, w: 4 };
        let g = score_gradient_q(&q, &k, &pq, &pk, &cfg).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..8)
            .map(|i| {
                let (mut p, mut m) = (q, q);
                p[i] += h;
                m[i] -= h;
                (score(&p, &k, &pq, &pk, &cfg).unwrap() - score(&m, &k, &pq, &pk, &cfg).unwrap())
                    / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) / norm(&g) < 1e-6);
    }
}
