//! Patch grids, ruler coordinate tokens and multimodal sequence assembly.
//!
//! A screenshot of `width_px x height_px` pixels is cut into `p x p` patches
//! (partial patches at the right/bottom edge are padded, so the grid is
//! `ceil(width/p)` columns by `ceil(height/p)` rows). Patch `(r, c)` gets the
//! spatial position `h = t0 + r, w = t0 + c`.
//!
//! A ruler token with grid index `i` carries the position `t0 + i` on every
//! axis and the decimal pixel coordinate `i * p` as its payload, so it lines
//! up with row `i` on the height axis and with column `i` on the width axis.
//! Ruler tokens are emitted every `s` grid steps:
//! `i in {0, s, 2s, ..., floor(max(H, W) / s) * s}`. A model that copies the
//! nearest ruler value then only has to add less than `s * p` pixels.

use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::mrope::{AxisCount, PositionId};
use crate::{Error, Result};

/// Geometry of one image's patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ImageGrid {
    pub width_px: u32,
    pub height_px: u32,
    pub patch_px: u32,
    /// `W`: patches along the width.
    pub cols: u32,
    /// `H`: patches along the height.
    pub rows: u32,
    /// Spatial position id of patch `(0, 0)`.
    pub t0: i64,
}

impl ImageGrid {
    pub fn new(width_px: u32, height_px: u32, patch_px: u32, t0: i64) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::invalid_arg(format!(
                "image size must be positive, got {width_px}x{height_px}"
            )));
        }
        if patch_px == 0 {
            return Err(Error::invalid_arg("patch size must be positive"));
        }
        if t0 < 0 {
            return Err(Error::invalid_arg(format!(
                "t0 must be non-negative, got {t0}"
            )));
        }
        Ok(Self {
            width_px,
            height_px,
            patch_px,
            cols: width_px.div_ceil(patch_px),
            rows: height_px.div_ceil(patch_px),
            t0,
        })
    }

    /// The same geometry anchored at a different starting position.
    pub fn with_t0(self, t0: i64) -> Self {
        Self { t0, ..self }
    }

    pub fn patch_count(&self) -> u64 {
        u64::from(self.rows) * u64::from(self.cols)
    }

    /// `max(H, W)`.
    pub fn max_side(&self) -> u32 {
        self.rows.max(self.cols)
    }

    /// Position of the vision token for patch row `r`, column `c`.
    pub fn patch_position(&self, row: u32, col: u32, axes: AxisCount) -> PositionId {
        let h = self.t0 + i64::from(row);
        let w = self.t0 + i64::from(col);
        match axes {
            AxisCount::Two => PositionId::Hw { h, w },
            AxisCount::Three => PositionId::Thw { t: self.t0, h, w },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulerToken {
    /// Grid index `i`, always a multiple of the interval.
    pub index: u32,
    /// Shared position id `t0 + i`, identical on every axis.
    pub position: i64,
    /// Decimal pixel coordinate `i * p`.
    pub face_value: String,
}

impl RulerToken {
    pub fn position_id(&self, axes: AxisCount) -> PositionId {
        PositionId::uniform(self.position, axes)
    }

    pub fn pixel(&self, patch_px: u32) -> u64 {
        u64::from(self.index) * u64::from(patch_px)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulerTokenSet {
    pub interval: u32,
    pub patch_px: u32,
    pub t0: i64,
    /// Largest offset, in pixels, between a coordinate and its reference ruler value.
    pub arithmetic_bound: u64,
    pub tokens: Vec<RulerToken>,
}

impl RulerTokenSet {
    pub fn new(grid: &ImageGrid, interval: u32) -> Result<Self> {
        if interval == 0 {
            return Err(Error::invalid_arg("ruler interval must be at least 1"));
        }
        let tokens = (0..=grid.max_side() / interval)
            .map(|k| {
                let index = k * interval;
                RulerToken {
                    index,
                    position: grid.t0 + i64::from(index),
                    face_value: (u64::from(index) * u64::from(grid.patch_px)).to_string(),
                }
            })
            .collect();
        Ok(Self {
            interval,
            patch_px: grid.patch_px,
            t0: grid.t0,
            arithmetic_bound: u64::from(interval) * u64::from(grid.patch_px),
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The ruler token with the largest face value not exceeding `x_px`.
    pub fn reference_for(&self, x_px: f64) -> Option<&RulerToken> {
        self.tokens
            .iter()
            .take_while(|t| t.pixel(self.patch_px) as f64 <= x_px)
            .last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    System,
    Ruler,
    Vision,
    Prompt,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::System => "system",
            Segment::Ruler => "ruler",
            Segment::Vision => "vision",
            Segment::Prompt => "prompt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Text(String),
    Ruler(String),
    Patch { image: usize, row: u32, col: u32 },
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Text(s) => {
                for ch in s.chars() {
                    match ch {
                        '\\' => f.write_str("\\\\")?,
                        '\t' => f.write_str("\\t")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                Ok(())
            }
            Payload::Ruler(face) => f.write_str(face),
            Payload::Patch { image, row, col } => write!(f, "<img{image}:{row},{col}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceToken {
    pub index: usize,
    pub segment: Segment,
    pub position: PositionId,
    pub payload: Payload,
}

/// Token sequence `[system, (ruler, vision)*, prompt]` with position ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultimodalSequence {
    pub axis_count: AxisCount,
    /// Each image's grid, re-anchored at the `t0` it received in the sequence.
    pub images: Vec<ImageGrid>,
    pub tokens: Vec<SequenceToken>,
}

impl MultimodalSequence {
    /// Assembles the sequence.
    ///
    /// Every image comes with the number of vision placeholders the caller
    /// expects; it must equal the grid's patch count. The `t0` stored in the
    /// supplied grids is ignored: each segment starts one past the largest
    /// position coordinate used so far. `interval = None` emits no ruler
    /// tokens.
    pub fn assemble(
        system: &[String],
        images: &[(ImageGrid, usize)],
        prompt: &[String],
        interval: Option<u32>,
        axis_count: AxisCount,
    ) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut anchored = Vec::with_capacity(images.len());
        let mut max_used: i64 = -1;

        let mut push = |segment, position: PositionId, payload, max_used: &mut i64| {
            *max_used = (*max_used).max(position.max_coord());
            let index = tokens.len();
            tokens.push(SequenceToken {
                index,
                segment,
                position,
                payload,
            });
        };

        for text in system {
            let pos = PositionId::uniform(max_used + 1, axis_count);
            push(
                Segment::System,
                pos,
                Payload::Text(text.clone()),
                &mut max_used,
            );
        }

        for (image, (grid, vision_count)) in images.iter().enumerate() {
            if *vision_count as u64 != grid.patch_count() {
                return Err(Error::invalid_arg(format!(
                    "image {image}: {vision_count} vision tokens supplied, grid {}x{} has {}",
                    grid.rows,
                    grid.cols,
                    grid.patch_count()
                )));
            }
            let grid = grid.with_t0(max_used + 1);
            if let Some(s) = interval {
                let rulers = RulerTokenSet::new(&grid, s)?;
                for r in rulers.tokens {
                    let pos = r.position_id(axis_count);
                    push(
                        Segment::Ruler,
                        pos,
                        Payload::Ruler(r.face_value),
                        &mut max_used,
                    );
                }
            }
            for row in 0..grid.rows {
                for col in 0..grid.cols {
                    let pos = grid.patch_position(row, col, axis_count);
                    push(
                        Segment::Vision,
                        pos,
                        Payload::Patch { image, row, col },
                        &mut max_used,
                    );
                }
            }
            anchored.push(grid);
        }

        for text in prompt {
            let pos = PositionId::uniform(max_used + 1, axis_count);
            push(
                Segment::Prompt,
                pos,
                Payload::Text(text.clone()),
                &mut max_used,
            );
        }

        Ok(Self {
            axis_count,
            images: anchored,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tab-separated dump, one token per line:
    /// `seq_idx \t segment \t (t,h,w) \t payload`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                tok.index, tok.segment, tok.position, tok.payload
            ));
        }
        out
    }
}

/// Token counts for one resolution and interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overhead {
    pub vision_count: u64,
    pub ruler_count: u64,
    /// `ruler_count / vision_count`.
    pub ratio: f64,
}

pub fn overhead(width_px: u32, height_px: u32, patch_px: u32, interval: u32) -> Result<Overhead> {
    if interval == 0 {
        return Err(Error::invalid_arg("ruler interval must be at least 1"));
    }
    let grid = ImageGrid::new(width_px, height_px, patch_px, 0)?;
    let vision_count = grid.patch_count();
    let ruler_count = u64::from(grid.max_side() / interval) + 1;
    Ok(Overhead {
        vision_count,
        ruler_count,
        ratio: ruler_count as f64 / vision_count as f64,
    })
}

/// A named screen resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub name: String,
    pub width: u32,
    pub height: u32,
}

/// Common phone and desktop resolutions shipped with the crate.
pub const BUNDLED_RESOLUTIONS: &str = include_str!("../data/resolutions.csv");

/// Reads `name,width,height` lines. Blank lines and `#` comments are skipped.
pub fn read_resolutions(reader: impl Read) -> Result<Vec<Resolution>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (n, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::invalid_input(format!("resolutions: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let line = record.position().map_or(n as u64 + 1, |p| p.line());
        if record.len() != 3 {
            return Err(Error::invalid_input(format!(
                "resolutions line {line}: expected name,width,height"
            )));
        }
        let dim = |i: usize| {
            record[i]
                .parse::<u32>()
                .ok()
                .filter(|v| *v > 0)
                .ok_or_else(|| {
                    Error::invalid_input(format!(
                        "resolutions line {line}: {:?} is not a positive integer",
                        &record[i]
                    ))
                })
        };
        out.push(Resolution {
            name: record[0].to_string(),
            width: dim(1)?,
            height: dim(2)?,
        });
    }
    Ok(out)
}
