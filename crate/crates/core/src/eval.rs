//! Element-accuracy evaluation for GUI grounding.
//!
//! A prediction is a hit when the predicted point lies inside the target
//! element's bounding box, boundaries included. Samples without a prediction
//! count as misses and are listed in the report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Axis-aligned box in raw pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let ok = [x_min, y_min, x_max, y_max]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && x_min <= x_max
            && y_min <= y_max;
        if !ok {
            return Err(Error::invalid_arg(format!(
                "malformed box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: Point) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingSample {
    pub id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub instruction: String,
    pub target: BBox,
    pub platform: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub point: Point,
}

/// Result of [`parse_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedPoint {
    pub point: Point,
    /// More than one coordinate pair was present; the first one was taken.
    pub ambiguous: bool,
}

const NUM: &str = r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)";

static POINT_RE: LazyLock<Regex> = LazyLock::new(|| {
    let pattern = format!(
        r"\bx\s*=\s*({NUM})\s*,\s*y\s*=\s*({NUM})|\(\s*({NUM})\s*,\s*({NUM})\s*\)|({NUM})\s*,\s*({NUM})"
    );
    Regex::new(&pattern).expect("valid coordinate pattern")
});

/// Extracts the first coordinate pair from model output.
///
/// Accepted forms, anywhere in the text: `x=<num>, y=<num>`,
/// `(<num>, <num>)` and `<num>, <num>`.
pub fn parse_point(text: &str) -> Result<ParsedPoint> {
    let mut matches = POINT_RE.captures_iter(text);
    let caps = matches.next().ok_or_else(|| Error::Parse {
        text: text.to_string(),
    })?;
    let mut nums = caps
        .iter()
        .skip(1)
        .flatten()
        .map(|m| m.as_str().parse::<f64>());
    let (Some(Ok(x)), Some(Ok(y))) = (nums.next(), nums.next()) else {
        return Err(Error::Parse {
            text: text.to_string(),
        });
    };
    Ok(ParsedPoint {
        point: Point { x, y },
        ambiguous: matches.next().is_some(),
    })
}

/// Maps a point in `[0, 1]^2` onto raw pixels. No rounding is applied.
pub fn denormalize(u: f64, v: f64, width_px: u32, height_px: u32) -> Result<Point> {
    if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
        return Err(Error::invalid_arg(format!(
            "normalized point ({u}, {v}) outside [0, 1]"
        )));
    }
    Ok(Point {
        x: u * f64::from(width_px),
        y: v * f64::from(height_px),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatformStats {
    pub total: usize,
    pub hits: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub id: String,
    pub platform: String,
    pub hit: bool,
    pub point: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub total: usize,
    pub hits: usize,
    /// `hits / total`, or 0 for an empty dataset.
    pub accuracy: f64,
    pub per_platform: BTreeMap<String, PlatformStats>,
    pub samples: Vec<SampleOutcome>,
    /// Sample ids without a usable prediction.
    pub missing: Vec<String>,
    /// Prediction ids that match no sample.
    pub unknown: Vec<String>,
    /// Prediction ids whose raw text held no coordinate pair.
    pub unparsed: Vec<String>,
    /// Prediction ids whose raw text held more than one coordinate pair.
    pub ambiguous: Vec<String>,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut dup: Vec<String> = ids
        .filter(|id| !seen.insert(*id))
        .map(str::to_string)
        .collect();
    dup.sort();
    dup.dedup();
    dup
}

/// Scores `preds` against `samples`.
pub fn element_accuracy(samples: &[GroundingSample], preds: &[Prediction]) -> Result<EvalReport> {
    let dup = duplicates(preds.iter().map(|p| p.id.as_str()));
    if !dup.is_empty() {
        return Err(Error::invalid_input(format!(
            "duplicate prediction ids: {}",
            dup.join(", ")
        )));
    }
    let dup = duplicates(samples.iter().map(|s| s.id.as_str()));
    if !dup.is_empty() {
        return Err(Error::invalid_input(format!(
            "duplicate sample ids: {}",
            dup.join(", ")
        )));
    }

    let by_id: HashMap<&str, Point> = preds.iter().map(|p| (p.id.as_str(), p.point)).collect();
    let mut outcomes = Vec::with_capacity(samples.len());
    let mut missing = Vec::new();
    let mut platform_counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let point = by_id.get(s.id.as_str()).copied();
        if point.is_none() {
            missing.push(s.id.clone());
        }
        let hit = point.is_some_and(|p| s.target.contains(p));
        let entry = platform_counts.entry(s.platform.clone()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(hit);
        outcomes.push(SampleOutcome {
            id: s.id.clone(),
            platform: s.platform.clone(),
            hit,
            point,
        });
    }

    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut unknown: Vec<String> = preds
        .iter()
        .filter(|p| !known.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    unknown.sort();

    let hits = outcomes.iter().filter(|o| o.hit).count();
    let per_platform = platform_counts
        .into_iter()
        .map(|(name, (total, hits))| {
            (
                name,
                PlatformStats {
                    total,
                    hits,
                    accuracy: ratio(hits, total),
                },
            )
        })
        .collect();
    Ok(EvalReport {
        total: samples.len(),
        hits,
        accuracy: ratio(hits, samples.len()),
        per_platform,
        samples: outcomes,
        missing,
        unknown,
        unparsed: Vec::new(),
        ambiguous: Vec::new(),
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(flatten)]
    pub value: PredictionValue,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PredictionValue {
    Point { x: f64, y: f64 },
    RawText { raw_text: String },
}

/// Parses raw text, optionally denormalizes, then scores.
///
/// Raw text without a coordinate pair is a miss and is listed under
/// `unparsed`. With `normalized`, points are mapped through [`denormalize`]
/// using the matching sample's image size.
pub fn evaluate(
    samples: &[GroundingSample],
    records: &[PredictionRecord],
    normalized: bool,
) -> Result<EvalReport> {
    let sizes: HashMap<&str, (u32, u32)> = samples
        .iter()
        .map(|s| (s.id.as_str(), (s.image_width, s.image_height)))
        .collect();
    let mut preds = Vec::with_capacity(records.len());
    let mut unparsed = Vec::new();
    let mut ambiguous = Vec::new();
    for rec in records {
        let raw = match &rec.value {
            PredictionValue::Point { x, y } => Point { x: *x, y: *y },
            PredictionValue::RawText { raw_text } => match parse_point(raw_text) {
                Ok(parsed) => {
                    if parsed.ambiguous {
                        ambiguous.push(rec.id.clone());
                    }
                    parsed.point
                }
                Err(Error::Parse { .. }) => {
                    unparsed.push(rec.id.clone());
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        let point = match (normalized, sizes.get(rec.id.as_str())) {
            (true, Some(&(w, h))) => denormalize(raw.x, raw.y, w, h)
                .map_err(|e| Error::invalid_input(format!("prediction {}: {e}", rec.id)))?,
            _ => raw,
        };
        preds.push(Prediction {
            id: rec.id.clone(),
            point,
        });
    }
    let mut report = element_accuracy(samples, &preds)?;
    report.unparsed = unparsed;
    report.ambiguous = ambiguous;
    Ok(report)
}

#[derive(Deserialize)]
struct SampleRecord {
    id: String,
    image_width: u32,
    image_height: u32,
    instruction: String,
    bbox: [f64; 4],
    platform: String,
}

/// Reads a line-delimited JSON dataset.
pub fn read_dataset(reader: impl BufRead) -> Result<Vec<GroundingSample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = n + 1;
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::invalid_input(format!("dataset line {lineno}: {e}")))?;
        let [x0, y0, x1, y1] = rec.bbox;
        let target = BBox::new(x0, y0, x1, y1)
            .map_err(|e| Error::invalid_input(format!("dataset line {lineno}: {e}")))?;
        if rec.image_width == 0 || rec.image_height == 0 {
            return Err(Error::invalid_input(format!(
                "dataset line {lineno}: image size must be positive"
            )));
        }
        if target.x_max > f64::from(rec.image_width) || target.y_max > f64::from(rec.image_height) {
            return Err(Error::invalid_input(format!(
                "dataset line {lineno}: box exceeds the {}x{} image",
                rec.image_width, rec.image_height
            )));
        }
        out.push(GroundingSample {
            id: rec.id,
            image_width: rec.image_width,
            image_height: rec.image_height,
            instruction: rec.instruction,
            target,
            platform: rec.platform,
        });
    }
    Ok(out)
}

/// Reads line-delimited prediction records (`id, x, y` or `id, raw_text`).
pub fn read_predictions(reader: impl BufRead) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::invalid_input(format!("predictions line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
