//! `ruler` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or validation errors, 2 when a
//! computation, file read or parse fails (including a failing `check`).
//! Reports go to standard output, diagnostics to standard error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::attention::{ruler_peak, AttentionConfig, RulerPeak};
use crate::check::{run_all, CheckOutcome, DEFAULT_SEED};
use crate::eval::{evaluate, read_dataset, read_predictions, EvalReport, GroundingSample};
use crate::mrope::{
    axis_frequency_profile, AssignMode, Axis, AxisAssignment, AxisCount, AxisProfile,
};
use crate::rope::{FrequencySpectrum, DEFAULT_BASE};
use crate::ruler::{
    overhead, read_resolutions, ImageGrid, MultimodalSequence, Overhead, Resolution, RulerTokenSet,
    BUNDLED_RESOLUTIONS,
};
use crate::{Error, SCHEMA_VERSION};

/// Environment variable that overrides the default property-suite seed.
pub const SEED_ENV: &str = "RULER_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "ruler",
    version,
    about = "Positional kernels, ruler tokens and grounding evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the rotary frequency spectrum.
    Spectrum(SpectrumArgs),
    /// Show a frequency-to-axis assignment and its per-axis profile.
    Assign(AssignArgs),
    /// Emit the ruler tokens for one image.
    Ruler(RulerArgs),
    /// Assemble a multimodal sequence and dump it.
    Sequence(SequenceArgs),
    /// Ruler-to-vision token ratios over a list of resolutions.
    Overhead(OverheadArgs),
    /// Element accuracy per ruler interval from pre-computed prediction files.
    Sweep(SweepArgs),
    /// Score every ruler token against one vision patch.
    AttnDemo(AttnDemoArgs),
    /// Run the property suite.
    Check(CheckArgs),
    /// Element accuracy of one prediction file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct Format {
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_BASE)]
    base: f64,
    #[command(flatten)]
    format: Format,
}

#[derive(Debug, Args)]
struct AssignArgs {
    #[arg(long)]
    half_dim: usize,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    axes: u8,
    #[arg(long, value_parser = parse_mode)]
    mode: AssignMode,
    /// Sequential chunk sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sections: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_BASE)]
    base: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct RulerArgs {
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    #[arg(long, default_value_t = 28)]
    patch: u32,
    #[arg(long, default_value_t = 8)]
    interval: u32,
    #[arg(long, default_value_t = 0)]
    t0: i64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    axes: u8,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SequenceArgs {
    /// Image size in pixels, `WIDTHxHEIGHT`; repeat for several images.
    #[arg(long = "image", value_parser = parse_dims)]
    images: Vec<(u32, u32)>,
    #[arg(long, default_value_t = 28)]
    patch: u32,
    #[arg(long, default_value_t = 8, conflicts_with = "no_ruler")]
    interval: u32,
    /// Omit ruler tokens.
    #[arg(long)]
    no_ruler: bool,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    axes: u8,
    /// System text, split on whitespace into tokens.
    #[arg(long, default_value = "")]
    system: String,
    /// Prompt text, split on whitespace into tokens.
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct OverheadArgs {
    /// `name,width,height` lines; defaults to the bundled list.
    #[arg(long)]
    resolutions: Option<PathBuf>,
    #[arg(long, default_value_t = 28)]
    patch: u32,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    intervals: Vec<u32>,
    #[command(flatten)]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory holding one `s<interval>.jsonl` prediction file per interval.
    #[arg(long)]
    preds_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    intervals: Vec<u32>,
    #[arg(long)]
    normalized: bool,
    #[command(flatten)]
    format: Format,
}

#[derive(Debug, Args)]
struct AttnDemoArgs {
    /// Grid size in patches, `ROWSxCOLS`.
    #[arg(long, value_parser = parse_dims)]
    grid: (u32, u32),
    #[arg(long)]
    interval: u32,
    /// Vision patch to probe, `ROW,COL`.
    #[arg(long, value_parser = parse_probe)]
    probe: (u32, u32),
    #[arg(long, value_parser = parse_mode, default_value = "inter")]
    mode: AssignMode,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_BASE)]
    base: f64,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    axes: u8,
    #[arg(long, default_value_t = 28)]
    patch: u32,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Overrides both `RULER_SEED` and the built-in default.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    /// Predictions are in [0, 1] and get scaled by each sample's image size.
    #[arg(long)]
    normalized: bool,
    #[command(flatten)]
    format: Format,
}

fn parse_mode(s: &str) -> Result<AssignMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pair(s: &str, sep: char) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two integers separated by {sep:?}"))?;
    let num = |x: &str| x.trim().parse::<u32>().map_err(|e| format!("{x:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    parse_pair(&s.to_ascii_lowercase(), 'x')
}

fn parse_probe(s: &str) -> Result<(u32, u32), String> {
    parse_pair(s, ',')
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

type CmdResult = Result<String, Failure>;

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

fn to_json<T: Serialize>(body: T) -> String {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })
    .expect("reports serialize");
    s.push('\n');
    s
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))
}

fn axis_count(n: u8) -> AxisCount {
    if n == 3 {
        AxisCount::Three
    } else {
        AxisCount::Two
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let (result, passed) = match cli.command {
        Command::Check(args) => match check(args) {
            Ok((text, passed)) => (Ok(text), passed),
            Err(f) => (Err(f), false),
        },
        other => (dispatch(other), true),
    };
    match result {
        Ok(text) => {
            if out.write_all(text.as_bytes()).is_err() {
                return 2;
            }
            if passed {
                0
            } else {
                let _ = writeln!(err, "ruler: property suite failed");
                2
            }
        }
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "ruler: {msg}");
            1
        }
        Err(Failure::Failed(msg)) => {
            let _ = writeln!(err, "ruler: {msg}");
            2
        }
    }
}

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Spectrum(a) => spectrum(a),
        Command::Assign(a) => assign(a),
        Command::Ruler(a) => ruler(a),
        Command::Sequence(a) => sequence(a),
        Command::Overhead(a) => overhead_table(a),
        Command::Sweep(a) => sweep(a),
        Command::AttnDemo(a) => attn_demo(a),
        Command::Eval(a) => eval(a),
        Command::Check(_) => unreachable!("handled by run"),
    }
}

fn spectrum(a: SpectrumArgs) -> CmdResult {
    let spec = FrequencySpectrum::new(a.dim, a.base)?;
    if a.format.json {
        return Ok(to_json(&spec));
    }
    if a.format.csv {
        #[derive(Serialize)]
        struct Row {
            schema_version: u32,
            j: usize,
            theta: f64,
        }
        return Ok(to_csv(spec.thetas().iter().enumerate().map(
            |(j, &theta)| Row {
                schema_version: SCHEMA_VERSION,
                j,
                theta,
            },
        )));
    }
    let mut s = format!(
        "# head_dim={} base={}\nj\ttheta\n",
        spec.head_dim(),
        spec.base()
    );
    for (j, theta) in spec.thetas().iter().enumerate() {
        let _ = writeln!(s, "{j}\t{theta:e}");
    }
    Ok(s)
}

fn assign(a: AssignArgs) -> CmdResult {
    let axes = axis_count(a.axes);
    let assignment = AxisAssignment::new(a.half_dim, axes, a.mode, a.sections.as_deref())?;
    let spec = FrequencySpectrum::new(2 * a.half_dim, a.base)?;
    let profile = axis_frequency_profile(&assignment, &spec)?;
    if a.json {
        #[derive(Serialize)]
        struct Report<'a> {
            half_dim: usize,
            axis_count: usize,
            mode: AssignMode,
            mapping: Vec<Axis>,
            #[serde(skip_serializing_if = "Option::is_none")]
            section_sizes: Option<&'a [usize]>,
            profile: &'a [AxisProfile],
        }
        return Ok(to_json(Report {
            half_dim: a.half_dim,
            axis_count: axes.get(),
            mode: a.mode,
            mapping: assignment.axis_labels(),
            section_sizes: assignment.section_sizes(),
            profile: &profile,
        }));
    }
    let labels: Vec<String> = assignment
        .axis_labels()
        .iter()
        .map(Axis::to_string)
        .collect();
    let mut s = format!(
        "mode: {}\nmapping: [{}]\n\naxis\tcount\tmin_j\tmax_j\tmax_theta\tmin_theta\n",
        a.mode,
        labels.join(", ")
    );
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for p in &profile {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.axis,
            p.count,
            opt(p.min_j.map(|j| j.to_string())),
            opt(p.max_j.map(|j| j.to_string())),
            opt(p.max_theta.map(|t| format!("{t:.3e}"))),
            opt(p.min_theta.map(|t| format!("{t:.3e}"))),
        );
    }
    Ok(s)
}

fn ruler(a: RulerArgs) -> CmdResult {
    let axes = axis_count(a.axes);
    let grid = ImageGrid::new(a.width, a.height, a.patch, a.t0)?;
    let set = RulerTokenSet::new(&grid, a.interval)?;
    if a.json {
        #[derive(Serialize)]
        struct Token<'a> {
            index: u32,
            position: crate::mrope::PositionId,
            face_value: &'a str,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            grid: ImageGrid,
            interval: u32,
            arithmetic_bound: u64,
            count: usize,
            tokens: Vec<Token<'a>>,
        }
        return Ok(to_json(Report {
            grid,
            interval: set.interval,
            arithmetic_bound: set.arithmetic_bound,
            count: set.len(),
            tokens: set
                .tokens
                .iter()
                .map(|t| Token {
                    index: t.index,
                    position: t.position_id(axes),
                    face_value: &t.face_value,
                })
                .collect(),
        }));
    }
    let mut s = format!(
        "grid: {} cols x {} rows of {}px patches, t0={}\ninterval: {}  arithmetic bound: {}px  tokens: {}\n\nindex\tposition\tface_value\n",
        grid.cols, grid.rows, grid.patch_px, grid.t0, set.interval, set.arithmetic_bound, set.len()
    );
    for t in &set.tokens {
        let _ = writeln!(s, "{}\t{}\t{}", t.index, t.position_id(axes), t.face_value);
    }
    Ok(s)
}

fn sequence(a: SequenceArgs) -> CmdResult {
    let images = a
        .images
        .iter()
        .map(|&(w, h)| {
            let g = ImageGrid::new(w, h, a.patch, 0)?;
            Ok((g, g.patch_count() as usize))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let words = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let interval = (!a.no_ruler).then_some(a.interval);
    let seq = MultimodalSequence::assemble(
        &words(&a.system),
        &images,
        &words(&a.prompt),
        interval,
        axis_count(a.axes),
    )?;
    if a.json {
        Ok(to_json(&seq))
    } else {
        Ok(seq.dump())
    }
}

#[derive(Serialize)]
struct OverheadRow {
    schema_version: u32,
    name: String,
    width: u32,
    height: u32,
    patch: u32,
    interval: u32,
    vision_tokens: u64,
    ruler_tokens: u64,
    ratio_percent: f64,
}

fn overhead_rows(
    resolutions: &[Resolution],
    patch: u32,
    intervals: &[u32],
) -> Result<Vec<OverheadRow>, Error> {
    let mut rows = Vec::new();
    for r in resolutions {
        for &s in intervals {
            let Overhead {
                vision_count,
                ruler_count,
                ratio,
            } = overhead(r.width, r.height, patch, s)?;
            rows.push(OverheadRow {
                schema_version: SCHEMA_VERSION,
                name: r.name.clone(),
                width: r.width,
                height: r.height,
                patch,
                interval: s,
                vision_tokens: vision_count,
                ruler_tokens: ruler_count,
                ratio_percent: ratio * 100.0,
            });
        }
    }
    Ok(rows)
}

fn overhead_table(a: OverheadArgs) -> CmdResult {
    if a.intervals.is_empty() {
        return Err(Failure::Usage("at least one interval is required".into()));
    }
    let resolutions = match &a.resolutions {
        Some(path) => read_resolutions(open(path)?)?,
        None => read_resolutions(BUNDLED_RESOLUTIONS.as_bytes())?,
    };
    let rows = overhead_rows(&resolutions, a.patch, &a.intervals)?;
    if a.format.csv {
        return Ok(to_csv(rows));
    }
    if a.format.json {
        #[derive(Serialize)]
        struct Report {
            patch: u32,
            intervals: Vec<u32>,
            rows: Vec<OverheadRow>,
        }
        return Ok(to_json(Report {
            patch: a.patch,
            intervals: a.intervals,
            rows,
        }));
    }
    // Figure-style grid: one line per resolution, one column per interval.
    let mut s = format!("ruler/vision token ratio (%), patch {}px\n", a.patch);
    let _ = write!(s, "{:<20}{:>12}{:>8}", "resolution", "size", "vision");
    for i in &a.intervals {
        let _ = write!(s, "{:>10}", format!("s={i}"));
    }
    s.push('\n');
    for chunk in rows.chunks(a.intervals.len()) {
        let first = &chunk[0];
        let _ = write!(
            s,
            "{:<20}{:>12}{:>8}",
            first.name,
            format!("{}x{}", first.width, first.height),
            first.vision_tokens
        );
        for row in chunk {
            let _ = write!(s, "{:>10.3}", row.ratio_percent);
        }
        s.push('\n');
    }
    Ok(s)
}

#[derive(Serialize)]
struct SummaryRow {
    schema_version: u32,
    label: String,
    scope: String,
    name: String,
    total: usize,
    hits: usize,
    accuracy: f64,
}

fn summary_rows(label: &str, r: &EvalReport) -> Vec<SummaryRow> {
    let overall = SummaryRow {
        schema_version: SCHEMA_VERSION,
        label: label.to_string(),
        scope: "overall".into(),
        name: "all".into(),
        total: r.total,
        hits: r.hits,
        accuracy: r.accuracy,
    };
    std::iter::once(overall)
        .chain(r.per_platform.iter().map(|(name, p)| SummaryRow {
            schema_version: SCHEMA_VERSION,
            label: label.to_string(),
            scope: "platform".into(),
            name: name.clone(),
            total: p.total,
            hits: p.hits,
            accuracy: p.accuracy,
        }))
        .collect()
}

fn load_dataset(path: &Path) -> Result<Vec<GroundingSample>, Failure> {
    read_dataset(open(path)?).map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))
}

fn load_report(
    samples: &[GroundingSample],
    preds: &Path,
    normalized: bool,
) -> Result<EvalReport, Failure> {
    let records = read_predictions(open(preds)?)
        .map_err(|e| Failure::Failed(format!("{}: {e}", preds.display())))?;
    evaluate(samples, &records, normalized)
        .map_err(|e| Failure::Failed(format!("{}: {e}", preds.display())))
}

fn eval(a: EvalArgs) -> CmdResult {
    let samples = load_dataset(&a.dataset)?;
    let report = load_report(&samples, &a.preds, a.normalized)?;
    if a.format.json {
        return Ok(to_json(&report));
    }
    if a.format.csv {
        return Ok(to_csv(summary_rows("eval", &report)));
    }
    let mut s = format!(
        "element accuracy: {:.4} ({}/{})\n",
        report.accuracy, report.hits, report.total
    );
    for (name, p) in &report.per_platform {
        let _ = writeln!(s, "  {name:<12}{:.4} ({}/{})", p.accuracy, p.hits, p.total);
    }
    let lists = [
        ("missing predictions", &report.missing),
        ("unknown prediction ids", &report.unknown),
        ("unparseable outputs", &report.unparsed),
        ("ambiguous outputs", &report.ambiguous),
    ];
    for (what, ids) in lists {
        if !ids.is_empty() {
            let _ = writeln!(s, "{what}: {}", ids.join(", "));
        }
    }
    Ok(s)
}

fn sweep(a: SweepArgs) -> CmdResult {
    if a.intervals.is_empty() {
        return Err(Failure::Usage("at least one interval is required".into()));
    }
    let samples = load_dataset(&a.dataset)?;
    let mut reports = BTreeMap::new();
    for &s in &a.intervals {
        let path = a.preds_dir.join(format!("s{s}.jsonl"));
        reports.insert(s, load_report(&samples, &path, a.normalized)?);
    }
    let platforms: Vec<String> = samples
        .iter()
        .map(|s| s.platform.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if a.format.csv {
        return Ok(to_csv(
            reports
                .iter()
                .flat_map(|(s, r)| summary_rows(&format!("s={s}"), r)),
        ));
    }
    if a.format.json {
        #[derive(Serialize)]
        struct Entry {
            interval: u32,
            total: usize,
            hits: usize,
            accuracy: f64,
            per_platform: BTreeMap<String, crate::eval::PlatformStats>,
        }
        let entries: Vec<Entry> = reports
            .into_iter()
            .map(|(interval, r)| Entry {
                interval,
                total: r.total,
                hits: r.hits,
                accuracy: r.accuracy,
                per_platform: r.per_platform,
            })
            .collect();
        #[derive(Serialize)]
        struct Report {
            intervals: Vec<Entry>,
        }
        return Ok(to_json(Report { intervals: entries }));
    }
    let mut s = format!("{:<10}{:>10}", "interval", "overall");
    for p in &platforms {
        let _ = write!(s, "{p:>12}");
    }
    s.push('\n');
    for (interval, r) in &reports {
        let _ = write!(s, "{:<10}{:>10.4}", format!("s={interval}"), r.accuracy);
        for p in &platforms {
            let acc = r.per_platform.get(p).map_or(0.0, |x| x.accuracy);
            let _ = write!(s, "{acc:>12.4}");
        }
        s.push('\n');
    }
    Ok(s)
}

fn attn_demo(a: AttnDemoArgs) -> CmdResult {
    let (rows, cols) = a.grid;
    let spec = FrequencySpectrum::new(a.dim, a.base)?;
    let assign = AxisAssignment::new(a.dim / 2, axis_count(a.axes), a.mode, None)?;
    let cfg = AttentionConfig::new(spec, assign)?;
    let grid = ImageGrid::new(
        cols.checked_mul(a.patch)
            .ok_or_else(|| Failure::Usage("grid too large".into()))?,
        rows.checked_mul(a.patch)
            .ok_or_else(|| Failure::Usage("grid too large".into()))?,
        a.patch,
        0,
    )?;
    let rulers = RulerTokenSet::new(&grid, a.interval)?;
    let probe = vec![1.0; a.dim];
    let peak: RulerPeak = ruler_peak(&grid, &rulers, a.probe, &cfg, &probe)?;
    if a.json {
        #[derive(Serialize)]
        struct Report<'a> {
            rows: u32,
            cols: u32,
            interval: u32,
            probe: (u32, u32),
            mode: AssignMode,
            head_dim: usize,
            #[serde(flatten)]
            peak: &'a RulerPeak,
        }
        return Ok(to_json(Report {
            rows,
            cols,
            interval: a.interval,
            probe: a.probe,
            mode: a.mode,
            head_dim: a.dim,
            peak: &peak,
        }));
    }
    let mut s = format!(
        "probe ({}, {}) on {rows}x{cols} grid, interval {}, {} mode, d={}\n\nindex\tface\tscore\n",
        a.probe.0, a.probe.1, a.interval, a.mode, a.dim
    );
    for (sc, tok) in peak.scores.iter().zip(&rulers.tokens) {
        let mark = if peak.tied.contains(&sc.index) {
            "  *"
        } else {
            ""
        };
        let _ = writeln!(s, "{}\t{}\t{:.6}{mark}", sc.index, tok.face_value, sc.score);
    }
    let _ = writeln!(
        s,
        "\nwinner: {} (score {:.6}){}",
        peak.index,
        peak.score,
        if peak.tie {
            format!(", tied with {:?}", &peak.tied[1..])
        } else {
            String::new()
        }
    );
    Ok(s)
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn check(a: CheckArgs) -> Result<(String, bool), Failure> {
    let seed = resolve_seed(a.seed)?;
    let outcomes = run_all(seed);
    let passed = outcomes.iter().all(|o| o.passed);
    if a.json {
        #[derive(Serialize)]
        struct Report {
            seed: u64,
            passed: bool,
            checks: Vec<CheckOutcome>,
        }
        return Ok((
            to_json(Report {
                seed,
                passed,
                checks: outcomes,
            }),
            passed,
        ));
    }
    let mut s = format!("property suite, seed {seed}\n");
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        let _ = write!(s, "{status} {:<32}", o.name);
        if o.passed {
            let _ = writeln!(s, "{} cases", o.cases);
        } else {
            let _ = writeln!(s, "{}", o.detail);
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let _ = writeln!(s, "{} passed, {failed} failed", outcomes.len() - failed);
    Ok((s, passed))
}
