//! Seeded property suite exercising the invariants of every module.
//!
//! Each check either returns the number of cases it examined or a message
//! describing the first counterexample.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{ruler_peak, score, score_gradient_q, AttentionConfig};
use crate::eval::{
    denormalize, element_accuracy, parse_point, BBox, GroundingSample, Point, Prediction,
};
use crate::mrope::{apply_mrope, AssignMode, AxisAssignment, AxisCount, PositionId};
use crate::rope::{apply_rotation, dot, norm, rotation_gradient, FrequencySpectrum, DEFAULT_BASE};
use crate::ruler::{overhead, ImageGrid, MultimodalSequence, Payload, RulerTokenSet, Segment};

/// Seed used when neither `--seed` nor `RULER_SEED` is given.
pub const DEFAULT_SEED: u64 = 0x5EED_2025;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

type CheckFn = fn(&mut ChaCha8Rng) -> Result<usize, String>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("rope.norm_preservation", rope_norm_preservation),
    ("rope.relative_position", rope_relative_position),
    ("rope.composition", rope_composition),
    ("rope.gradient", rope_gradient),
    ("mrope.text_reduction", mrope_text_reduction),
    ("mrope.interleaved_balance", mrope_interleaved_balance),
    ("mrope.sequential_imbalance", mrope_sequential_imbalance),
    ("mrope.relative_position", mrope_relative_position),
    ("ruler.count_law", ruler_count_law),
    ("ruler.position_sharing", ruler_position_sharing),
    ("ruler.face_value_law", ruler_face_value_law),
    ("ruler.bound_law", ruler_bound_law),
    ("ruler.monotone_overhead", ruler_monotone_overhead),
    ("ruler.assembly_determinism", ruler_assembly_determinism),
    ("attention.self_match", attention_self_match),
    ("attention.diagonal_retrieval", attention_diagonal_retrieval),
    ("attention.shift_invariance", attention_shift_invariance),
    ("attention.gradient", attention_gradient),
    ("eval.accuracy_bounds", eval_accuracy_bounds),
    ("eval.platform_average", eval_platform_average),
    ("eval.parse_roundtrip", eval_parse_roundtrip),
    ("eval.denormalize", eval_denormalize),
    ("eval.oracle", eval_oracle),
    ("cli.deterministic_output", cli_deterministic_output),
];

/// Names of every check, in execution order.
pub fn check_names() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|(name, _)| *name)
}

/// Runs the whole suite. Every check gets its own generator derived from
/// `seed`, so results do not depend on execution order.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            match check(&mut rng) {
                Ok(cases) => CheckOutcome {
                    name,
                    passed: true,
                    cases,
                    detail: String::new(),
                },
                Err(detail) => CheckOutcome {
                    name,
                    passed: false,
                    cases: 0,
                    detail,
                },
            }
        })
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: crate::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_dim(rng: &mut ChaCha8Rng) -> usize {
    2 * rng.gen_range(1..=32)
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_axes(rng: &mut ChaCha8Rng) -> AxisCount {
    if rng.gen_bool(0.5) {
        AxisCount::Two
    } else {
        AxisCount::Three
    }
}

fn random_mode(rng: &mut ChaCha8Rng) -> AssignMode {
    if rng.gen_bool(0.5) {
        AssignMode::Sequential
    } else {
        AssignMode::Interleaved
    }
}

fn random_position(rng: &mut ChaCha8Rng, axes: AxisCount, range: i64) -> PositionId {
    let c: Vec<i64> = (0..axes.get())
        .map(|_| rng.gen_range(-range..=range))
        .collect();
    PositionId::from_coords(&c).expect("2 or 3 coords")
}

/// A spectrum/assignment pair with at least one frequency per axis.
fn random_config(rng: &mut ChaCha8Rng) -> Result<AttentionConfig, String> {
    let axes = random_axes(rng);
    let half = rng.gen_range(axes.get()..=32);
    let spec = lib(FrequencySpectrum::new(2 * half, DEFAULT_BASE))?;
    let assign = lib(AxisAssignment::new(half, axes, random_mode(rng), None))?;
    lib(AttentionConfig::new(spec, assign))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn rel_norm_err(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = approx.iter().zip(exact).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(exact).max(f64::MIN_POSITIVE)
}

/// Central differences of a scalar function of a vector.
fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

const CASES: usize = 1000;

fn rope_norm_preservation(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let d = random_dim(rng);
        let spec = lib(FrequencySpectrum::new(d, DEFAULT_BASE))?;
        let v = random_vec(rng, d);
        let m = rng.gen_range(-10_000..=10_000);
        let out = lib(apply_rotation(&v, m, &spec))?;
        ensure((norm(&out) - norm(&v)).abs() <= 1e-12, || {
            format!("norm changed for d={d}, m={m}")
        })?;
        for (a, b) in v.chunks(2).zip(out.chunks(2)) {
            ensure((norm(a) - norm(b)).abs() <= 1e-12, || {
                format!("pair norm changed for d={d}, m={m}")
            })?;
        }
    }
    Ok(CASES)
}

fn rope_relative_position(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let d = random_dim(rng);
        let spec = lib(FrequencySpectrum::new(d, DEFAULT_BASE))?;
        let (q, k) = (random_vec(rng, d), random_vec(rng, d));
        let m = rng.gen_range(-1000..=1000);
        let n = rng.gen_range(-1000..=1000);
        let lhs = dot(
            &lib(apply_rotation(&q, m, &spec))?,
            &lib(apply_rotation(&k, n, &spec))?,
        );
        let rhs = dot(&lib(apply_rotation(&q, m - n, &spec))?, &k);
        ensure((lhs - rhs).abs() <= 1e-9, || {
            format!("d={d}, m={m}, n={n}: {lhs} vs {rhs}")
        })?;
    }
    Ok(CASES)
}

fn rope_composition(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let d = random_dim(rng);
        let spec = lib(FrequencySpectrum::new(d, DEFAULT_BASE))?;
        let v = random_vec(rng, d);
        let m = rng.gen_range(-1000..=1000);
        let n = rng.gen_range(-1000..=1000);
        let twice = lib(apply_rotation(
            &lib(apply_rotation(&v, m, &spec))?,
            n,
            &spec,
        ))?;
        let once = lib(apply_rotation(&v, m + n, &spec))?;
        ensure(max_abs_diff(&twice, &once) <= 1e-9, || {
            format!("d={d}, m={m}, n={n}")
        })?;
    }
    Ok(CASES)
}

fn rope_gradient(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let cases = 200;
    for _ in 0..cases {
        let d = random_dim(rng);
        let spec = lib(FrequencySpectrum::new(d, DEFAULT_BASE))?;
        let v = random_vec(rng, d);
        let up = random_vec(rng, d);
        let m = rng.gen_range(-100..=100);
        let analytic = lib(rotation_gradient(&up, m, &spec))?;
        let fd = central_difference(
            |x| dot(&up, &apply_rotation(x, m, &spec).expect("length checked")),
            &v,
            1e-5,
        );
        let err = rel_norm_err(&fd, &analytic);
        ensure(err < 1e-6, || {
            format!("d={d}, m={m}: relative error {err:e}")
        })?;
    }
    Ok(cases)
}

fn mrope_text_reduction(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let axes = random_axes(rng);
        let mode = random_mode(rng);
        let half = rng.gen_range(1..=64);
        let spec = lib(FrequencySpectrum::new(2 * half, DEFAULT_BASE))?;
        let assign = lib(AxisAssignment::new(half, axes, mode, None))?;
        let v = random_vec(rng, 2 * half);
        let m = rng.gen_range(-100_000..=100_000);
        let multi = lib(apply_mrope(
            &v,
            &PositionId::uniform(m, axes),
            &assign,
            &spec,
        ))?;
        let plain = lib(apply_rotation(&v, m, &spec))?;
        let same = multi
            .iter()
            .zip(&plain)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || {
            format!("half_dim={half}, {mode}, m={m}: not bit-identical")
        })?;
    }
    Ok(CASES)
}

/// Does every axis own an index among the lowest and among the highest
/// `axis_count` frequencies?
pub fn spans_full_range(assign: &AxisAssignment) -> bool {
    let k = assign.axis_count().get();
    let map = assign.mapping();
    let half = map.len();
    if half < k {
        return false;
    }
    (0..k).all(|axis| map[..k].contains(&axis) && map[half - k..].contains(&axis))
}

fn mrope_interleaved_balance(_: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for axes in [AxisCount::Two, AxisCount::Three] {
        for half in 4..=128 {
            let inter = lib(AxisAssignment::new(
                half,
                axes,
                AssignMode::Interleaved,
                None,
            ))?;
            let counts = inter.counts();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            ensure(spread <= 1, || {
                format!("half_dim={half}: counts {counts:?}")
            })?;
            ensure(spans_full_range(&inter), || {
                format!(
                    "half_dim={half}, {} axes: interleaved misses an end",
                    axes.get()
                )
            })?;
            let seq = lib(AxisAssignment::new(
                half,
                axes,
                AssignMode::Sequential,
                None,
            ))?;
            ensure(!spans_full_range(&seq), || {
                format!("half_dim={half}: sequential unexpectedly spans the spectrum")
            })?;
            cases += 1;
        }
    }
    Ok(cases)
}

fn mrope_sequential_imbalance(_: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for axes in [AxisCount::Two, AxisCount::Three] {
        let k = axes.get();
        for half in 2 * k..=128 {
            let seq = lib(AxisAssignment::new(
                half,
                axes,
                AssignMode::Sequential,
                None,
            ))?;
            let q = half.div_ceil(4);
            let map = seq.mapping();
            let missing_top: Vec<usize> = (0..k).filter(|a| !map[half - q..].contains(a)).collect();
            let missing_bottom: Vec<usize> = (0..k).filter(|a| !map[..q].contains(a)).collect();
            let ok = missing_top
                .iter()
                .any(|a| missing_bottom.iter().any(|b| a != b));
            ensure(ok, || {
                format!("half_dim={half}, {k} axes: sequential looks balanced")
            })?;
            cases += 1;
        }
    }
    Ok(cases)
}

fn mrope_relative_position(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let cfg = random_config(rng)?;
        let (spec, assign) = (cfg.spectrum(), cfg.assignment());
        let d = spec.head_dim();
        let (q, k) = (random_vec(rng, d), random_vec(rng, d));
        let p1 = random_position(rng, assign.axis_count(), 500);
        let p2 = random_position(rng, assign.axis_count(), 500);
        let lhs = dot(
            &lib(apply_mrope(&q, &p1, assign, spec))?,
            &lib(apply_mrope(&k, &p2, assign, spec))?,
        );
        let rhs = dot(
            &lib(apply_mrope(&q, &p1.offset_from(&p2), assign, spec))?,
            &k,
        );
        ensure((lhs - rhs).abs() <= 1e-9, || {
            format!("{p1} vs {p2}: {lhs} != {rhs}")
        })?;
    }
    Ok(CASES)
}

fn ruler_count_law(_: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for max_side in 1..=256u32 {
        for other in [1, max_side.div_ceil(2), max_side] {
            for (rows, cols) in [(max_side, other), (other, max_side)] {
                let p = 28;
                let grid = lib(ImageGrid::new(cols * p, rows * p, p, 0))?;
                for s in [1, 2, 4, 8, 16] {
                    let set = lib(RulerTokenSet::new(&grid, s))?;
                    let idx: Vec<u32> = set.tokens.iter().map(|t| t.index).collect();
                    let expected: Vec<u32> = (0..=max_side).filter(|i| i % s == 0).collect();
                    ensure(idx == expected, || {
                        format!("max={max_side}, s={s}: {idx:?}")
                    })?;
                    ensure(idx.len() as u32 == max_side / s + 1, || {
                        format!("max={max_side}, s={s}: count {}", idx.len())
                    })?;
                    ensure(set.arithmetic_bound == u64::from(s * p), || {
                        format!("bound {} for s={s}", set.arithmetic_bound)
                    })?;
                    cases += 1;
                }
            }
        }
    }
    Ok(cases)
}

fn random_sequence(rng: &mut ChaCha8Rng) -> Result<(MultimodalSequence, u32), String> {
    let axes = random_axes(rng);
    let s = *[1, 2, 4, 8, 16].choose(rng).unwrap();
    let p = rng.gen_range(8..=32);
    let images = (0..rng.gen_range(0..=3))
        .map(|_| {
            let g = lib(ImageGrid::new(
                rng.gen_range(1..=40 * p),
                rng.gen_range(1..=40 * p),
                p,
                0,
            ))?;
            Ok((g, g.patch_count() as usize))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let words = |rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..rng.gen_range(0..5)).map(|i| format!("w{i}")).collect()
    };
    let (system, prompt) = (words(rng), words(rng));
    let seq = lib(MultimodalSequence::assemble(
        &system,
        &images,
        &prompt,
        Some(s),
        axes,
    ))?;
    Ok((seq, s))
}

fn ruler_position_sharing(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    use crate::mrope::Axis;
    let mut cases = 0;
    for _ in 0..100 {
        let (seq, _) = random_sequence(rng)?;
        ensure(
            seq.tokens.iter().enumerate().all(|(i, t)| t.index == i),
            || "sequence indices are not contiguous".into(),
        )?;
        for (image, grid) in seq.images.iter().enumerate() {
            let is_patch = |t: &&crate::ruler::SequenceToken| matches!(t.payload, Payload::Patch { image: k, .. } if k == image);
            let start = seq
                .tokens
                .iter()
                .position(|t| is_patch(&t))
                .expect("image has patches");
            let vision: Vec<PositionId> = seq
                .tokens
                .iter()
                .filter(is_patch)
                .map(|t| t.position)
                .collect();
            let rulers = seq.tokens[..start]
                .iter()
                .rev()
                .take_while(|t| t.segment == Segment::Ruler);
            for r in rulers {
                let (h, w) = (r.position.get(Axis::H), r.position.get(Axis::W));
                ensure(h == w, || {
                    format!("ruler at {} has unequal axes", r.position)
                })?;
                let index = h.unwrap() - grid.t0;
                if index >= i64::from(grid.rows.min(grid.cols)) {
                    continue;
                }
                let row_match = vision.iter().any(|v| v.get(Axis::H) == h);
                let col_match = vision.iter().any(|v| v.get(Axis::W) == w);
                ensure(row_match && col_match, || {
                    format!("ruler {index} of image {image} has no matching patch")
                })?;
                cases += 1;
            }
        }
    }
    Ok(cases)
}

fn ruler_face_value_law(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for _ in 0..500 {
        let p = rng.gen_range(1..=64);
        let grid = lib(ImageGrid::new(
            rng.gen_range(1..=8000),
            rng.gen_range(1..=8000),
            p,
            0,
        ))?;
        let s = rng.gen_range(1..=32);
        for t in lib(RulerTokenSet::new(&grid, s))?.tokens {
            let parsed: u64 = t
                .face_value
                .parse()
                .map_err(|_| format!("bad face {:?}", t.face_value))?;
            ensure(parsed == u64::from(t.index) * u64::from(p), || {
                format!("face {} for index {} at p={p}", t.face_value, t.index)
            })?;
            cases += 1;
        }
    }
    Ok(cases)
}

fn ruler_bound_law(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for _ in 0..200 {
        let p = rng.gen_range(1..=40);
        let grid = lib(ImageGrid::new(
            rng.gen_range(1..=3000),
            rng.gen_range(1..=3000),
            p,
            0,
        ))?;
        let s = *[1, 2, 4, 8, 16].choose(rng).unwrap();
        let set = lib(RulerTokenSet::new(&grid, s))?;
        let last = set.tokens.last().unwrap().index;
        let reach = f64::from(last + s) * f64::from(p);
        for x in 0..grid.width_px {
            let x = f64::from(x) + rng.gen_range(0.0..1.0);
            if x >= reach {
                continue;
            }
            let r = set
                .reference_for(x)
                .ok_or_else(|| format!("no reference for x={x}"))?;
            let gap = x - r.pixel(p) as f64;
            ensure(gap >= 0.0 && gap < set.arithmetic_bound as f64, || {
                format!("x={x}: gap {gap} exceeds bound {}", set.arithmetic_bound)
            })?;
            cases += 1;
        }
    }
    Ok(cases)
}

fn ruler_monotone_overhead(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    for _ in 0..500 {
        let p = rng.gen_range(8..=32);
        let (w, h) = (rng.gen_range(1..=400), rng.gen_range(1..=400));
        let s = rng.gen_range(1..=32);
        let base = lib(overhead(w * p, h * p, p, s))?;
        let k = rng.gen_range(2..=8);
        let scaled = lib(overhead(k * w * p, k * h * p, p, s))?;
        ensure(scaled.ratio <= base.ratio, || {
            format!(
                "{w}x{h} patches scaled by {k} at s={s}: {} > {}",
                scaled.ratio, base.ratio
            )
        })?;
        let (wp, hp) = (rng.gen_range(1..=8000), rng.gen_range(1..=8000));
        let mut prev = u64::MAX;
        for s in 1..=64 {
            let o = lib(overhead(wp, hp, p, s))?;
            ensure(o.ruler_count <= prev, || {
                format!("{wp}x{hp}: ruler count rose at s={s}")
            })?;
            prev = o.ruler_count;
        }
        cases += 1;
    }
    Ok(cases)
}

fn ruler_assembly_determinism(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..50 {
        let state: u64 = rng.gen();
        let a = random_sequence(&mut ChaCha8Rng::seed_from_u64(state))?;
        let b = random_sequence(&mut ChaCha8Rng::seed_from_u64(state))?;
        ensure(a == b && a.0.dump() == b.0.dump(), || {
            "identical inputs produced different sequences".into()
        })?;
    }
    Ok(50)
}

fn attention_self_match(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let cfg = random_config(rng)?;
        let d = cfg.spectrum().head_dim();
        let axes = cfg.assignment().axis_count();
        let q: Vec<f64> = (0..d)
            .map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let p = random_position(rng, axes, 200);
        // |delta * theta_0| <= 3 < pi keeps every frequency un-aliased.
        let delta = loop {
            let c: Vec<i64> = (0..axes.get()).map(|_| rng.gen_range(-3..=3)).collect();
            if c.iter().any(|x| *x != 0) {
                break c;
            }
        };
        let other: Vec<i64> = p.coords().iter().zip(&delta).map(|(a, b)| a + b).collect();
        let other = PositionId::from_coords(&other).unwrap();
        let at_zero = lib(score(&q, &q, &p, &p, &cfg))?;
        let shifted = lib(score(&q, &q, &p, &other, &cfg))?;
        ensure(shifted < at_zero, || {
            format!("offset {delta:?}: {shifted} >= {at_zero}")
        })?;
    }
    Ok(CASES)
}

fn attention_diagonal_retrieval(_: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut cases = 0;
    let spec = lib(FrequencySpectrum::new(32, DEFAULT_BASE))?;
    let probe = [1.0; 32];
    for mode in [AssignMode::Interleaved, AssignMode::Sequential] {
        let assign = lib(AxisAssignment::new(16, AxisCount::Two, mode, None))?;
        let cfg = lib(AttentionConfig::new(spec.clone(), assign))?;
        for rows in 1..=64u32 {
            for cols in 1..=64u32 {
                let grid = lib(ImageGrid::new(cols * 14, rows * 14, 14, 3))?;
                for s in [2, 4, 8, 16] {
                    let rulers = lib(RulerTokenSet::new(&grid, s))?;
                    for r in 0..rows.min(cols) {
                        let peak = lib(ruler_peak(&grid, &rulers, (r, r), &cfg, &probe))?;
                        let best = rulers
                            .tokens
                            .iter()
                            .map(|t| t.index.abs_diff(r))
                            .min()
                            .unwrap();
                        let nearest: Vec<u32> = rulers
                            .tokens
                            .iter()
                            .map(|t| t.index)
                            .filter(|i| i.abs_diff(r) == best)
                            .collect();
                        ensure(
                            peak.index == nearest[0] && peak.tie == (nearest.len() > 1),
                            || {
                                format!(
                                "{rows}x{cols}, s={s}, probe {r}: got {} (tie {}), nearest {nearest:?}",
                                peak.index, peak.tie
                            )
                            },
                        )?;
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(cases)
}

fn attention_shift_invariance(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let cfg = random_config(rng)?;
        let d = cfg.spectrum().head_dim();
        let axes = cfg.assignment().axis_count();
        let (q, k) = (random_vec(rng, d), random_vec(rng, d));
        let (pq, pk) = (
            random_position(rng, axes, 300),
            random_position(rng, axes, 300),
        );
        let shift = rng.gen_range(-300..=300);
        let a = lib(score(&q, &k, &pq, &pk, &cfg))?;
        let b = lib(score(&q, &k, &pq.shifted(shift), &pk.shifted(shift), &cfg))?;
        ensure((a - b).abs() <= 1e-9, || {
            format!("shift {shift}: {a} vs {b}")
        })?;
    }
    Ok(CASES)
}

fn attention_gradient(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let cases = 200;
    for _ in 0..cases {
        let cfg = random_config(rng)?;
        let d = cfg.spectrum().head_dim();
        let axes = cfg.assignment().axis_count();
        let (q, k) = (random_vec(rng, d), random_vec(rng, d));
        let (pq, pk) = (
            random_position(rng, axes, 100),
            random_position(rng, axes, 100),
        );
        let analytic = lib(score_gradient_q(&q, &k, &pq, &pk, &cfg))?;
        let fd = central_difference(
            |x| score(x, &k, &pq, &pk, &cfg).expect("dimensions checked"),
            &q,
            1e-5,
        );
        let err = rel_norm_err(&fd, &analytic);
        ensure(err < 1e-6, || format!("d={d}: relative error {err:e}"))?;
    }
    Ok(cases)
}

/// Random dataset with boxes inside the image and a prediction for most samples.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> (Vec<GroundingSample>, Vec<Prediction>) {
    const PLATFORMS: [&str; 3] = ["mobile", "desktop", "web"];
    let n = rng.gen_range(1..=200);
    let mut samples = Vec::with_capacity(n);
    let mut preds = Vec::new();
    for i in 0..n {
        let (w, h) = (rng.gen_range(100..=4000u32), rng.gen_range(100..=4000u32));
        let x0 = rng.gen_range(0.0..f64::from(w) - 20.0);
        let y0 = rng.gen_range(0.0..f64::from(h) - 20.0);
        let x1 = rng.gen_range(x0..f64::from(w));
        let y1 = rng.gen_range(y0..f64::from(h));
        let id = format!("s{i}");
        samples.push(GroundingSample {
            id: id.clone(),
            image_width: w,
            image_height: h,
            instruction: format!("target {i}"),
            target: BBox::new(x0, y0, x1, y1).expect("ordered"),
            platform: PLATFORMS.choose(rng).unwrap().to_string(),
        });
        let point = match rng.gen_range(0..5) {
            0 => continue,
            // exact corner, exercises inclusive boundaries
            1 => Point { x: x1, y: y0 },
            _ => Point {
                x: rng.gen_range(0.0..f64::from(w)),
                y: rng.gen_range(0.0..f64::from(h)),
            },
        };
        preds.push(Prediction { id, point });
    }
    preds.shuffle(rng);
    (samples, preds)
}

fn eval_accuracy_bounds(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..50 {
        let (samples, preds) = random_dataset(rng);
        let r = lib(element_accuracy(&samples, &preds))?;
        ensure((0.0..=1.0).contains(&r.accuracy), || {
            format!("accuracy {}", r.accuracy)
        })?;
        let scaled = r.accuracy * r.total as f64;
        ensure((scaled - r.hits as f64).abs() < 1e-9, || {
            format!("accuracy*total = {scaled}, hits = {}", r.hits)
        })?;
    }
    Ok(50)
}

fn eval_platform_average(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..50 {
        let (samples, preds) = random_dataset(rng);
        let r = lib(element_accuracy(&samples, &preds))?;
        let hits: usize = r.per_platform.values().map(|p| p.hits).sum();
        let total: usize = r.per_platform.values().map(|p| p.total).sum();
        let weighted: f64 = r
            .per_platform
            .values()
            .map(|p| p.accuracy * p.total as f64)
            .sum::<f64>()
            / r.total as f64;
        ensure(hits == r.hits && total == r.total, || {
            "platform counts do not add up".into()
        })?;
        ensure((weighted - r.accuracy).abs() < 1e-12, || {
            format!("weighted {weighted} vs overall {}", r.accuracy)
        })?;
    }
    Ok(50)
}

fn eval_parse_roundtrip(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for i in 0..CASES {
        let mag = 10f64.powi(rng.gen_range(-6..=6));
        let (x, y) = (
            rng.gen_range(-1.0..1.0) * mag,
            rng.gen_range(-1.0..1.0) * mag,
        );
        let (x, y) = if i % 10 == 0 {
            (x.round(), y.round())
        } else {
            (x, y)
        };
        let text = format!("x={x}, y={y}");
        let parsed = lib(parse_point(&text))?;
        ensure(parsed.point == Point { x, y } && !parsed.ambiguous, || {
            format!("{text:?} parsed as {:?}", parsed.point)
        })?;
    }
    Ok(CASES)
}

fn eval_denormalize(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..CASES {
        let (w, h) = (rng.gen_range(1..=10_000), rng.gen_range(1..=10_000));
        let lo = lib(denormalize(0.0, 0.0, w, h))?;
        let hi = lib(denormalize(1.0, 1.0, w, h))?;
        ensure(lo == Point { x: 0.0, y: 0.0 }, || "origin moved".into())?;
        ensure(
            hi == Point {
                x: f64::from(w),
                y: f64::from(h),
            },
            || "far corner moved".into(),
        )?;
        let (a, b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let (u0, u1) = if a <= b { (a, b) } else { (b, a) };
        let p0 = lib(denormalize(u0, u0, w, h))?;
        let p1 = lib(denormalize(u1, u1, w, h))?;
        ensure(p0.x <= p1.x && p0.y <= p1.y, || {
            format!("not monotone at {u0} < {u1}")
        })?;
    }
    Ok(CASES)
}

fn eval_oracle(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    for _ in 0..50 {
        let (samples, preds) = random_dataset(rng);
        let report = lib(element_accuracy(&samples, &preds))?;
        let mut hits = 0;
        for (sample, outcome) in samples.iter().zip(&report.samples) {
            let mut hit = false;
            for p in &preds {
                if p.id == sample.id {
                    let b = sample.target;
                    hit = p.point.x >= b.x_min
                        && p.point.x <= b.x_max
                        && p.point.y >= b.y_min
                        && p.point.y <= b.y_max;
                }
            }
            ensure(hit == outcome.hit && outcome.id == sample.id, || {
                format!("sample {} disagrees with loop oracle", sample.id)
            })?;
            hits += usize::from(hit);
        }
        ensure(hits == report.hits, || format!("{hits} vs {}", report.hits))?;
        ensure(
            report.accuracy == hits as f64 / samples.len() as f64,
            || "accuracy differs from oracle".into(),
        )?;
    }
    Ok(50)
}

fn cli_deterministic_output(_: &mut ChaCha8Rng) -> Result<usize, String> {
    let invocations: &[&[&str]] = &[
        &["ruler", "spectrum", "--dim", "64", "--json"],
        &["ruler", "spectrum", "--dim", "16", "--csv"],
        &[
            "ruler",
            "assign",
            "--half-dim",
            "12",
            "--axes",
            "3",
            "--mode",
            "inter",
            "--json",
        ],
        &[
            "ruler", "ruler", "--width", "1920", "--height", "1080", "--json",
        ],
        &["ruler", "overhead", "--intervals", "2,4,8,16", "--csv"],
        &["ruler", "overhead", "--intervals", "8", "--json"],
        &[
            "ruler",
            "attn-demo",
            "--grid",
            "16x16",
            "--interval",
            "4",
            "--probe",
            "9,9",
            "--json",
        ],
    ];
    for argv in invocations {
        let run = || {
            let (mut out, mut err) = (Vec::new(), Vec::new());
            let code = crate::cli::run(argv.iter().map(|s| s.to_string()), &mut out, &mut err);
            (code, out)
        };
        let (c1, o1) = run();
        let (c2, o2) = run();
        ensure(c1 == 0, || format!("{argv:?} exited with {c1}"))?;
        ensure(c1 == c2 && o1 == o2, || {
            format!("{argv:?} output differs between runs")
        })?;
    }
    Ok(invocations.len())
}
