//! Brouwer degree of a complex-valued map on a rectangle, computed as the
//! winding number of its boundary restriction, with zero localization by
//! recursive quadrisection.
//!
//! Convention: the rectangle's horizontal coordinate `t` and vertical
//! coordinate `s` form the oriented plane `z = t + is`; the boundary is
//! traversed counterclockwise (bottom, right, top, left).

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::RhoEvaluator;
use crate::error::{Error, Result};
use crate::fundamental::{Shooter, DEFAULT_STEPS_PER_UNIT};
use crate::linalg::{wrap_angle, Polar};
use crate::problem::{default_strip_height, ProblemSpec, Rectangle};

#[derive(Clone, Debug)]
pub struct WindingOptions {
    /// Initial samples per edge.
    pub initial_samples: usize,
    /// Maximal bisection depth of a single initial segment.
    pub max_depth: usize,
    /// Largest accepted argument increment between consecutive samples.
    pub max_increment: f64,
    /// A sample is treated as a zero when `|f|` falls below this fraction
    /// of the local magnitude along the trace.
    pub zero_tolerance: f64,
    /// Absolute floor on `ln|f|`.
    pub log_floor: f64,
    /// Largest accepted `|total/2π − degree|`.
    pub residual_tolerance: f64,
}

impl Default for WindingOptions {
    fn default() -> Self {
        WindingOptions {
            initial_samples: 64,
            max_depth: 24,
            max_increment: PI / 2.0,
            zero_tolerance: 1e-9,
            log_floor: (1e-300f64).ln(),
            residual_tolerance: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub s: f64,
    pub log_abs: f64,
    pub arg: f64,
}

/// Samples along `∂Ω` in traversal order; the last sample closes the loop.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundaryTrace {
    pub samples: Vec<TracePoint>,
    pub increments: Vec<f64>,
    /// Accumulated argument in radians, before rounding.
    pub total_winding: f64,
    pub min_log_abs: f64,
}

impl BoundaryTrace {
    /// Writes `t, s, log_abs, arg, unwrapped_arg`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,s,log_abs,arg,unwrapped_arg")?;
        let mut acc = self.samples.first().map_or(0.0, |p| p.arg);
        for (i, p) in self.samples.iter().enumerate() {
            if i > 0 {
                acc += self.increments[i - 1];
            }
            writeln!(out, "{},{},{},{},{}", p.t, p.s, p.log_abs, p.arg, acc)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZeroCell {
    pub cell: Rectangle,
    pub degree: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeResult {
    pub degree: i64,
    pub residual: f64,
    pub zero_cells: Vec<ZeroCell>,
    pub trace: BoundaryTrace,
}

/// Point on `∂Ω` at boundary parameter `u ∈ [0, 4]`.
fn boundary_point(omega: &Rectangle, u: f64) -> (f64, f64) {
    let e = (u.floor() as usize).min(3);
    let f = u - e as f64;
    match e {
        0 => (omega.t_min + f * omega.width(), omega.s_min),
        1 => (omega.t_max, omega.s_min + f * omega.height()),
        2 => (omega.t_max - f * omega.width(), omega.s_max),
        _ => (omega.t_min, omega.s_max - f * omega.height()),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct Sample {
    u: f64,
    value: Polar,
}

fn checked<F>(f: &F, omega: &Rectangle, u: f64) -> Result<(f64, f64, Polar)>
where
    F: Fn(f64, f64) -> Result<Polar>,
{
    let (t, s) = boundary_point(omega, u);
    let value = f(t, s)?;
    if value.log_abs.is_nan() || value.log_abs == f64::INFINITY || !value.arg.is_finite() && !value.is_zero() {
        return Err(Error::NonConvergence { residual: f64::NAN });
    }
    Ok((t, s, value))
}

fn zero_error(omega: &Rectangle, u: f64, value: Polar) -> Error {
    let (t, s) = boundary_point(omega, u);
    Error::BoundaryZero {
        horizontal: t,
        vertical: s,
        log_modulus: value.log_abs,
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F>(
    f: &F,
    omega: &Rectangle,
    opts: &WindingOptions,
    threshold: f64,
    a: &Sample,
    b: &Sample,
    depth: usize,
    out: &mut Vec<Sample>,
) -> Result<()>
where
    F: Fn(f64, f64) -> Result<Polar>,
{
    // A segment is accepted only when its midpoint confirms the increment:
    // a rotation by nearly a full turn between two samples would otherwise
    // alias to a small principal increment.
    let um = 0.5 * (a.u + b.u);
    let (_, _, value) = checked(f, omega, um)?;
    if value.is_zero() || value.log_abs < threshold {
        return Err(zero_error(omega, um, value));
    }
    let small = |x: &Polar, y: &Polar| wrap_angle(y.arg - x.arg).abs() < opts.max_increment;
    if small(&a.value, &b.value) && small(&a.value, &value) && small(&value, &b.value) {
        out.push(Sample { u: um, value });
        return Ok(());
    }
    if depth >= opts.max_depth {
        // an argument jump that survives this much refinement can only come
        // from a zero on (or numerically on) the boundary
        let weaker = if a.value.log_abs < b.value.log_abs { a } else { b };
        return Err(zero_error(omega, um, weaker.value));
    }
    let mid = Sample { u: um, value };
    refine(f, omega, opts, threshold, a, &mid, depth + 1, out)?;
    out.push(Sample { u: um, value });
    refine(f, omega, opts, threshold, &mid, b, depth + 1, out)
}

/// Winding number of `f` along `∂Ω` (counterclockwise). `zero_cells`
/// holds `(Ω, degree)` when the degree is nonzero; see [`localize`].
pub fn winding<F>(f: &F, omega: &Rectangle, opts: &WindingOptions) -> Result<DegreeResult>
where
    F: Fn(f64, f64) -> Result<Polar> + Sync,
{
    omega.check()?;
    let n = opts.initial_samples.max(2);
    let count = 4 * n;
    let initial: Vec<(f64, f64, Polar)> = (0..count)
        .into_par_iter()
        .map(|k| checked(f, omega, k as f64 / n as f64))
        .collect::<Result<_>>()?;

    let window = 2usize;
    let thresholds: Vec<f64> = (0..count)
        .map(|k| {
            let local: Vec<f64> = (0..=2 * window)
                .map(|j| initial[(k + count + j - window) % count].2.log_abs)
                .collect();
            (median(local) + opts.zero_tolerance.ln()).max(opts.log_floor)
        })
        .collect();
    for (k, (_, _, v)) in initial.iter().enumerate() {
        if v.is_zero() || v.log_abs < thresholds[k] {
            return Err(zero_error(omega, k as f64 / n as f64, *v));
        }
    }

    let segments: Vec<Vec<Sample>> = (0..count)
        .into_par_iter()
        .map(|k| {
            let a = Sample {
                u: k as f64 / n as f64,
                value: initial[k].2,
            };
            let b = Sample {
                u: (k + 1) as f64 / n as f64,
                value: initial[(k + 1) % count].2,
            };
            let threshold = thresholds[k].min(thresholds[(k + 1) % count]);
            let mut inner = Vec::new();
            refine(f, omega, opts, threshold, &a, &b, 0, &mut inner)?;
            Ok(inner)
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(count * 2);
    for (k, inner) in segments.into_iter().enumerate() {
        let (t, s, v) = initial[k];
        samples.push(TracePoint {
            t,
            s,
            log_abs: v.log_abs,
            arg: v.arg,
        });
        for smp in inner {
            let (t, s) = boundary_point(omega, smp.u);
            samples.push(TracePoint {
                t,
                s,
                log_abs: smp.value.log_abs,
                arg: smp.value.arg,
            });
        }
    }
    samples.push(samples[0]);
    let increments: Vec<f64> = samples.windows(2).map(|w| wrap_angle(w[1].arg - w[0].arg)).collect();
    let total: f64 = increments.iter().sum();
    let turns = total / (2.0 * PI);
    let degree = turns.round() as i64;
    let residual = (turns - degree as f64).abs();
    if residual >= opts.residual_tolerance {
        return Err(Error::NonConvergence { residual });
    }
    let min_log_abs = samples.iter().map(|p| p.log_abs).fold(f64::INFINITY, f64::min);
    Ok(DegreeResult {
        degree,
        residual,
        zero_cells: if degree != 0 {
            vec![ZeroCell { cell: *omega, degree }]
        } else {
            Vec::new()
        },
        trace: BoundaryTrace {
            samples,
            increments,
            total_winding: total,
            min_log_abs,
        },
    })
}

#[derive(Clone, Debug)]
pub struct LocalizationOptions {
    /// Number of quadrisection levels.
    pub max_level: usize,
    /// Initial samples per edge of sub-cells.
    pub samples: usize,
    /// Split points (as fractions of the cell) tried in turn when a split
    /// line passes through a zero.
    pub split_offsets: Vec<(f64, f64)>,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            max_level: 4,
            samples: 16,
            split_offsets: vec![
                (0.4875, 0.5125),
                (0.5375, 0.4625),
                (0.4625, 0.5375),
                (0.5625, 0.4375),
                (0.4125, 0.5875),
            ],
        }
    }
}

/// Subdivides a cell of known nonzero degree into sub-cells whose
/// boundaries avoid zeros, down to `max_level` levels. The local degrees
/// of the returned cells sum to `degree`.
pub fn localize<F>(
    f: &F,
    cell: &Rectangle,
    degree: i64,
    opts: &LocalizationOptions,
    wopts: &WindingOptions,
) -> Result<Vec<ZeroCell>>
where
    F: Fn(f64, f64) -> Result<Polar> + Sync,
{
    localize_level(f, cell, degree, 0, opts, wopts)
}

fn localize_level<F>(
    f: &F,
    cell: &Rectangle,
    degree: i64,
    level: usize,
    opts: &LocalizationOptions,
    wopts: &WindingOptions,
) -> Result<Vec<ZeroCell>>
where
    F: Fn(f64, f64) -> Result<Polar> + Sync,
{
    if degree == 0 {
        return Ok(Vec::new());
    }
    if level >= opts.max_level {
        return Ok(vec![ZeroCell { cell: *cell, degree }]);
    }
    let sub_opts = WindingOptions {
        initial_samples: opts.samples,
        ..wopts.clone()
    };
    let mut last_err = None;
    for &(ft, fs) in &opts.split_offsets {
        let children = cell.quadrisect(ft, fs);
        let degrees: Result<Vec<i64>> = children
            .par_iter()
            .map(|c| winding(f, c, &sub_opts).map(|r| r.degree))
            .collect();
        match degrees {
            Ok(d) if d.iter().sum::<i64>() == degree => {
                let mut out = Vec::new();
                for (c, d) in children.iter().zip(d) {
                    out.extend(localize_level(f, c, d, level + 1, opts, wopts)?);
                }
                return Ok(out);
            }
            Ok(d) => {
                last_err = Some(Error::CheckFailed {
                    check: "degree-additivity",
                    detail: format!("sub-cell degrees {d:?} do not sum to {degree}"),
                })
            }
            Err(e @ Error::BoundaryZero { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one split offset"))
}

#[derive(Clone, Debug)]
pub struct DegreeOptions {
    pub winding: WindingOptions,
    /// `None` skips localization.
    pub localization: Option<LocalizationOptions>,
    pub steps_per_unit: usize,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        DegreeOptions {
            winding: WindingOptions::default(),
            localization: Some(LocalizationOptions::default()),
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
        }
    }
}

/// `[0, 1] × [−M, M]` with the default strip height.
pub fn default_rectangle(spec: &ProblemSpec) -> Rectangle {
    let m = default_strip_height(spec);
    Rectangle {
        t_min: 0.0,
        t_max: 1.0,
        s_min: -m,
        s_max: m,
    }
}

/// `deg(ρ, Ω, 0)` with zero localization.
pub fn degree_index(spec: &ProblemSpec, omega: &Rectangle) -> Result<DegreeResult> {
    degree_index_with(spec, omega, &DegreeOptions::default())
}

pub fn degree_index_with(spec: &ProblemSpec, omega: &Rectangle, opts: &DegreeOptions) -> Result<DegreeResult> {
    spec.check()?;
    let ev = RhoEvaluator::from_shooter(Shooter::with_steps(spec, opts.steps_per_unit));
    let f = |t: f64, s: f64| ev.eval(Complex64::new(t, s));
    let mut result = winding(&f, omega, &opts.winding)?;
    if let Some(loc) = &opts.localization {
        result.zero_cells = localize(&f, omega, result.degree, loc, &opts.winding)?;
    }
    Ok(result)
}
