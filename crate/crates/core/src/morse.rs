//! Dirichlet Morse index via the degree of `(s, x) ↦ det G_{is}(x)` over
//! `V = [−M, M] × [δ, ℓ]`, with conjugate point localization on `s = 0`.
//!
//! The rectangle is used with `s` as horizontal and `x` as vertical
//! coordinate, traversed counterclockwise.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::degree::{localize, winding, LocalizationOptions, WindingOptions, ZeroCell};
use crate::error::{Error, Result};
use crate::fundamental::{g_block, Shooter, DEFAULT_STEPS_PER_UNIT};
use crate::linalg::{log_det, singular_values, Polar};
use crate::problem::{default_strip_height, ProblemSpec, Rectangle};

/// Relative singular-value level below which `G₀(x₀)` counts as singular.
pub const LOCALIZATION_TOLERANCE: f64 = 1e-6;
/// Relative singular-value level counted towards the multiplicity.
pub const MULTIPLICITY_TOLERANCE: f64 = 1e-7;
/// `δ` never exceeds `ℓ / DELTA_CAP_DIVISOR`.
pub const DELTA_CAP_DIVISOR: f64 = 64.0;

#[derive(Clone, Debug)]
pub struct MorseOptions {
    /// Lower cut `δ`; chosen automatically when `None`.
    pub delta: Option<f64>,
    /// Strip half-height `M`; the default strip height when `None`.
    pub strip_height: Option<f64>,
    /// Path parameter at which the operator is taken.
    pub t: f64,
    pub steps_per_unit: usize,
    /// Grid points of the conjugate point scan on `[δ, ℓ]`.
    pub scan_samples: usize,
    pub winding: WindingOptions,
    pub localization: LocalizationOptions,
}

impl Default for MorseOptions {
    fn default() -> Self {
        MorseOptions {
            delta: None,
            strip_height: None,
            t: 0.0,
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
            scan_samples: 4096,
            winding: WindingOptions::default(),
            localization: LocalizationOptions {
                max_level: 6,
                ..LocalizationOptions::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConjugatePoint {
    pub x0: f64,
    pub local_degree: i64,
    /// Number of singular values of `G₀(x₀)` below the multiplicity level.
    pub multiplicity: usize,
    /// `σ_min(G₀(x₀))` relative to the local scale of `‖G₀‖`.
    pub relative_sigma_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateReport {
    pub conjugate_points: Vec<ConjugatePoint>,
    /// Zero cells of the degree off the `s = 0` axis.
    pub off_axis_cells: Vec<ZeroCell>,
    pub delta: f64,
    pub strip_height: f64,
    pub total_degree: i64,
}

impl ConjugateReport {
    pub fn count_without_multiplicity(&self) -> usize {
        self.conjugate_points.len()
    }

    pub fn count_with_multiplicity(&self) -> usize {
        self.conjugate_points.iter().map(|c| c.multiplicity).sum()
    }
}

/// `(s, x) ↦ det G_{t+is}(x)`.
pub struct GDeterminant<'a> {
    shooter: Shooter<'a>,
    t: f64,
}

impl<'a> GDeterminant<'a> {
    pub fn new(spec: &'a ProblemSpec, t: f64, steps_per_unit: usize) -> Self {
        GDeterminant {
            shooter: Shooter::with_steps(spec, steps_per_unit),
            t,
        }
    }

    fn z(&self, s: f64) -> Complex64 {
        Complex64::new(self.t, s)
    }

    pub fn preload(&self, s: f64) -> Result<()> {
        self.shooter.preload(self.z(s))
    }

    pub fn eval(&self, s: f64, x: f64) -> Result<Polar> {
        self.shooter.log_det_g(self.z(s), x)
    }

    /// Singular values of `G_{t+is}(x)`, descending.
    pub fn singular_values(&self, s: f64, x: f64) -> Result<Vec<f64>> {
        let psi = self.shooter.psi(self.z(s), x)?;
        Ok(singular_values(&g_block(&psi)))
    }
}

fn require_dirichlet_positive(spec: &ProblemSpec) -> Result<()> {
    spec.check()?;
    if !spec.boundary.is_dirichlet() {
        return Err(Error::RequiresDirichlet);
    }
    for x in spec.validation_grid() {
        let p = spec.p.eval(x);
        let min = ((&p + p.transpose()) * 0.5)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { x, min_eigenvalue: min });
        }
    }
    Ok(())
}

fn smallest_p_inverse_singular_value(spec: &ProblemSpec) -> f64 {
    let p = spec.p.eval(0.0);
    let sv = p.svd(false, false).singular_values;
    1.0 / sv.iter().copied().fold(0.0, f64::max)
}

/// Log grid `ℓ·2^{-k}` (below the cap) on which `σ_min(G₀(x))` must grow
/// monotonically and stay comparable to `x·σ_min(P⁻¹)`.
fn delta_profile(g: &GDeterminant, spec: &ProblemSpec, top: f64) -> Result<Vec<(f64, f64)>> {
    let xs: Vec<f64> = (0..40).map(|k| top * 0.5f64.powi(k)).rev().collect();
    xs.par_iter()
        .map(|&x| {
            let sv = g.singular_values(0.0, x)?;
            Ok((x, *sv.last().expect("nonempty")))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| {
            let floor = smallest_p_inverse_singular_value(spec);
            v.into_iter().map(|(x, s)| (x, s / (x * floor))).collect()
        })
}

/// Chooses `δ`: the largest point of the log grid below `ℓ/64` up to which
/// the normalized `σ_min(G₀(x))/(x·σ_min(P⁻¹))` stays above ½ and
/// `σ_min(G₀)` increases.
pub fn choose_delta(spec: &ProblemSpec, steps_per_unit: usize, t: f64) -> Result<f64> {
    let g = GDeterminant::new(spec, t, steps_per_unit);
    let profile = delta_profile(&g, spec, spec.length / DELTA_CAP_DIVISOR)?;
    let mut best = None;
    for (i, &(x, ratio)) in profile.iter().enumerate() {
        let increasing = i == 0 || ratio * x > profile[i - 1].1 * profile[i - 1].0;
        if ratio >= 0.5 && increasing {
            best = Some(x);
        } else {
            break;
        }
    }
    best.ok_or_else(|| Error::DeltaSelection("σ_min(G₀) is not increasing near x = 0".into()))
}

/// Checks a user-supplied `δ` against the same criterion.
pub fn check_delta(spec: &ProblemSpec, delta: f64, steps_per_unit: usize, t: f64) -> Result<()> {
    if !(delta > 0.0 && delta < spec.length) {
        return Err(Error::DeltaSelection(format!("δ = {delta} must lie in (0, ℓ)")));
    }
    let g = GDeterminant::new(spec, t, steps_per_unit);
    let profile = delta_profile(&g, spec, delta)?;
    for (i, &(x, ratio)) in profile.iter().enumerate() {
        let increasing = i == 0 || ratio * x > profile[i - 1].1 * profile[i - 1].0;
        if ratio < 0.5 || !increasing {
            return Err(Error::DeltaSelection(format!(
                "σ_min(G₀) fails to grow monotonically on (0, δ] near x = {x}"
            )));
        }
    }
    Ok(())
}

fn golden_minimum<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Roots of `det G₀(x)` on `(x_min, x_max]`, found as near-zero local
/// minima of `σ_min(G₀(x))`, refined to ~1e−12 in `x`, with multiplicity
/// from the rank deficiency.
pub fn scan_conjugate_points_with(
    spec: &ProblemSpec,
    x_min: f64,
    x_max: f64,
    samples: usize,
    steps_per_unit: usize,
    t: f64,
) -> Result<Vec<ConjugatePoint>> {
    if !spec.boundary.is_dirichlet() {
        return Err(Error::RequiresDirichlet);
    }
    let g = GDeterminant::new(spec, t, steps_per_unit);
    g.preload(0.0)?;
    let samples = samples.max(8);
    let xs: Vec<f64> = (0..=samples)
        .map(|i| x_min + (x_max - x_min) * i as f64 / samples as f64)
        .collect();
    let svs: Vec<Vec<f64>> = xs.par_iter().map(|&x| g.singular_values(0.0, x)).collect::<Result<_>>()?;
    let smin: Vec<f64> = svs.iter().map(|v| *v.last().expect("nonempty")).collect();
    let mut out = Vec::new();
    // G₀(0) = 0 is not a conjugate point
    let first = usize::from(x_min <= 0.0);
    for i in first..xs.len() {
        let left = if i > 0 { smin[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < xs.len() { smin[i + 1] } else { f64::INFINITY };
        if !(smin[i] <= left && smin[i] < right) {
            continue;
        }
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(xs.len() - 1)];
        let scale = svs[i.saturating_sub(1)][0].max(svs[(i + 1).min(xs.len() - 1)][0]);
        let sigma = |x: f64| {
            g.singular_values(0.0, x)
                .map(|v| *v.last().expect("nonempty"))
                .unwrap_or(f64::INFINITY)
        };
        let x0 = golden_minimum(sigma, a, b, 1e-12 * x_max.max(1.0));
        let sv = g.singular_values(0.0, x0)?;
        let rel = sv.last().copied().unwrap_or(0.0) / scale;
        if rel < LOCALIZATION_TOLERANCE {
            out.push(ConjugatePoint {
                x0,
                local_degree: 0,
                multiplicity: sv.iter().filter(|&&v| v < MULTIPLICITY_TOLERANCE * scale).count().max(1),
                relative_sigma_min: rel,
            });
        }
    }
    out.dedup_by(|a, b| (a.x0 - b.x0).abs() < 1e-9);
    Ok(out)
}

pub fn scan_conjugate_points(spec: &ProblemSpec, x_max: f64, samples: usize) -> Result<Vec<ConjugatePoint>> {
    scan_conjugate_points_with(spec, 0.0, x_max, samples, DEFAULT_STEPS_PER_UNIT, 0.0)
}

/// Local degree of `det G_{is}(x)` on a small rectangle around `(0, x0)`.
pub fn local_degree_at(
    g: &GDeterminant,
    x0: f64,
    half_width_x: f64,
    half_width_s: f64,
    opts: &WindingOptions,
) -> Result<i64> {
    let cell = Rectangle::new(-half_width_s, half_width_s, x0 - half_width_x, x0 + half_width_x)?;
    let f = |s: f64, x: f64| g.eval(s, x);
    Ok(winding(&f, &cell, opts)?.degree)
}

/// Total degree over `V` with conjugate point localization; the result
/// equals the Morse index of the operator on `[0, ℓ]`.
pub fn morse_via_degree(spec: &ProblemSpec, opts: &MorseOptions) -> Result<ConjugateReport> {
    require_dirichlet_positive(spec)?;
    let length = spec.length;
    let steps = opts.steps_per_unit;
    let delta = match opts.delta {
        Some(d) => {
            check_delta(spec, d, steps, opts.t)?;
            d
        }
        None => choose_delta(spec, steps, opts.t)?,
    };
    let m = opts.strip_height.unwrap_or_else(|| default_strip_height(spec));
    let g = GDeterminant::new(spec, opts.t, steps);

    let end = g.singular_values(0.0, length)?;
    let before = g.singular_values(0.0, length * (1.0 - 1.0 / 256.0))?;
    if end.last().copied().unwrap_or(0.0) < LOCALIZATION_TOLERANCE * end[0].max(before[0]) {
        return Err(Error::ConjugateAtEndpoint { x: length });
    }

    for s in [-m, 0.0, m] {
        g.preload(s)?;
    }
    let v = Rectangle::new(-m, m, delta, length)?;
    let f = |s: f64, x: f64| g.eval(s, x);
    let total = winding(&f, &v, &opts.winding)?.degree;

    let mut points = scan_conjugate_points_with(spec, delta, length, opts.scan_samples, steps, opts.t)?;
    points.retain(|p| p.x0 > delta && p.x0 < length);
    let xs: Vec<f64> = points.iter().map(|p| p.x0).collect();
    let local: Vec<i64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut gap = (p.x0 - delta).min(length - p.x0);
            if i > 0 {
                gap = gap.min(p.x0 - xs[i - 1]);
            }
            if i + 1 < xs.len() {
                gap = gap.min(xs[i + 1] - p.x0);
            }
            let hx = (0.25 * gap).min(0.05 * length);
            local_degree_at(&g, p.x0, hx, hx.min(0.5 * m), &opts.winding)
        })
        .collect::<Result<_>>()?;
    for (p, d) in points.iter_mut().zip(local) {
        p.local_degree = d;
    }
    let on_axis: i64 = points.iter().map(|p| p.local_degree).sum();
    let off_axis_cells = if on_axis != total {
        // zeros off the real axis: localize the whole of V and discard the
        // cells already accounted for by conjugate points
        let cells = localize(&f, &v, total, &opts.localization, &opts.winding)?;
        cells
            .into_iter()
            .filter(|c| !(c.cell.t_min <= 0.0 && 0.0 <= c.cell.t_max && xs.iter().any(|&x| c.cell.s_min <= x && x <= c.cell.s_max)))
            .collect::<Vec<_>>()
    } else {
        Vec::new()
    };
    let off: i64 = off_axis_cells.iter().map(|c| c.degree).sum();
    if on_axis + off != total {
        return Err(Error::CheckFailed {
            check: "conjugate-localization",
            detail: format!("local degrees sum to {} but the degree over V is {total}", on_axis + off),
        });
    }
    Ok(ConjugateReport {
        conjugate_points: points,
        off_axis_cells,
        delta,
        strip_height: m,
        total_degree: total,
    })
}

/// Writes `x, log_abs_det_g0, arg_det_g0, sigma_min` on a uniform grid.
pub fn write_det_g0_csv<W: Write>(spec: &ProblemSpec, samples: usize, mut out: W) -> Result<()> {
    let g = GDeterminant::new(spec, 0.0, DEFAULT_STEPS_PER_UNIT);
    g.preload(0.0)?;
    writeln!(out, "x,log_abs_det_g0,arg_det_g0,sigma_min")?;
    for i in 1..=samples {
        let x = spec.length * i as f64 / samples as f64;
        let psi = g.shooter.psi(Complex64::new(0.0, 0.0), x)?;
        let gb = g_block(&psi);
        let d = log_det(&gb);
        let sv = singular_values(&gb);
        writeln!(out, "{x},{},{},{}", d.log_abs, d.arg, sv.last().copied().unwrap_or(0.0))?;
    }
    Ok(())
}
