//! Reaction–diffusion analysis for `𝓛u = D u″ + V u`, `D = diag(1, d)`, on
//! `[0, a]` with Dirichlet conditions: Turing conditions, the negative
//! spectrum of `−𝓛` by mode, conjugate point families, and the identity
//! between the degree and the number of negative eigenvalues.
//!
//! Conjugate points form two families: `𝒞₁` (zeros of `φ(λ₋(0), ·)`,
//! `x = kπ·√(2d/(𝔐+√Δ₁))`) and `𝒞₂` (zeros of `φ(λ₊(0), ·)`,
//! `x = kπ·√(2d/(𝔐−√Δ₁))`); `𝒞₃` are the points common to both.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental::DEFAULT_STEPS_PER_UNIT;
use crate::morse::{local_degree_at, morse_via_degree, GDeterminant, MorseOptions};
use crate::oracle::morse_report;
use crate::planar::PlanarConstantProblem;

/// Relative distance of a threshold to `k²π²` regarded as degenerate.
pub const THRESHOLD_TOLERANCE: f64 = 1e-9;
/// Tolerance of the integer-square ratio test for common conjugate points.
pub const RATIO_TOLERANCE: f64 = 1e-12;
/// Tolerance of the integer-membership test in the local degree table.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct TuringReport {
    pub tr_v: f64,
    pub det_v: f64,
    pub m_frak: f64,
    pub delta1: f64,
    pub trace_negative: bool,
    pub det_positive: bool,
    /// `𝔐 > 2√(d·det V)`.
    pub diffusive: bool,
    pub delta1_positive: bool,
    pub m_frak_positive: bool,
    /// With `d = 1` the diffusive condition can never hold under stability.
    pub equal_diffusion: bool,
}

impl TuringReport {
    pub fn stable_without_diffusion(&self) -> bool {
        self.trace_negative && self.det_positive
    }

    pub fn all_pass(&self) -> bool {
        self.stable_without_diffusion() && self.diffusive
    }
}

pub fn turing_check(p: &PlanarConstantProblem) -> TuringReport {
    let det_v = p.det_v();
    let m = p.m_frak();
    TuringReport {
        tr_v: p.tr_v(),
        det_v,
        m_frak: m,
        delta1: p.delta1(),
        trace_negative: p.tr_v() < 0.0,
        det_positive: det_v > 0.0,
        diffusive: det_v >= 0.0 && m > 2.0 * (p.d * det_v).sqrt(),
        delta1_positive: p.delta1() > 0.0,
        m_frak_positive: m > 0.0,
        equal_diffusion: p.d == 1.0,
    }
}

fn require_turing(p: &PlanarConstantProblem) -> Result<TuringReport> {
    let r = turing_check(p);
    if !r.all_pass() {
        let mut failed = Vec::new();
        if !r.trace_negative {
            failed.push(format!("tr V = {} ≥ 0", r.tr_v));
        }
        if !r.det_positive {
            failed.push(format!("det V = {} ≤ 0", r.det_v));
        }
        if !r.diffusive {
            failed.push(format!("𝔐 = {} ≤ 2√(d det V)", r.m_frak));
        }
        return Err(Error::TuringViolated(failed.join(", ")));
    }
    Ok(r)
}

/// `(𝔐 − √Δ₁)a²/(2d)` and `(𝔐 + √Δ₁)a²/(2d)`.
pub fn thresholds(p: &PlanarConstantProblem) -> (f64, f64) {
    let r = p.delta1().sqrt();
    let scale = p.a * p.a / (2.0 * p.d);
    ((p.m_frak() - r) * scale, (p.m_frak() + r) * scale)
}

fn check_threshold(which: &'static str, value: f64) -> Result<()> {
    let k = (value.max(0.0).sqrt() / PI).round() as u64;
    for k in [k.saturating_sub(1), k, k + 1] {
        if k == 0 {
            continue;
        }
        let kk = (k * k) as f64 * PI * PI;
        if (value - kk).abs() <= THRESHOLD_TOLERANCE * kk.max(1.0) {
            return Err(Error::DegenerateThreshold { which, k, value });
        }
    }
    Ok(())
}

/// Modes `k ≥ 1` with `k²π² < bound`.
fn modes_below(bound: f64) -> u64 {
    if bound <= 0.0 {
        return 0;
    }
    let mut k = (bound.sqrt() / PI).floor() as u64;
    while k > 0 && (k * k) as f64 * PI * PI >= bound {
        k -= 1;
    }
    while ((k + 1) * (k + 1)) as f64 * PI * PI < bound {
        k += 1;
    }
    k
}

#[derive(Clone, Debug, Serialize)]
pub struct RosterEntry {
    pub k: u64,
    /// `μ = −k²π²/a²`.
    pub mu: f64,
    /// The negative root of the mode's quadratic.
    pub lambda: f64,
    /// The other root.
    pub other: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenCountReport {
    pub a: f64,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub count: usize,
    pub roster: Vec<RosterEntry>,
}

/// Roots of `λ² + bλ + c = 0` (real, `b² > 4c`) without cancellation.
fn real_roots(b: f64, c: f64) -> (f64, f64) {
    let disc = (b * b - 4.0 * c).max(0.0).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    if q == 0.0 {
        return (0.0, 0.0);
    }
    (q, c / q)
}

pub fn count_negative_eigenvalues(p: &PlanarConstantProblem) -> Result<EigenCountReport> {
    require_turing(p)?;
    let (lo, hi) = thresholds(p);
    check_threshold("lower", lo)?;
    check_threshold("upper", hi)?;
    let roster: Vec<RosterEntry> = (modes_below(lo) + 1..=modes_below(hi))
        .map(|k| {
            let mu = -((k * k) as f64) * PI * PI / (p.a * p.a);
            let b = (p.d + 1.0) * mu + p.tr_v();
            let c = p.d * mu * mu + p.m_frak() * mu + p.det_v();
            let (r1, r2) = real_roots(b, c);
            let (neg, other) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let residual = (neg * neg + b * neg + c).abs() / (neg * neg + b.abs() * neg.abs() + c.abs()).max(1e-300);
            RosterEntry {
                k,
                mu,
                lambda: neg,
                other,
                residual,
            }
        })
        .collect();
    Ok(EigenCountReport {
        a: p.a,
        lower_threshold: lo,
        upper_threshold: hi,
        count: roster.len(),
        roster,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugateSets {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub count_with_multiplicity: usize,
    pub count_without_multiplicity: usize,
}

pub fn conjugate_sets(p: &PlanarConstantProblem) -> Result<ConjugateSets> {
    require_turing(p)?;
    let (lo, hi) = thresholds(p);
    check_threshold("lower", lo)?;
    check_threshold("upper", hi)?;
    let (lp, lm) = p.lambda_pm(0.0);
    let (lp, lm) = (lp.re, lm.re);
    let n1 = modes_below(hi);
    let n2 = modes_below(lo);
    let c1: Vec<f64> = (1..=n1).map(|k| k as f64 * PI / (-lm).sqrt()).collect();
    let c2: Vec<f64> = (1..=n2).map(|k| k as f64 * PI / (-lp).sqrt()).collect();
    // common point: k₁π/√(−λ₋) = k₂π/√(−λ₊)  ⇔  λ₋/λ₊ = k₁²/k₂²
    let ratio = lm / lp;
    let mut c3 = Vec::new();
    for k1 in 1..=n1 {
        for k2 in 1..=n2 {
            let target = (k1 * k1) as f64 / (k2 * k2) as f64;
            if (ratio - target).abs() <= RATIO_TOLERANCE * target {
                c3.push(c1[(k1 - 1) as usize]);
            }
        }
    }
    let with = c1.len() + c2.len();
    Ok(ConjugateSets {
        count_with_multiplicity: with,
        count_without_multiplicity: with - c3.len(),
        c1,
        c2,
        c3,
    })
}

fn is_square_integer(value: f64) -> bool {
    if !(value > 0.0) {
        return false;
    }
    let r = value.sqrt();
    r.round() >= 1.0 && (r - r.round()).abs() <= MEMBERSHIP_TOLERANCE
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalDegree {
    pub x0: f64,
    pub in_c1: bool,
    pub in_c2: bool,
    /// `[x₀ ∈ 𝒞₁] − [x₀ ∈ 𝒞₂]`.
    pub table: i64,
    /// Winding of `det G_{is}(x)` on a small rectangle around `(0, x₀)`.
    pub numeric: i64,
}

/// Local degree at a conjugate point from the membership table, verified
/// against the numerical winding.
pub fn local_degree_table(p: &PlanarConstantProblem, x0: f64) -> Result<LocalDegree> {
    require_turing(p)?;
    let (lp, lm) = p.lambda_pm(0.0);
    let in_c1 = is_square_integer(-lm.re * x0 * x0 / (PI * PI));
    let in_c2 = is_square_integer(-lp.re * x0 * x0 / (PI * PI));
    if !(in_c1 || in_c2) {
        return Err(Error::NotConjugatePoint { x0 });
    }
    let table = i64::from(in_c1) - i64::from(in_c2);
    let spec = p.with_length(p.a.max(x0 * 1.5)).to_spec();
    let g = GDeterminant::new(&spec, 0.0, DEFAULT_STEPS_PER_UNIT);
    // stay clear of neighbouring zeros of either family: kπ/√(−λ±)
    let mut gap = x0;
    for l in [lm.re, lp.re] {
        let step = PI / (-l).sqrt();
        let k = (x0 / step).round();
        for j in [k - 1.0, k, k + 1.0] {
            let x = j * step;
            if j >= 1.0 && (x - x0).abs() > 1e-9 * x0 {
                gap = gap.min((x - x0).abs());
            }
        }
        gap = gap.min(step);
    }
    let h = 0.25 * gap;
    let numeric = local_degree_at(&g, x0, h, h, &Default::default())?;
    if numeric != table {
        return Err(Error::CheckFailed {
            check: "local-degree-table",
            detail: format!("table gives {table} but the winding around (0, {x0}) is {numeric}"),
        });
    }
    Ok(LocalDegree {
        x0,
        in_c1,
        in_c2,
        table,
        numeric,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IndexIdentityReport {
    pub c1_minus_c2: i64,
    pub negative_eigenvalues: usize,
    pub degree: i64,
    pub oracle: usize,
    /// Largest `|Im λ|` over oracle eigenvalues with `Re λ < 0`.
    pub oracle_max_imag_negative: f64,
    pub oracle_nodes: usize,
    pub pass: bool,
}

/// `|𝒞₁| − |𝒞₂| = #negative eigenvalues = degree over V = oracle Morse index`.
pub fn degree_equals_negative_count(
    p: &PlanarConstantProblem,
    oracle_nodes: usize,
    morse: &MorseOptions,
) -> Result<IndexIdentityReport> {
    let sets = conjugate_sets(p)?;
    let count = count_negative_eigenvalues(p)?;
    let spec = p.to_spec();
    let (degree, oracle) = rayon::join(
        || morse_via_degree(&spec, morse),
        || morse_report(&spec, 0.0, oracle_nodes, true),
    );
    let (degree, oracle) = (degree?.total_degree, oracle?);
    let c1_minus_c2 = sets.c1.len() as i64 - sets.c2.len() as i64;
    let pass = c1_minus_c2 == count.count as i64 && count.count as i64 == degree && degree == oracle.index as i64;
    let report = IndexIdentityReport {
        c1_minus_c2,
        negative_eigenvalues: count.count,
        degree,
        oracle: oracle.index,
        oracle_max_imag_negative: oracle.max_imag_negative,
        oracle_nodes,
        pass,
    };
    if !pass {
        return Err(Error::CheckFailed {
            check: "degree-equals-negative-count",
            detail: format!(
                "|C1|−|C2| = {}, #neg = {}, degree = {}, oracle = {}",
                report.c1_minus_c2, report.negative_eigenvalues, report.degree, report.oracle
            ),
        });
    }
    Ok(report)
}

/// Local degree table over all conjugate points, evaluated in parallel.
pub fn local_degrees(p: &PlanarConstantProblem) -> Result<Vec<LocalDegree>> {
    let sets = conjugate_sets(p)?;
    let mut xs: Vec<f64> = sets.c1.iter().chain(&sets.c2).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    xs.par_iter().map(|&x| local_degree_table(p, x)).collect()
}
