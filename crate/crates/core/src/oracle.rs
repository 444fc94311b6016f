//! Finite-difference oracle: discretized Dirichlet operators, their full
//! complex spectra, the Morse index, and the spectral flow as a signed
//! count of imaginary-axis crossings.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::degree::{winding, WindingOptions};
use crate::error::{Error, Result};
use crate::linalg::{banded_log_det, Polar, RMat};
use crate::problem::{ProblemSpec, Rectangle};

/// Smallest accepted number of interior nodes.
pub const MIN_NODES: usize = 8;
/// Gap tolerance factor: `|Re λ| < GAP_FACTOR · h² · max(1, |λ|)` is degenerate.
pub const GAP_FACTOR: f64 = 10.0;
/// Maximal number of t-interval halvings in the spectral flow matching.
pub const MAX_REFINEMENT: usize = 16;

/// Default interior nodes for Morse index counts: `400·ℓ`, clamped to `[64, 1600]`.
pub fn default_nodes(spec: &ProblemSpec) -> usize {
    ((400.0 * spec.length).round() as usize).clamp(64, 1600)
}

/// Default interior nodes for spectral flow tracking: `64·ℓ`, clamped to `[32, 256]`.
pub fn default_flow_nodes(spec: &ProblemSpec) -> usize {
    ((64.0 * spec.length).round() as usize).clamp(32, 256)
}

pub fn gap_tolerance(h: f64, lambda: Complex64) -> f64 {
    GAP_FACTOR * h * h * lambda.norm().max(1.0)
}

/// Block-tridiagonal central-difference discretization of `A_{t+is}` on
/// the interior nodes `x_j = (j+1)·h`, `h = ℓ/(m+1)`, with the Dirichlet
/// values eliminated.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub t: f64,
    pub s: f64,
    lower: Vec<RMat>,
    diag: Vec<RMat>,
    upper: Vec<RMat>,
}

pub fn discretize(spec: &ProblemSpec, t: f64, s: f64, m: usize) -> Result<Discretization> {
    if !spec.boundary.is_dirichlet() {
        return Err(Error::RequiresDirichlet);
    }
    if m < MIN_NODES {
        return Err(Error::Invalid(vec![format!("grid size m = {m} must be ≥ {MIN_NODES}")]));
    }
    let n = spec.n;
    let h = spec.length / (m + 1) as f64;
    let (h2, h2x) = (h * h, 2.0 * h);
    let rows: Vec<(RMat, RMat, RMat)> = (0..m)
        .map(|j| {
            let x = (j + 1) as f64 * h;
            let (xm, xp) = (x - 0.5 * h, x + 0.5 * h);
            let (pm, pp) = (spec.p.eval(xm), spec.p.eval(xp));
            let (qm, qp) = (spec.q.eval(xm), spec.q.eval(xp));
            let qt = spec.q.eval(x).transpose();
            let lower = -&pm / h2 + &qm / h2x - &qt / h2x;
            let upper = -&pp / h2 - &qp / h2x + &qt / h2x;
            let diag = (&pp + &pm) / h2 - &qp / h2x + &qm / h2x + spec.zeroth_order_real(x, t);
            (lower, diag, upper)
        })
        .collect();
    let mut lower = Vec::with_capacity(m);
    let mut diag = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    for (l, d, u) in rows {
        lower.push(l);
        diag.push(d);
        upper.push(u);
    }
    Ok(Discretization {
        n,
        m,
        h,
        t,
        s,
        lower,
        diag,
        upper,
    })
}

impl Discretization {
    pub fn size(&self) -> usize {
        self.n * self.m
    }

    /// Real entry of `A_t` (without the `is` shift) at flattened `(r, c)`.
    fn real_entry(&self, r: usize, c: usize) -> f64 {
        let (bj, a) = (r / self.n, r % self.n);
        let (bk, b) = (c / self.n, c % self.n);
        if bk == bj {
            self.diag[bj][(a, b)]
        } else if bk + 1 == bj {
            self.lower[bj][(a, b)]
        } else if bk == bj + 1 {
            self.upper[bj][(a, b)]
        } else {
            0.0
        }
    }

    /// Dense real part `A_t`.
    pub fn dense_real(&self) -> RMat {
        let size = self.size();
        RMat::from_fn(size, size, |r, c| self.real_entry(r, c))
    }

    /// Spectrum of `A_t + is`, sorted by real then imaginary part.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let size = self.size();
        let mat = faer::Mat::<f64>::from_fn(size, size, |r, c| self.real_entry(r, c));
        let eig = mat.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let shift = Complex64::new(0.0, self.s);
        let mut out: Vec<Complex64> = eig.into_iter().map(|l| Complex64::new(l.re, l.im) + shift).collect();
        out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(out)
    }

    /// `log det(A_t + is + shift)` by banded LU.
    pub fn log_det_shifted(&self, shift: Complex64) -> Polar {
        let band = 2 * self.n - 1;
        let total = Complex64::new(0.0, self.s) + shift;
        banded_log_det(self.size(), band, band, |r, c| {
            let v = Complex64::new(self.real_entry(r, c), 0.0);
            if r == c {
                v + total
            } else {
                v
            }
        })
    }
}

fn serialize_complex_vec<S: Serializer>(v: &[Complex64], ser: S) -> std::result::Result<S::Ok, S::Error> {
    let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
    pairs.serialize(ser)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSnapshot {
    pub t: f64,
    #[serde(serialize_with = "serialize_complex_vec")]
    pub eigenvalues: Vec<Complex64>,
}

pub fn snapshot(spec: &ProblemSpec, t: f64, m: usize) -> Result<SpectrumSnapshot> {
    Ok(SpectrumSnapshot {
        t,
        eigenvalues: discretize(spec, t, 0.0, m)?.eigenvalues()?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MorseIndexReport {
    pub t: f64,
    pub m: usize,
    pub index: usize,
    /// Index at `m/2`, when the stability check was run.
    pub coarse_index: Option<usize>,
    pub min_abs_re: f64,
    /// Eigenvalues with negative real part.
    #[serde(serialize_with = "serialize_complex_vec")]
    pub negative: Vec<Complex64>,
    /// Largest `|Im λ|` among eigenvalues with negative real part.
    pub max_imag_negative: f64,
}

fn check_spectrum(spec: &ProblemSpec, t: f64, h: f64, eig: &[Complex64]) -> Result<()> {
    for &l in eig {
        let tol = gap_tolerance(h, l);
        if l.re.abs() < tol {
            return Err(Error::DegenerateOperator {
                t,
                re: l.re,
                im: l.im,
                tolerance: tol,
            });
        }
        if let Some(floor) = spec.spectral_floor {
            if l.re < -floor {
                return Err(Error::FloorViolated { t, re: l.re, floor });
            }
        }
    }
    Ok(())
}

/// Morse index of the discretized `A_t` (eigenvalues with `Re λ < 0`,
/// counted with algebraic multiplicity). With `stability_check`, the count
/// is repeated at `m/2` and must agree.
pub fn morse_report(spec: &ProblemSpec, t: f64, m: usize, stability_check: bool) -> Result<MorseIndexReport> {
    let disc = discretize(spec, t, 0.0, m)?;
    let eig = disc.eigenvalues()?;
    check_spectrum(spec, t, disc.h, &eig)?;
    let negative: Vec<Complex64> = eig.iter().copied().filter(|l| l.re < 0.0).collect();
    let index = negative.len();
    let coarse_index = if stability_check {
        let mc = (m / 2).max(MIN_NODES);
        let coarse = discretize(spec, t, 0.0, mc)?;
        let ce = coarse.eigenvalues()?;
        check_spectrum(spec, t, coarse.h, &ce)?;
        let ci = ce.iter().filter(|l| l.re < 0.0).count();
        if ci != index {
            return Err(Error::UnresolvedDiscretization {
                coarse: ci,
                fine: index,
                m_coarse: mc,
                m_fine: m,
            });
        }
        Some(ci)
    } else {
        None
    };
    Ok(MorseIndexReport {
        t,
        m,
        index,
        coarse_index,
        min_abs_re: eig.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min),
        max_imag_negative: negative.iter().map(|l| l.im.abs()).fold(0.0, f64::max),
        negative,
    })
}

pub fn morse_index(spec: &ProblemSpec, t: f64, m: usize) -> Result<usize> {
    morse_report(spec, t, m, true).map(|r| r.index)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingEvent {
    pub t: f64,
    pub value: (f64, f64),
    pub direction: Direction,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingLedger {
    pub t_min: f64,
    pub t_max: f64,
    pub m: usize,
    pub events: Vec<CrossingEvent>,
    pub left_to_right: usize,
    pub right_to_left: usize,
    /// `left_to_right − right_to_left`.
    pub net: i64,
    pub morse_start: usize,
    pub morse_end: usize,
    /// Winding of `det(A_t + is)` over `∂Ω`, when the cross-check ran.
    pub det_winding: Option<i64>,
    pub snapshots: usize,
    /// Eigenvalues per snapshot, ordered by matched trajectory.
    #[serde(skip)]
    pub trajectories: Vec<(f64, Vec<Complex64>)>,
}

impl CrossingLedger {
    /// Writes `t, k, re, im` for every trajectory `k`.
    pub fn write_trajectory_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,k,re,im")?;
        for (t, eig) in &self.trajectories {
            for (k, l) in eig.iter().enumerate() {
                writeln!(out, "{t},{k},{},{}", l.re, l.im)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub m: usize,
    pub path_steps: usize,
    pub cross_check: bool,
    pub winding: WindingOptions,
}

impl FlowOptions {
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        FlowOptions {
            m: default_flow_nodes(spec),
            path_steps: 32,
            cross_check: true,
            winding: WindingOptions::default(),
        }
    }
}

/// Greedy nearest-neighbour assignment: `a[i] ↦ b[perm[i]]`.
pub fn greedy_match(a: &[Complex64], b: &[Complex64]) -> Vec<usize> {
    let n = a.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; b.len()];
    let mut left = n;
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !taken[j] {
            perm[i] = j;
            taken[j] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    perm
}

fn side(z: Complex64) -> bool {
    z.re < 0.0
}

/// True when some matched pair could be swapped with an eigenvalue on the
/// other side of the imaginary axis: its matching distance exceeds half
/// the distance to the nearest eigenvalue of opposite sign class.
fn ambiguous(a: &[Complex64], b: &[Complex64], perm: &[usize]) -> bool {
    (0..a.len()).any(|i| {
        let target = b[perm[i]];
        let d = (a[i] - target).norm();
        if d <= 0.5 * a[i].re.abs() && d <= 0.5 * target.re.abs() {
            return false;
        }
        let near_a = a
            .iter()
            .filter(|x| side(**x) != side(a[i]))
            .map(|x| (x - a[i]).norm())
            .fold(f64::INFINITY, f64::min);
        let near_b = b
            .iter()
            .filter(|y| side(**y) != side(target))
            .map(|y| (y - target).norm())
            .fold(f64::INFINITY, f64::min);
        d > 0.5 * near_a || d > 0.5 * near_b
    })
}

struct Tracker<'a> {
    spec: &'a ProblemSpec,
    m: usize,
    snapshots: usize,
    trajectories: Vec<(f64, Vec<Complex64>)>,
    events: Vec<CrossingEvent>,
}

impl Tracker<'_> {
    fn eig(&mut self, t: f64) -> Result<Vec<Complex64>> {
        self.snapshots += 1;
        discretize(self.spec, t, 0.0, self.m)?.eigenvalues()
    }

    /// Matches `(ta, a)` to `(tb, b)`, halving the interval while the
    /// assignment is ambiguous; appends `b` in trajectory order.
    fn advance(&mut self, ta: f64, a: &[Complex64], tb: f64, b: Vec<Complex64>, depth: usize) -> Result<Vec<Complex64>> {
        let perm = greedy_match(a, &b);
        if ambiguous(a, &b, &perm) {
            if depth >= MAX_REFINEMENT {
                return Err(Error::MatchingAmbiguity { t: 0.5 * (ta + tb) });
            }
            let tm = 0.5 * (ta + tb);
            let mid = self.eig(tm)?;
            let mid = self.advance(ta, a, tm, mid, depth + 1)?;
            return self.advance(tm, &mid, tb, b, depth + 1);
        }
        let ordered: Vec<Complex64> = perm.iter().map(|&j| b[j]).collect();
        for (x, y) in a.iter().zip(&ordered) {
            if side(*x) != side(*y) {
                let frac = x.re / (x.re - y.re);
                let value = x + (y - x) * frac;
                let direction = if side(*x) {
                    Direction::LeftToRight
                } else {
                    Direction::RightToLeft
                };
                self.events.push(CrossingEvent {
                    t: ta + frac * (tb - ta),
                    value: (0.0, value.im),
                    direction,
                    multiplicity: 1,
                });
            }
        }
        self.trajectories.push((tb, ordered.clone()));
        Ok(ordered)
    }
}

fn merge_events(mut events: Vec<CrossingEvent>) -> Vec<CrossingEvent> {
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.value.1.total_cmp(&b.value.1)));
    let mut out: Vec<CrossingEvent> = Vec::new();
    for e in events {
        if let Some(last) = out.last_mut() {
            if last.direction == e.direction
                && (last.t - e.t).abs() <= 1e-9 * (1.0 + e.t.abs())
                && (last.value.1 - e.value.1).abs() <= 1e-6 * (1.0 + e.value.1.abs())
            {
                last.multiplicity += 1;
                continue;
            }
        }
        out.push(e);
    }
    out
}

/// Spectral flow of `t ↦ A_t` over `[omega.t_min, omega.t_max]` by
/// eigenvalue continuation, cross-checked against the winding of
/// `det(A_t + is)` over `∂Ω`.
pub fn spectral_flow(spec: &ProblemSpec, omega: &Rectangle, opts: &FlowOptions) -> Result<CrossingLedger> {
    omega.check()?;
    let steps = opts.path_steps.max(1);
    let ts: Vec<f64> = (0..=steps)
        .map(|i| omega.t_min + omega.width() * i as f64 / steps as f64)
        .collect();
    let initial: Vec<Vec<Complex64>> = ts
        .par_iter()
        .map(|&t| discretize(spec, t, 0.0, opts.m)?.eigenvalues())
        .collect::<Result<_>>()?;
    let h = spec.length / (opts.m + 1) as f64;
    check_spectrum(spec, omega.t_min, h, &initial[0])?;
    check_spectrum(spec, omega.t_max, h, &initial[steps])?;

    let mut tracker = Tracker {
        spec,
        m: opts.m,
        snapshots: initial.len(),
        trajectories: vec![(ts[0], initial[0].clone())],
        events: Vec::new(),
    };
    let mut current = initial[0].clone();
    for i in 1..=steps {
        current = tracker.advance(ts[i - 1], &current, ts[i], initial[i].clone(), 0)?;
    }
    let events = merge_events(tracker.events);
    let l: usize = events
        .iter()
        .filter(|e| e.direction == Direction::LeftToRight)
        .map(|e| e.multiplicity)
        .sum();
    let r: usize = events
        .iter()
        .filter(|e| e.direction == Direction::RightToLeft)
        .map(|e| e.multiplicity)
        .sum();
    let net = l as i64 - r as i64;
    let morse_start = initial[0].iter().filter(|z| z.re < 0.0).count();
    let morse_end = initial[steps].iter().filter(|z| z.re < 0.0).count();

    let det_winding = if opts.cross_check {
        let f = |t: f64, s: f64| Ok(discretize(spec, t, s, opts.m)?.log_det_shifted(Complex64::new(0.0, 0.0)));
        let w = winding(&f, omega, &opts.winding)?.degree;
        if w != net {
            return Err(Error::CheckFailed {
                check: "spectral-flow-vs-det-winding",
                detail: format!("crossing count {net} but det(A_t + is) winds {w} times"),
            });
        }
        Some(w)
    } else {
        None
    };
    Ok(CrossingLedger {
        t_min: omega.t_min,
        t_max: omega.t_max,
        m: opts.m,
        events,
        left_to_right: l,
        right_to_left: r,
        net,
        morse_start,
        morse_end,
        det_winding,
        snapshots: tracker.snapshots,
        trajectories: tracker.trajectories,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SfMorseReport {
    pub spectral_flow: i64,
    pub morse_start: usize,
    pub morse_end: usize,
    pub det_winding: Option<i64>,
    pub m_flow: usize,
    pub m_morse: usize,
}

/// Checks `sf = m⁻(A_{t_min}) − m⁻(A_{t_max})`, with the endpoint indices
/// computed independently at `m_morse` nodes (stability-checked).
pub fn verify_sf_morse(
    spec: &ProblemSpec,
    omega: &Rectangle,
    m_morse: usize,
    flow: &FlowOptions,
) -> Result<SfMorseReport> {
    let ledger = spectral_flow(spec, omega, flow)?;
    let (start, end) = rayon::join(
        || morse_index(spec, omega.t_min, m_morse),
        || morse_index(spec, omega.t_max, m_morse),
    );
    let (start, end) = (start?, end?);
    if ledger.net != start as i64 - end as i64 {
        return Err(Error::CheckFailed {
            check: "spectral-flow-vs-morse",
            detail: format!("sf = {} but m⁻(start) − m⁻(end) = {start} − {end}", ledger.net),
        });
    }
    Ok(SfMorseReport {
        spectral_flow: ledger.net,
        morse_start: start,
        morse_end: end,
        det_winding: ledger.det_winding,
        m_flow: flow.m,
        m_morse,
    })
}
