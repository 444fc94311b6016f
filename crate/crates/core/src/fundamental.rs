//! Fundamental solutions of the first-order system `w′ = J B_z(x) w`,
//! `w = (v, u)` with `v = P u′ + Q u`.

use std::io::Write;
use std::sync::Mutex;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{expm, identity, log_det, to_complex, CMat, Polar, RMat};
use crate::problem::ProblemSpec;

/// Default RK4 steps per unit length of the interval.
pub const DEFAULT_STEPS_PER_UNIT: usize = 2048;
/// `|λ|·x²` below which [`phi_entire`] uses its power series.
pub const PHI_SERIES_THRESHOLD: f64 = 0.25;

/// `J = [[0, −I], [I, 0]]`.
pub fn symplectic_j(n: usize) -> CMat {
    let mut j = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = Complex64::new(-1.0, 0.0);
        j[(n + i, i)] = Complex64::new(1.0, 0.0);
    }
    j
}

fn inverse(p: &RMat) -> RMat {
    p.clone().try_inverse().expect("P invertible (validated)")
}

/// `w′ = J B_z(x) w` for a fixed spectral parameter `z = t + is`.
#[derive(Clone, Copy)]
pub struct FirstOrderSystem<'a> {
    spec: &'a ProblemSpec,
    z: Complex64,
}

impl<'a> FirstOrderSystem<'a> {
    pub fn new(spec: &'a ProblemSpec, z: Complex64) -> Self {
        FirstOrderSystem { spec, z }
    }

    pub fn dimension(&self) -> usize {
        2 * self.spec.n
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    /// `B_z(x) = [[P⁻¹, −P⁻¹Q], [−QᵀP⁻¹, QᵀP⁻¹Q − S − C_z]]`.
    pub fn b(&self, x: f64) -> CMat {
        let n = self.spec.n;
        let pinv = inverse(&self.spec.p.eval(x));
        let q = self.spec.q.eval(x);
        let qt_pinv = q.transpose() * &pinv;
        let real_br = &qt_pinv * &q;
        let br = to_complex(&real_br) - self.spec.zeroth_order(x, self.z);
        let mut b = CMat::zeros(2 * n, 2 * n);
        b.view_mut((0, 0), (n, n)).copy_from(&to_complex(&pinv));
        b.view_mut((0, n), (n, n)).copy_from(&to_complex(&-(&pinv * &q)));
        b.view_mut((n, 0), (n, n)).copy_from(&to_complex(&-qt_pinv));
        b.view_mut((n, n), (n, n)).copy_from(&br);
        b
    }

    /// `J B_z(x) = [[QᵀP⁻¹, S + C_z − QᵀP⁻¹Q], [P⁻¹, −P⁻¹Q]]`.
    pub fn generator(&self, x: f64) -> CMat {
        let n = self.spec.n;
        let pinv = inverse(&self.spec.p.eval(x));
        let q = self.spec.q.eval(x);
        let qt_pinv = q.transpose() * &pinv;
        let tr = self.spec.zeroth_order(x, self.z) - to_complex(&(&qt_pinv * &q));
        let mut a = CMat::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&to_complex(&qt_pinv));
        a.view_mut((0, n), (n, n)).copy_from(&tr);
        a.view_mut((n, 0), (n, n)).copy_from(&to_complex(&pinv));
        a.view_mut((n, n), (n, n)).copy_from(&to_complex(&-(&pinv * &q)));
        a
    }
}

/// The four `N × N` blocks of `ψ = [[E, F], [G, H]]`.
#[derive(Clone, Debug)]
pub struct Blocks {
    pub e: CMat,
    pub f: CMat,
    pub g: CMat,
    pub h: CMat,
}

pub fn blocks(psi: &CMat) -> Blocks {
    let n = psi.nrows() / 2;
    Blocks {
        e: psi.view((0, 0), (n, n)).into_owned(),
        f: psi.view((0, n), (n, n)).into_owned(),
        g: psi.view((n, 0), (n, n)).into_owned(),
        h: psi.view((n, n), (n, n)).into_owned(),
    }
}

/// The lower-left block `G` of `ψ`.
pub fn g_block(psi: &CMat) -> CMat {
    let n = psi.nrows() / 2;
    psi.view((n, 0), (n, n)).into_owned()
}

/// Samples `(x, ψ_z(x))` of a fundamental solution, starting at `(0, Id)`.
#[derive(Clone, Debug)]
pub struct FundamentalSolution {
    pub z: Complex64,
    pub samples: Vec<(f64, CMat)>,
}

impl FundamentalSolution {
    pub fn last(&self) -> &(f64, CMat) {
        self.samples.last().expect("at least the initial sample")
    }

    pub fn end_value(&self) -> &CMat {
        &self.last().1
    }

    pub fn blocks(&self, index: usize) -> Blocks {
        blocks(&self.samples[index].1)
    }

    /// Largest `|log|det ψ(x)| − ∫₀ˣ Re tr(JB_z)|` over the samples
    /// (trapezoidal quadrature of the trace).
    pub fn liouville_defect(&self, spec: &ProblemSpec) -> f64 {
        let sys = FirstOrderSystem::new(spec, self.z);
        let trace = |x: f64| sys.generator(x).trace().re;
        let mut integral = 0.0;
        let mut worst: f64 = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (x, psi) in &self.samples {
            let tr = trace(*x);
            if let Some((x0, tr0)) = prev {
                integral += 0.5 * (x - x0) * (tr + tr0);
            }
            prev = Some((*x, tr));
            worst = worst.max((log_det(psi).log_abs - integral).abs());
        }
        worst
    }

    /// Largest `‖ψᵀ J ψ − J‖_max` over the samples.
    pub fn symplectic_defect(&self) -> f64 {
        let n = self.end_value().nrows() / 2;
        let j = symplectic_j(n);
        self.samples
            .iter()
            .map(|(_, psi)| (psi.transpose() * &j * psi - &j).iter().map(|v| v.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Writes `x, re_00, im_00, re_01, im_01, …` (row-major entries).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dim = self.end_value().nrows();
        write!(out, "x")?;
        for r in 0..dim {
            for c in 0..dim {
                write!(out, ",re_{r}{c},im_{r}{c}")?;
            }
        }
        writeln!(out)?;
        for (x, psi) in &self.samples {
            write!(out, "{x}")?;
            for r in 0..dim {
                for c in 0..dim {
                    write!(out, ",{},{}", psi[(r, c)].re, psi[(r, c)].im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn rk4_step(sys: &FirstOrderSystem, x: f64, h: f64, psi: &CMat) -> CMat {
    let hc = Complex64::new(h, 0.0);
    let half = Complex64::new(0.5 * h, 0.0);
    let a0 = sys.generator(x);
    let amid = sys.generator(x + 0.5 * h);
    let a1 = sys.generator(x + h);
    let k1 = &a0 * psi;
    let k2 = &amid * (psi + &k1 * half);
    let k3 = &amid * (psi + &k2 * half);
    let k4 = &a1 * (psi + &k3 * hc);
    psi + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * (hc / 6.0)
}

fn all_finite(m: &CMat) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Classical RK4 on `Ψ′ = J B_z(x) Ψ`, `Ψ(0) = Id`, with `steps` equal
/// steps on `[0, x_end]`; every intermediate value is returned.
pub fn propagate(spec: &ProblemSpec, z: Complex64, x_end: f64, steps: usize) -> Result<FundamentalSolution> {
    propagate_from(spec, z, 0.0, identity(2 * spec.n), x_end, steps)
}

/// RK4 restarted at `(x_start, ψ_start)`.
pub fn propagate_from(
    spec: &ProblemSpec,
    z: Complex64,
    x_start: f64,
    psi_start: CMat,
    x_end: f64,
    steps: usize,
) -> Result<FundamentalSolution> {
    let steps = steps.max(1);
    let sys = FirstOrderSystem::new(spec, z);
    let h = (x_end - x_start) / steps as f64;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut psi = psi_start;
    samples.push((x_start, psi.clone()));
    for k in 0..steps {
        let x = x_start + k as f64 * h;
        psi = rk4_step(&sys, x, h, &psi);
        let x_next = if k + 1 == steps { x_end } else { x_start + (k + 1) as f64 * h };
        if !all_finite(&psi) {
            return Err(Error::PropagationBlowup { x: x_next });
        }
        samples.push((x_next, psi.clone()));
    }
    Ok(FundamentalSolution { z, samples })
}

/// `exp(x · J B_{is})` for constant `P`, `L = S + C₀`, `Q = 0`.
pub fn matexp_constant(p: &RMat, l: &RMat, s: f64, x: f64) -> FundamentalSolution {
    let n = p.nrows();
    let spec = ProblemSpec::constant(p.clone(), l.clone(), x.max(f64::MIN_POSITIVE));
    let z = Complex64::new(0.0, s);
    let gen = FirstOrderSystem::new(&spec, z).generator(0.0);
    let psi = expm(&(gen * Complex64::new(x, 0.0)));
    FundamentalSolution {
        z,
        samples: vec![(0.0, identity(2 * n)), (x, psi)],
    }
}

/// `φ(λ, x) = Σ_k x^{2k+1} λ^k / (2k+1)!`, i.e. `sinh(√λ x)/√λ`, entire
/// in `λ` and independent of the branch of the square root.
pub fn phi_entire(lambda: Complex64, x: f64) -> Complex64 {
    let w = lambda * x * x;
    if w.norm() <= PHI_SERIES_THRESHOLD {
        let mut term = Complex64::new(x, 0.0);
        let mut sum = term;
        for k in 1..30 {
            term *= w / ((2 * k) as f64 * (2 * k + 1) as f64);
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        let r = lambda.sqrt();
        (r * x).sinh() / r
    }
}

/// Evaluates `ψ_z(x)`: by matrix exponential for constant coefficients,
/// otherwise by RK4 at a fixed number of steps per unit length. Full
/// propagations can be cached per `z` so that many `x` queries at the same
/// `z` cost one partial step each.
pub struct Shooter<'a> {
    spec: &'a ProblemSpec,
    steps_per_unit: usize,
    constant: bool,
    cache: Mutex<Vec<(Complex64, std::sync::Arc<FundamentalSolution>)>>,
}

const CACHE_SIZE: usize = 6;

impl<'a> Shooter<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        Self::with_steps(spec, DEFAULT_STEPS_PER_UNIT)
    }

    pub fn with_steps(spec: &'a ProblemSpec, steps_per_unit: usize) -> Self {
        Shooter {
            spec,
            steps_per_unit: steps_per_unit.max(1),
            constant: spec.is_constant() && spec.q.eval(0.0).iter().all(|&v| v == 0.0),
            cache: Mutex::new(Vec::new()),
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn uses_matrix_exponential(&self) -> bool {
        self.constant
    }

    fn steps_for(&self, length: f64) -> usize {
        ((self.steps_per_unit as f64 * length).ceil() as usize).max(1)
    }

    /// Propagates over the whole interval at `z` and keeps the samples.
    pub fn preload(&self, z: Complex64) -> Result<()> {
        if self.constant || self.cached(z).is_some() {
            return Ok(());
        }
        let sol = propagate(self.spec, z, self.spec.length, self.steps_for(self.spec.length))?;
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_SIZE {
            cache.remove(0);
        }
        cache.push((z, std::sync::Arc::new(sol)));
        Ok(())
    }

    fn cached(&self, z: Complex64) -> Option<std::sync::Arc<FundamentalSolution>> {
        let cache = self.cache.lock().expect("cache lock");
        cache.iter().find(|(k, _)| *k == z).map(|(_, v)| v.clone())
    }

    pub fn psi(&self, z: Complex64, x: f64) -> Result<CMat> {
        if x == 0.0 {
            return Ok(identity(2 * self.spec.n));
        }
        if self.constant {
            let gen = FirstOrderSystem::new(self.spec, z).generator(0.0);
            let psi = expm(&(gen * Complex64::new(x, 0.0)));
            return if all_finite(&psi) {
                Ok(psi)
            } else {
                Err(Error::PropagationBlowup { x })
            };
        }
        if let Some(sol) = self.cached(z) {
            let samples = &sol.samples;
            let i = samples.partition_point(|(xi, _)| *xi <= x).saturating_sub(1);
            let (x0, psi0) = &samples[i];
            if *x0 == x {
                return Ok(psi0.clone());
            }
            let sys = FirstOrderSystem::new(self.spec, z);
            let psi = rk4_step(&sys, *x0, x - x0, psi0);
            return if all_finite(&psi) {
                Ok(psi)
            } else {
                Err(Error::PropagationBlowup { x })
            };
        }
        let sol = propagate(self.spec, z, x, self.steps_for(x))?;
        Ok(sol.end_value().clone())
    }

    /// `log det G_z(x)` in polar form.
    pub fn log_det_g(&self, z: Complex64, x: f64) -> Result<Polar> {
        let psi = self.psi(z, x)?;
        Ok(log_det(&g_block(&psi)))
    }
}
