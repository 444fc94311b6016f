//! Closed forms for planar constant-coefficient problems
//! `−diag(1, d) u″ − V u` on `[0, a]` with Dirichlet conditions.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental::{matexp_constant, phi_entire};
use crate::linalg::{det, spectral_norm, RMat};
use crate::morse::{morse_via_degree, MorseOptions};
use crate::oracle::{default_nodes, morse_index};
use crate::problem::{CoefficientField, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanarConstantProblem {
    pub d: f64,
    pub v: [[f64; 2]; 2],
    pub a: f64,
}

/// Which eigenvalue family of `P⁻¹L + isP⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl PlanarConstantProblem {
    pub fn new(d: f64, v: [[f64; 2]; 2], a: f64) -> Self {
        PlanarConstantProblem { d, v, a }
    }

    /// Recognises `P = diag(1, d)`, `Q = 0`, constant `L = S + C₀ = −V`.
    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        if spec.n != 2 {
            return Err(Error::NotPlanar(format!("dimension {} ≠ 2", spec.n)));
        }
        if !spec.is_constant() {
            return Err(Error::NotPlanar("coefficients depend on x".into()));
        }
        if !spec.boundary.is_dirichlet() {
            return Err(Error::RequiresDirichlet);
        }
        let p = spec.p.eval(0.0);
        if p[(0, 0)] != 1.0 || p[(0, 1)] != 0.0 || p[(1, 0)] != 0.0 || !(p[(1, 1)] > 0.0) {
            return Err(Error::NotPlanar("P must be diag(1, d) with d > 0".into()));
        }
        if spec.q.eval(0.0).iter().any(|&v| v != 0.0) {
            return Err(Error::NotPlanar("Q must vanish".into()));
        }
        let l = spec.zeroth_order_real(0.0, 0.0);
        Ok(PlanarConstantProblem {
            d: p[(1, 1)],
            v: [[-l[(0, 0)], -l[(0, 1)]], [-l[(1, 0)], -l[(1, 1)]]],
            a: spec.length,
        })
    }

    pub fn to_spec(&self) -> ProblemSpec {
        let p = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, self.d]);
        let l = RMat::from_row_slice(2, 2, &[-self.v[0][0], -self.v[0][1], -self.v[1][0], -self.v[1][1]]);
        ProblemSpec::new(CoefficientField::Constant(p), self.a).with_c0(CoefficientField::Constant(l))
    }

    pub fn with_length(&self, a: f64) -> Self {
        PlanarConstantProblem { a, ..*self }
    }

    pub fn tr_v(&self) -> f64 {
        self.v[0][0] + self.v[1][1]
    }

    pub fn det_v(&self) -> f64 {
        self.v[0][0] * self.v[1][1] - self.v[0][1] * self.v[1][0]
    }

    /// `𝔐 = v₂₂ + d·v₁₁`.
    pub fn m_frak(&self) -> f64 {
        self.v[1][1] + self.d * self.v[0][0]
    }

    /// `Δ₁ = 𝔐² − 4d·det V`.
    pub fn delta1(&self) -> f64 {
        self.m_frak().powi(2) - 4.0 * self.d * self.det_v()
    }

    /// `Δ₂ = 4d·tr V − 2(d+1)𝔐`.
    pub fn delta2(&self) -> f64 {
        4.0 * self.d * self.tr_v() - 2.0 * (self.d + 1.0) * self.m_frak()
    }

    /// `P⁻¹L + isP⁻¹`.
    pub fn matrix(&self, s: f64) -> Matrix2<Complex64> {
        let c = |v: f64| Complex64::new(v, 0.0);
        let is = Complex64::new(0.0, s);
        Matrix2::new(
            c(-self.v[0][0]) + is,
            c(-self.v[0][1]),
            c(-self.v[1][0] / self.d),
            c(-self.v[1][1] / self.d) + is / self.d,
        )
    }

    /// `(λ₊(s), λ₋(s))`, the eigenvalues of `P⁻¹L + isP⁻¹` with the
    /// principal square root attached to `λ₊`.
    pub fn lambda_pm(&self, s: f64) -> (Complex64, Complex64) {
        let d = self.d;
        let root = Complex64::new(
            self.delta1() - (d - 1.0).powi(2) * s * s,
            self.delta2() * s,
        )
        .sqrt();
        let base = Complex64::new(-self.m_frak(), (d + 1.0) * s);
        ((base + root) / (2.0 * d), (base - root) / (2.0 * d))
    }

    /// `det Σ_k x^{2k+1}/(2k+1)! (P⁻¹L + isP⁻¹)^k = φ(λ₊, x)·φ(λ₋, x)`.
    /// The `G` block of the fundamental solution has determinant this
    /// value divided by `d`.
    pub fn det_g_analytic(&self, s: f64, x: f64) -> Complex64 {
        let (lp, lm) = self.lambda_pm(s);
        phi_entire(lp, x) * phi_entire(lm, x)
    }

    /// `det G_{is}(x)` of the fundamental solution.
    pub fn det_g_block(&self, s: f64, x: f64) -> Complex64 {
        self.det_g_analytic(s, x) / self.d
    }

    /// Same determinant from the matrix exponential, for cross-checks.
    pub fn det_g_numeric(&self, s: f64, x: f64) -> Complex64 {
        let spec = self.to_spec();
        let l = spec.zeroth_order_real(0.0, 0.0);
        let sol = matexp_constant(&spec.p.eval(0.0), &l, s, x);
        det(&sol.blocks(1).g)
    }

    /// Exact linearization `λ±(s) = a + i·b·s + o(s)` at `s = 0`
    /// (requires `Δ₁ > 0`).
    pub fn linearization(&self, branch: Branch) -> Result<(f64, f64)> {
        let delta1 = self.delta1();
        if !(delta1 > 0.0) {
            return Err(Error::DegenerateLinearization { a: f64::NAN, b: f64::NAN });
        }
        let r = delta1.sqrt();
        let d = self.d;
        let sign = match branch {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        };
        let a = (-self.m_frak() + sign * r) / (2.0 * d);
        let b = ((d + 1.0) + sign * self.delta2() / (2.0 * r)) / (2.0 * d);
        Ok((a, b))
    }

    /// `x₀ = kπ/√(−λ(0))`, the zeros of `φ(λ(0), ·)` on `(0, a)`.
    pub fn branch_zeros(&self, branch: Branch) -> Vec<f64> {
        let (lp, lm) = self.lambda_pm(0.0);
        let l = match branch {
            Branch::Plus => lp,
            Branch::Minus => lm,
        };
        if l.im.abs() > 1e-12 * l.norm().max(1.0) || l.re >= 0.0 {
            return Vec::new();
        }
        let step = PI / (-l.re).sqrt();
        (1..).map(|k| k as f64 * step).take_while(|&x| x < self.a).collect()
    }
}

/// `deg(sinh(√f(s)·x), Ω, 0)` for `f(s) = a + ibs + o(s)`.
pub fn local_degree_sign(a: f64, b: f64) -> Result<i64> {
    if a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::DegenerateLinearization { a, b });
    }
    Ok(-((a * b).signum() as i64))
}

#[derive(Clone, Debug, Serialize)]
pub struct NilpotentReport {
    pub oracle_without: usize,
    pub degree_without: i64,
    pub oracle_with: usize,
    pub degree_with: i64,
}

/// Morse indices of `−u″ + λu` and `−u″ + λu + 𝒩u` on `[0, ℓ]` (Dirichlet),
/// each computed by the oracle and by the degree over `V`.
pub fn nilpotent_invariance_check(lambda: f64, nilpotent: &RMat, length: f64) -> Result<NilpotentReport> {
    let n = nilpotent.nrows();
    if nilpotent.ncols() != n {
        return Err(Error::Invalid(vec!["nilpotent part must be square".into()]));
    }
    let power = (1..n).fold(nilpotent.clone(), |acc, _| acc * nilpotent);
    if power.amax() > 1e-12 * nilpotent.amax().max(1.0) {
        return Err(Error::Invalid(vec!["matrix is not nilpotent".into()]));
    }
    let base = RMat::identity(n, n) * lambda;
    let plain = ProblemSpec::constant(RMat::identity(n, n), base.clone(), length);
    let coupled = ProblemSpec::constant(RMat::identity(n, n), base + nilpotent, length);
    let m = default_nodes(&plain);
    let opts = MorseOptions::default();
    let report = NilpotentReport {
        oracle_without: morse_index(&plain, 0.0, m)?,
        degree_without: morse_via_degree(&plain, &opts)?.total_degree,
        oracle_with: morse_index(&coupled, 0.0, m)?,
        degree_with: morse_via_degree(&coupled, &opts)?.total_degree,
    };
    let all = [
        report.oracle_without as i64,
        report.degree_without,
        report.oracle_with as i64,
        report.degree_with,
    ];
    if all.iter().any(|&v| v != all[0]) {
        return Err(Error::CheckFailed {
            check: "nilpotent-invariance",
            detail: format!("{report:?}"),
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeCount {
    pub k: u64,
    /// Eigenvalues of `(kπ/ℓ)²P + S + C_t` with negative real part.
    pub negative: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModalMorseCount {
    pub t: f64,
    pub index: usize,
    pub modes: Vec<ModeCount>,
}

/// Morse index of a constant-coefficient Dirichlet problem with `Q = 0`:
/// the sine modes decouple, so the spectrum is the union over `k ≥ 1` of
/// the eigenvalues of `(kπ/ℓ)²P + S + C_t`.
pub fn modal_morse_count(spec: &ProblemSpec, t: f64) -> Result<ModalMorseCount> {
    if !spec.is_constant() || !spec.boundary.is_dirichlet() || spec.q.eval(0.0).amax() != 0.0 {
        return Err(Error::Invalid(vec![
            "modal count needs constant coefficients, Q = 0 and Dirichlet conditions".into(),
        ]));
    }
    let report = spec.check()?;
    let p = spec.p.eval(0.0);
    let c = spec.zeroth_order_real(0.0, t);
    // Re⟨(μP + C)v, v⟩ ≥ μ·p_min − ‖C‖ bounds the modes that can contribute
    let bound = spectral_norm(&c) / report.p_min_eigenvalue;
    let mut modes = Vec::new();
    let mut k = 1u64;
    loop {
        let mu = (k as f64 * PI / spec.length).powi(2);
        if mu > bound {
            break;
        }
        let eig = (&p * mu + &c).complex_eigenvalues();
        for l in eig.iter() {
            if l.re.abs() <= 1e-9 * l.norm().max(1.0) {
                return Err(Error::DegenerateOperator {
                    t,
                    re: l.re,
                    im: l.im,
                    tolerance: 1e-9,
                });
            }
        }
        let negative = eig.iter().filter(|l| l.re < 0.0).count();
        if negative > 0 {
            modes.push(ModeCount { k, negative });
        }
        k += 1;
    }
    Ok(ModalMorseCount {
        t,
        index: modes.iter().map(|m| m.negative).sum(),
        modes,
    })
}
