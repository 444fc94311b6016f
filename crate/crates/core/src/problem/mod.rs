//! Problem data: coefficient fields, boundary conditions, the parameter
//! rectangle and validation of a full boundary value problem instance.
//!
//! The operator is
//!
//! ```text
//! A_z u = −(P u′ + Q u)′ + Qᵀ u′ + S u + C_z u,    x ∈ [0, ℓ]
//! ```
//!
//! with `C_z = C_t + is·Id` and `t ↦ C_t` the zeroth-order path described
//! by [`PathKind`].

mod file;

pub use file::{load_problem, parse_problem, write_problem, ProblemFile, SCHEMA_VERSION};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CMat, RMat};

/// Number of equispaced points used to check pointwise invariants.
pub const VALIDATION_POINTS: usize = 129;
/// Multiplier applied to the perturbation bound when sizing the strip.
pub const STRIP_SAFETY_FACTOR: f64 = 2.0;
/// Lower bound for the perturbation norm used in the strip height.
pub const STRIP_FLOOR: f64 = 1.0;

/// A real `N × N` matrix-valued function on `[0, ℓ]`.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientField {
    Constant(RMat),
    /// `Σ_k x^k · terms[k]`
    Polynomial(Vec<RMat>),
    /// Natural cubic spline through sampled matrices.
    Grid(GridField),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    nodes: Vec<f64>,
    values: Vec<RMat>,
    second: Vec<RMat>,
}

impl GridField {
    pub fn new(nodes: Vec<f64>, values: Vec<RMat>) -> Self {
        let second = spline_second_derivatives(&nodes, &values);
        GridField {
            nodes,
            values,
            second,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[RMat] {
        &self.values
    }

    fn eval(&self, x: f64) -> RMat {
        let n = self.nodes.len();
        if n == 1 || self.values.len() != n {
            return self.values[0].clone();
        }
        // clamp to the end intervals; extrapolation uses the boundary cubic
        let i = match self.nodes.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.nodes[i + 1] - self.nodes[i];
        let a = (self.nodes[i + 1] - x) / h;
        let b = 1.0 - a;
        let ca = (a * a * a - a) * h * h / 6.0;
        let cb = (b * b * b - b) * h * h / 6.0;
        &self.values[i] * a + &self.values[i + 1] * b + &self.second[i] * ca + &self.second[i + 1] * cb
    }
}

/// Second derivatives of the natural cubic spline (Thomas algorithm with
/// matrix-valued right-hand sides).
fn spline_second_derivatives(nodes: &[f64], values: &[RMat]) -> Vec<RMat> {
    let n = nodes.len();
    if n < 3 || values.len() != n {
        return values.iter().map(|v| RMat::zeros(v.nrows(), v.ncols())).collect();
    }
    let (r, c) = values[0].shape();
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs: Vec<RMat> = vec![RMat::zeros(r, c); n];
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
    for i in 1..n - 1 {
        let h0 = nodes[i] - nodes[i - 1];
        let h1 = nodes[i + 1] - nodes[i];
        let lower = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (&values[i + 1] - &values[i]) / h1 - (&values[i] - &values[i - 1]) / h0;
        // forward elimination against row i-1
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        let prev = rhs[i - 1].clone();
        rhs[i] -= prev * w;
    }
    let mut m = vec![RMat::zeros(r, c); n];
    for i in (1..n - 1).rev() {
        m[i] = (&rhs[i] - &m[i + 1] * upper[i]) / diag[i];
    }
    m
}

impl CoefficientField {
    pub fn zeros(n: usize) -> Self {
        CoefficientField::Constant(RMat::zeros(n, n))
    }

    pub fn constant(m: RMat) -> Self {
        CoefficientField::Constant(m)
    }

    pub fn identity(n: usize) -> Self {
        CoefficientField::Constant(RMat::identity(n, n))
    }

    pub fn is_constant(&self) -> bool {
        match self {
            CoefficientField::Constant(_) => true,
            CoefficientField::Polynomial(terms) => terms.iter().skip(1).all(|t| t.iter().all(|&v| v == 0.0)),
            CoefficientField::Grid(g) => g.values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            CoefficientField::Constant(m) => m.shape(),
            CoefficientField::Polynomial(terms) => terms.first().map(|t| t.shape()).unwrap_or((0, 0)),
            CoefficientField::Grid(g) => g.values.first().map(|t| t.shape()).unwrap_or((0, 0)),
        }
    }

    pub fn eval(&self, x: f64) -> RMat {
        match self {
            CoefficientField::Constant(m) => m.clone(),
            CoefficientField::Polynomial(terms) => {
                let (r, c) = self.shape();
                terms.iter().rev().fold(RMat::zeros(r, c), |acc, t| acc * x + t)
            }
            CoefficientField::Grid(g) => g.eval(x),
        }
    }

    fn structural_problems(&self, name: &str, n: usize, length: f64) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            CoefficientField::Constant(m) => {
                if m.shape() != (n, n) {
                    out.push(format!("{name}: expected {n}×{n} matrix, got {}×{}", m.nrows(), m.ncols()));
                }
            }
            CoefficientField::Polynomial(terms) => {
                if terms.is_empty() {
                    out.push(format!("{name}: polynomial with no terms"));
                }
                if terms.iter().any(|t| t.shape() != (n, n)) {
                    out.push(format!("{name}: polynomial terms must be {n}×{n}"));
                }
            }
            CoefficientField::Grid(g) => {
                if g.nodes.len() < 2 {
                    out.push(format!("{name}: sampled grid needs at least 2 nodes, got {}", g.nodes.len()));
                }
                if g.values.len() != g.nodes.len() {
                    out.push(format!(
                        "{name}: {} grid values for {} nodes",
                        g.values.len(),
                        g.nodes.len()
                    ));
                }
                if g.nodes.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push(format!("{name}: grid nodes must be strictly increasing"));
                }
                if let (Some(&first), Some(&last)) = (g.nodes.first(), g.nodes.last()) {
                    let tol = 1e-12 * length.max(1.0);
                    if first > tol || last < length - tol {
                        out.push(format!("{name}: grid [{first}, {last}] does not cover [0, {length}]"));
                    }
                }
                if g.values.iter().any(|t| t.shape() != (n, n)) {
                    out.push(format!("{name}: grid values must be {n}×{n}"));
                }
            }
        }
        out
    }
}

/// Recognised boundary condition presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPreset {
    Dirichlet,
    Neumann,
    Periodic,
    Custom,
}

/// `R₀ w(0) + R₁ w(ℓ) = 0` with `w = (v, u)`, `v = P u′ + Q u`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCondition {
    pub r0: RMat,
    pub r1: RMat,
    pub preset: BoundaryPreset,
}

impl BoundaryCondition {
    pub fn preset(kind: BoundaryPreset, n: usize) -> Self {
        let mut r0 = RMat::zeros(2 * n, 2 * n);
        let mut r1 = RMat::zeros(2 * n, 2 * n);
        let id = RMat::identity(n, n);
        match kind {
            BoundaryPreset::Dirichlet => {
                r0.view_mut((0, n), (n, n)).copy_from(&id);
                r1.view_mut((n, n), (n, n)).copy_from(&id);
            }
            BoundaryPreset::Neumann => {
                r0.view_mut((0, 0), (n, n)).copy_from(&id);
                r1.view_mut((n, 0), (n, n)).copy_from(&id);
            }
            BoundaryPreset::Periodic => {
                r0 = RMat::identity(2 * n, 2 * n);
                r1 = -RMat::identity(2 * n, 2 * n);
            }
            BoundaryPreset::Custom => {}
        }
        BoundaryCondition { r0, r1, preset: kind }
    }

    pub fn dirichlet(n: usize) -> Self {
        Self::preset(BoundaryPreset::Dirichlet, n)
    }

    pub fn custom(r0: RMat, r1: RMat) -> Self {
        let mut bc = BoundaryCondition {
            r0,
            r1,
            preset: BoundaryPreset::Custom,
        };
        bc.preset = bc.classify();
        bc
    }

    /// Recognises the preset whose block matrices equal `(R₀, R₁)` exactly.
    pub fn classify(&self) -> BoundaryPreset {
        let n2 = self.r0.nrows();
        if !n2.is_multiple_of(2) || self.r0.shape() != (n2, n2) || self.r1.shape() != (n2, n2) {
            return BoundaryPreset::Custom;
        }
        let n = n2 / 2;
        for kind in [BoundaryPreset::Dirichlet, BoundaryPreset::Neumann, BoundaryPreset::Periodic] {
            let p = Self::preset(kind, n);
            if p.r0 == self.r0 && p.r1 == self.r1 {
                return kind;
            }
        }
        BoundaryPreset::Custom
    }

    pub fn is_dirichlet(&self) -> bool {
        self.classify() == BoundaryPreset::Dirichlet
    }
}

/// How the zeroth-order coefficient moves with the path parameter `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    /// `C_t = C₀ + t·K·Id`
    #[default]
    Shift,
    /// `C_t = (1 − t)·C₀ + t·K·Id`
    Fade,
}

/// Axis-aligned rectangle in the parameter plane: horizontal coordinate
/// `t`, vertical coordinate `s`. Also reused for the `(s, x)` plane of the
/// Morse index theorem with `t ↔ s` and `s ↔ x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub t_min: f64,
    pub t_max: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Rectangle {
    pub fn new(t_min: f64, t_max: f64, s_min: f64, s_max: f64) -> Result<Self> {
        let r = Rectangle {
            t_min,
            t_max,
            s_min,
            s_max,
        };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.t_min < self.t_max) {
            v.push(format!("rectangle: t_min {} must be < t_max {}", self.t_min, self.t_max));
        }
        if !(self.s_min < self.s_max) {
            v.push(format!("rectangle: s_min {} must be < s_max {}", self.s_min, self.s_max));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    pub fn width(&self) -> f64 {
        self.t_max - self.t_min
    }

    pub fn height(&self) -> f64 {
        self.s_max - self.s_min
    }

    /// Splits along the vertical line at horizontal fraction `frac`.
    pub fn split_vertical(&self, frac: f64) -> (Rectangle, Rectangle) {
        let t = self.t_min + frac * self.width();
        (
            Rectangle { t_max: t, ..*self },
            Rectangle { t_min: t, ..*self },
        )
    }

    /// Four sub-rectangles meeting at the point at fractions (`ft`, `fs`).
    pub fn quadrisect(&self, ft: f64, fs: f64) -> [Rectangle; 4] {
        let t = self.t_min + ft * self.width();
        let s = self.s_min + fs * self.height();
        [
            Rectangle::new_unchecked(self.t_min, t, self.s_min, s),
            Rectangle::new_unchecked(t, self.t_max, self.s_min, s),
            Rectangle::new_unchecked(t, self.t_max, s, self.s_max),
            Rectangle::new_unchecked(self.t_min, t, s, self.s_max),
        ]
    }

    fn new_unchecked(t_min: f64, t_max: f64, s_min: f64, s_max: f64) -> Self {
        Rectangle {
            t_min,
            t_max,
            s_min,
            s_max,
        }
    }
}

/// A full boundary value problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: Option<String>,
    pub n: usize,
    pub length: f64,
    pub p: CoefficientField,
    pub q: CoefficientField,
    pub s: CoefficientField,
    pub c0: CoefficientField,
    pub boundary: BoundaryCondition,
    /// `K ≥ 0` in the zeroth-order path.
    pub perturbation_shift: f64,
    pub path: PathKind,
    /// Lower bound `−floor` on the real parts along the path, if asserted.
    pub spectral_floor: Option<f64>,
    /// Affine reparametrisation `t ↦ offset + scale·t` of the path, used to
    /// traverse it backwards.
    pub reparametrization: Option<(f64, f64)>,
}

impl ProblemSpec {
    /// Dirichlet problem with principal coefficient `p` and all other
    /// coefficients zero.
    pub fn new(p: CoefficientField, length: f64) -> Self {
        let n = p.shape().0;
        ProblemSpec {
            name: None,
            n,
            length,
            p,
            q: CoefficientField::zeros(n),
            s: CoefficientField::zeros(n),
            c0: CoefficientField::zeros(n),
            boundary: BoundaryCondition::dirichlet(n),
            perturbation_shift: 0.0,
            path: PathKind::Shift,
            spectral_floor: None,
            reparametrization: None,
        }
    }

    /// Constant-coefficient problem `−P u″ + L u` with `L` placed in `C₀`.
    pub fn constant(p: RMat, l: RMat, length: f64) -> Self {
        ProblemSpec::new(CoefficientField::Constant(p), length).with_c0(CoefficientField::Constant(l))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_q(mut self, q: CoefficientField) -> Self {
        self.q = q;
        self
    }

    pub fn with_s(mut self, s: CoefficientField) -> Self {
        self.s = s;
        self
    }

    pub fn with_c0(mut self, c0: CoefficientField) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_boundary(mut self, boundary: BoundaryCondition) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_shift(mut self, k: f64) -> Self {
        self.perturbation_shift = k;
        self
    }

    pub fn with_path(mut self, path: PathKind) -> Self {
        self.path = path;
        self
    }

    pub fn with_spectral_floor(mut self, floor: f64) -> Self {
        self.spectral_floor = Some(floor);
        self
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }

    /// The same problem with the path traversed backwards over
    /// `[omega.t_min, omega.t_max]`.
    pub fn reversed_path(&self, omega: &Rectangle) -> Self {
        let c = omega.t_min + omega.t_max;
        let (offset, scale) = self.reparametrization.unwrap_or((0.0, 1.0));
        let composed = (offset + scale * c, -scale);
        let mut out = self.clone();
        out.reparametrization = if composed == (0.0, 1.0) { None } else { Some(composed) };
        out
    }

    pub fn path_parameter(&self, t: f64) -> f64 {
        match self.reparametrization {
            Some((offset, scale)) => offset + scale * t,
            None => t,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.p.is_constant() && self.q.is_constant() && self.s.is_constant() && self.c0.is_constant()
    }

    /// `C_t(x)` (real part of the perturbation, without `is·Id`).
    pub fn path_coefficient(&self, x: f64, t: f64) -> RMat {
        let t = self.path_parameter(t);
        let c0 = self.c0.eval(x);
        let id = RMat::identity(self.n, self.n);
        match self.path {
            PathKind::Shift => c0 + id * (t * self.perturbation_shift),
            PathKind::Fade => c0 * (1.0 - t) + id * (t * self.perturbation_shift),
        }
    }

    /// `S(x) + C_t(x)` as a real matrix.
    pub fn zeroth_order_real(&self, x: f64, t: f64) -> RMat {
        self.s.eval(x) + self.path_coefficient(x, t)
    }

    /// `S(x) + C_z(x)` with `z = t + is`.
    pub fn zeroth_order(&self, x: f64, z: Complex64) -> CMat {
        let mut m = crate::linalg::to_complex(&self.zeroth_order_real(x, z.re));
        for i in 0..self.n {
            m[(i, i)] += Complex64::new(0.0, z.im);
        }
        m
    }

    pub fn validation_grid(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.length / (VALIDATION_POINTS - 1) as f64;
        (0..VALIDATION_POINTS).map(move |i| i as f64 * step)
    }

    /// Validates and returns the report, or an [`Error::Invalid`] listing
    /// every violated invariant.
    pub fn check(&self) -> Result<ValidationReport> {
        let report = validate(self);
        if report.is_valid() {
            Ok(report)
        } else {
            Err(Error::Invalid(report.violations))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// `sup_x ‖S(x)‖₂ + ‖C₀(x)‖₂ + K` over the validation grid.
    pub c_sup: f64,
    pub p_positive_definite: bool,
    /// Smallest eigenvalue of `P(x)` over the validation grid (symmetric part).
    pub p_min_eigenvalue: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_symmetric(m: &RMat) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut violations = Vec::new();
    let n = spec.n;
    if n == 0 {
        violations.push("dimension N must be ≥ 1".to_string());
    }
    if !(spec.length > 0.0 && spec.length.is_finite()) {
        violations.push(format!("length ℓ must be positive and finite, got {}", spec.length));
    }
    if !(spec.perturbation_shift >= 0.0 && spec.perturbation_shift.is_finite()) {
        violations.push(format!("perturbation shift K must be ≥ 0, got {}", spec.perturbation_shift));
    }
    if let Some(f) = spec.spectral_floor {
        if !(f >= 0.0 && f.is_finite()) {
            violations.push(format!("spectral floor must be ≥ 0, got {f}"));
        }
    }
    let length = if spec.length > 0.0 { spec.length } else { 1.0 };
    for (name, field) in [("P", &spec.p), ("Q", &spec.q), ("S", &spec.s), ("C0", &spec.c0)] {
        violations.extend(field.structural_problems(name, n, length));
    }
    if spec.boundary.r0.shape() != (2 * n, 2 * n) || spec.boundary.r1.shape() != (2 * n, 2 * n) {
        violations.push(format!("boundary matrices R0, R1 must be {}×{}", 2 * n, 2 * n));
    }
    if spec.boundary.r0.iter().chain(spec.boundary.r1.iter()).any(|v| !v.is_finite()) {
        violations.push("boundary matrices contain non-finite entries".to_string());
    }
    if !violations.is_empty() || n == 0 {
        return ValidationReport {
            violations,
            c_sup: f64::NAN,
            p_positive_definite: false,
            p_min_eigenvalue: f64::NAN,
        };
    }

    let mut c_sup: f64 = 0.0;
    let mut p_min_eigenvalue = f64::INFINITY;
    let mut seen = std::collections::BTreeSet::new();
    let mut flag = |violations: &mut Vec<String>, key: &'static str, msg: String| {
        if seen.insert(key) {
            violations.push(msg);
        }
    };
    for x in spec.validation_grid() {
        let p = spec.p.eval(x);
        let q = spec.q.eval(x);
        let s = spec.s.eval(x);
        let c0 = spec.c0.eval(x);
        if [&p, &q, &s, &c0].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            flag(&mut violations, "finite", format!("non-finite coefficient value at x = {x}"));
            continue;
        }
        if !is_symmetric(&p) {
            flag(&mut violations, "psym", format!("P not symmetric at x = {x}"));
        }
        if !is_symmetric(&s) {
            flag(&mut violations, "ssym", format!("S not symmetric at x = {x}"));
        }
        let sv = p.clone().svd(false, false).singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smax > 0.0) || smin <= 1e-13 * smax {
            flag(&mut violations, "pinv", format!("P not invertible at x = {x}"));
        }
        let sym = (&p + p.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        p_min_eigenvalue = p_min_eigenvalue.min(min_eig);
        c_sup = c_sup.max(spectral_norm(&s) + spectral_norm(&c0));
    }
    c_sup += spec.perturbation_shift;
    ValidationReport {
        violations,
        c_sup,
        p_positive_definite: p_min_eigenvalue > 0.0,
        p_min_eigenvalue,
    }
}

/// Half-height `M` of the strip so that no spectrum of the complexified
/// operator meets the lines `s = ±M`.
pub fn default_strip_height(spec: &ProblemSpec) -> f64 {
    let c_sup = validate(spec).c_sup;
    let c = if c_sup.is_finite() { c_sup } else { 0.0 };
    STRIP_SAFETY_FACTOR * c.max(STRIP_FLOOR)
}

/// Convenience constructor for a dense row-major matrix.
pub fn matrix(rows: usize, cols: usize, data: &[f64]) -> RMat {
    DMatrix::from_row_slice(rows, cols, data)
}
