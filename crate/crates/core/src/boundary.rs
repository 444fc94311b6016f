//! Boundary matrix `R_z = R₀ + R₁ ψ_z(ℓ)` and the determinant map
//! `ρ(z) = det R_z`.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamental::{g_block, Shooter};
use crate::linalg::{log_det, to_complex, wrap_angle, CMat, Polar};
use crate::problem::{BoundaryCondition, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeterminantSample {
    pub z: (f64, f64),
    pub rho: (f64, f64),
    pub log_abs_rho: f64,
    pub arg_rho: f64,
}

impl DeterminantSample {
    pub fn new(z: Complex64, value: Polar) -> Self {
        let rho = value.to_complex();
        DeterminantSample {
            z: (z.re, z.im),
            rho: (rho.re, rho.im),
            log_abs_rho: value.log_abs,
            arg_rho: value.arg,
        }
    }

    pub fn polar(&self) -> Polar {
        Polar {
            log_abs: self.log_abs_rho,
            arg: self.arg_rho,
        }
    }
}

pub fn boundary_matrix_from_psi(bc: &BoundaryCondition, psi_end: &CMat) -> CMat {
    to_complex(&bc.r0) + to_complex(&bc.r1) * psi_end
}

/// Evaluates `ρ` repeatedly for one problem, reusing the propagator.
pub struct RhoEvaluator<'a> {
    shooter: Shooter<'a>,
    dirichlet: bool,
}

impl<'a> RhoEvaluator<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        Self::from_shooter(Shooter::new(spec))
    }

    pub fn from_shooter(shooter: Shooter<'a>) -> Self {
        let dirichlet = shooter.spec().boundary.is_dirichlet();
        RhoEvaluator { shooter, dirichlet }
    }

    pub fn shooter(&self) -> &Shooter<'a> {
        &self.shooter
    }

    pub fn boundary_matrix(&self, z: Complex64) -> Result<CMat> {
        let spec = self.shooter.spec();
        let psi = self.shooter.psi(z, spec.length)?;
        Ok(boundary_matrix_from_psi(&spec.boundary, &psi))
    }

    /// `ρ(z)`; for Dirichlet data via `(−1)ᴺ det G_z(ℓ)`.
    pub fn eval(&self, z: Complex64) -> Result<Polar> {
        let spec = self.shooter.spec();
        let psi = self.shooter.psi(z, spec.length)?;
        if self.dirichlet {
            let d = log_det(&g_block(&psi));
            Ok(if spec.n % 2 == 1 { d.negate() } else { d })
        } else {
            Ok(log_det(&boundary_matrix_from_psi(&spec.boundary, &psi)))
        }
    }

    /// `ρ(z)` always from the full `2N × 2N` determinant.
    pub fn eval_full(&self, z: Complex64) -> Result<Polar> {
        Ok(log_det(&self.boundary_matrix(z)?))
    }

    pub fn sample(&self, z: Complex64) -> Result<DeterminantSample> {
        Ok(DeterminantSample::new(z, self.eval(z)?))
    }
}

pub fn boundary_matrix(spec: &ProblemSpec, z: Complex64) -> Result<CMat> {
    RhoEvaluator::new(spec).boundary_matrix(z)
}

pub fn rho(spec: &ProblemSpec, z: Complex64) -> Result<DeterminantSample> {
    RhoEvaluator::new(spec).sample(z)
}

/// Relative discrepancy between two determinants held in polar form.
pub fn polar_distance(a: Polar, b: Polar) -> f64 {
    if a.is_zero() && b.is_zero() {
        return 0.0;
    }
    let scale = a.log_abs.max(b.log_abs);
    let ca = Polar {
        log_abs: a.log_abs - scale,
        arg: a.arg,
    }
    .to_complex();
    let cb = Polar {
        log_abs: b.log_abs - scale,
        arg: b.arg,
    }
    .to_complex();
    (ca - cb).norm()
}

/// Consistency self-test of the Dirichlet reduction: the largest relative
/// difference between `(−1)ᴺ det G_z(ℓ)` and `det R_z` over `zs`.
pub fn dirichlet_self_test(spec: &ProblemSpec, zs: &[Complex64], tolerance: f64) -> Result<f64> {
    if !spec.boundary.is_dirichlet() {
        return Err(Error::RequiresDirichlet);
    }
    let ev = RhoEvaluator::new(spec);
    let mut worst: f64 = 0.0;
    for &z in zs {
        worst = worst.max(polar_distance(ev.eval(z)?, ev.eval_full(z)?));
    }
    if worst > tolerance {
        return Err(Error::CheckFailed {
            check: "dirichlet-reduction",
            detail: format!("(−1)^N det G and det R differ by {worst:.3e} (tolerance {tolerance:.1e})"),
        });
    }
    Ok(worst)
}

/// Writes `z_re, z_im, rho_re, rho_im, log_abs_rho, arg_rho`.
pub fn write_samples_csv<W: Write>(samples: &[DeterminantSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "z_re,z_im,rho_re,rho_im,log_abs_rho,arg_rho")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.z.0, s.z.1, s.rho.0, s.rho.1, s.log_abs_rho, s.arg_rho
        )?;
    }
    Ok(())
}

/// Unwrapped argument increment from `a` to `b`.
pub fn arg_increment(a: Polar, b: Polar) -> f64 {
    wrap_angle(b.arg - a.arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::problem::{matrix, BoundaryPreset, CoefficientField};
    use std::f64::consts::PI;

    fn planar_example() -> ProblemSpec {
        let p = matrix(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let l = &p * matrix(2, 2, &[9.0 / 5.0, -4.0, 21.0 / 10.0, -4.0]);
        ProblemSpec::constant(p, l, PI)
    }

    #[test]
    fn dirichlet_boundary_matrix_has_reduced_form() {
        let spec = planar_example();
        let z = Complex64::new(0.3, 1.1);
        let r = boundary_matrix(&spec, z).unwrap();
        let psi = Shooter::new(&spec).psi(z, PI).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r[(i, j)], ZERO);
                let id = if i == j { 1.0 } else { 0.0 };
                assert_eq!(r[(i, j + 2)], Complex64::new(id, 0.0));
                assert_eq!(r[(i + 2, j)], psi[(i + 2, j)]);
                assert_eq!(r[(i + 2, j + 2)], psi[(i + 2, j + 2)]);
            }
        }
    }

    #[test]
    fn example_rho_vanishes_at_pi() {
        let s = rho(&planar_example(), ZERO).unwrap();
        assert!(s.log_abs_rho < (1e-12f64).ln(), "{}", s.log_abs_rho);
    }

    #[test]
    fn free_dirichlet_rho_is_minus_one() {
        let spec = ProblemSpec::constant(matrix(1, 1, &[1.0]), matrix(1, 1, &[0.0]), 1.0);
        let s = rho(&spec, ZERO).unwrap();
        assert!((s.rho.0 + 1.0).abs() < 1e-14 && s.rho.1.abs() < 1e-14);
    }

    #[test]
    fn neumann_and_periodic_with_constants_in_kernel() {
        for preset in [BoundaryPreset::Neumann, BoundaryPreset::Periodic] {
            let spec = ProblemSpec::new(CoefficientField::identity(2), 1.3)
                .with_boundary(BoundaryCondition::preset(preset, 2));
            let s = rho(&spec, ZERO).unwrap();
            assert!(s.log_abs_rho < (1e-12f64).ln(), "{preset:?}");
        }
    }

    #[test]
    fn dirichlet_reduction_self_test() {
        let spec = planar_example();
        let zs: Vec<Complex64> = (0..9).map(|k| Complex64::new(0.1 * k as f64 - 0.4, 0.7 * k as f64 - 2.0)).collect();
        let worst = dirichlet_self_test(&spec, &zs, 1e-10).unwrap();
        assert!(worst < 1e-10);
    }

    #[test]
    fn conjugation_symmetry() {
        let spec = planar_example().with_shift(2.0);
        let ev = RhoEvaluator::new(&spec);
        for (t, s) in [(0.2, 0.7), (0.9, -1.4), (0.5, 3.0)] {
            let a = ev.eval(Complex64::new(t, s)).unwrap().to_complex();
            let b = ev.eval(Complex64::new(t, -s)).unwrap().to_complex();
            assert!((a - b.conj()).norm() <= 1e-10 * a.norm().max(1.0));
        }
    }
}
