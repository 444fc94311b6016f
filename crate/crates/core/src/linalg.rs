//! Small dense complex linear algebra: log-determinants with explicit
//! pivot parity, a banded LU for large sparse-banded determinants, and a
//! scaling-and-squaring matrix exponential.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A complex number held as `exp(log_abs + i·arg)`, so that determinants of
/// rapidly growing fundamental solutions never overflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub log_abs: f64,
    /// Principal argument in (−π, π].
    pub arg: f64,
}

impl Polar {
    pub const ZERO: Polar = Polar {
        log_abs: f64::NEG_INFINITY,
        arg: 0.0,
    };

    pub fn from_complex(z: Complex64) -> Self {
        Polar {
            log_abs: z.norm().ln(),
            arg: z.arg(),
        }
    }

    pub fn to_complex(self) -> Complex64 {
        if self.log_abs == f64::NEG_INFINITY {
            return ZERO;
        }
        Complex64::from_polar(self.log_abs.exp(), self.arg)
    }

    pub fn is_zero(self) -> bool {
        self.log_abs == f64::NEG_INFINITY
    }

    pub fn mul(self, other: Polar) -> Polar {
        Polar {
            log_abs: self.log_abs + other.log_abs,
            arg: wrap_angle(self.arg + other.arg),
        }
    }

    pub fn negate(self) -> Polar {
        Polar {
            log_abs: self.log_abs,
            arg: wrap_angle(self.arg + PI),
        }
    }

    pub fn is_finite(self) -> bool {
        self.arg.is_finite() && !self.log_abs.is_nan() && self.log_abs < f64::INFINITY
    }
}

/// Maps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|v| Complex64::new(v, 0.0))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Log-determinant by LU with partial pivoting; the permutation parity is
/// tracked explicitly so the phase is deterministic.
pub fn log_det(a: &CMat) -> Polar {
    assert_eq!(a.nrows(), a.ncols(), "log_det needs a square matrix");
    let n = a.nrows();
    let mut lu = a.clone();
    let mut log_abs = 0.0;
    let mut arg = 0.0;
    let mut odd = false;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].norm();
        for r in k + 1..n {
            let v = lu[(r, k)].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return if best == 0.0 {
                Polar::ZERO
            } else {
                Polar {
                    log_abs: f64::NAN,
                    arg: f64::NAN,
                }
            };
        }
        if p != k {
            lu.swap_rows(p, k);
            odd = !odd;
        }
        let pivot = lu[(k, k)];
        log_abs += pivot.norm().ln();
        arg += pivot.arg();
        for r in k + 1..n {
            let l = lu[(r, k)] / pivot;
            if l == ZERO {
                continue;
            }
            for c in k + 1..n {
                let u = lu[(k, c)];
                lu[(r, c)] -= l * u;
            }
        }
    }
    if odd {
        arg += PI;
    }
    Polar {
        log_abs,
        arg: wrap_angle(arg),
    }
}

pub fn det(a: &CMat) -> Complex64 {
    log_det(a).to_complex()
}

/// Log-determinant of an `n × n` banded matrix with `kl` sub- and `ku`
/// super-diagonals, given entry-wise by `entry(row, col)` (queried only
/// inside the band). Unblocked band LU with partial pivoting; storage is
/// `O(n·(2kl+ku+1))`.
pub fn banded_log_det<F>(n: usize, kl: usize, ku: usize, entry: F) -> Polar
where
    F: Fn(usize, usize) -> Complex64,
{
    let ldab = 2 * kl + ku + 1;
    let off = kl + ku;
    let mut ab = vec![ZERO; n * ldab];
    let idx = |r: usize, c: usize| c * ldab + off + r - c;
    for c in 0..n {
        for r in c.saturating_sub(ku)..=(c + kl).min(n - 1) {
            ab[idx(r, c)] = entry(r, c);
        }
    }
    let mut log_abs = 0.0;
    let mut arg = 0.0;
    let mut odd = false;
    for i in 0..n {
        let last_row = (i + kl).min(n - 1);
        let last_col = (i + ku + kl).min(n - 1);
        let mut p = i;
        let mut best = ab[idx(i, i)].norm();
        for r in i + 1..=last_row {
            let v = ab[idx(r, i)].norm();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return Polar::ZERO;
        }
        if p != i {
            for c in i..=last_col {
                ab.swap(idx(i, c), idx(p, c));
            }
            odd = !odd;
        }
        let pivot = ab[idx(i, i)];
        log_abs += pivot.norm().ln();
        arg += pivot.arg();
        for r in i + 1..=last_row {
            let l = ab[idx(r, i)] / pivot;
            if l == ZERO {
                continue;
            }
            for c in i + 1..=last_col {
                let u = ab[idx(i, c)];
                ab[idx(r, c)] -= l * u;
            }
        }
    }
    if odd {
        arg += PI;
    }
    Polar {
        log_abs,
        arg: wrap_angle(arg),
    }
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|c| a.column(c).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor
/// series on the scaled matrix (‖A/2^j‖₁ ≤ 1/2).
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * Complex64::new(0.5f64.powi(squarings), 0.0);
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=40 {
        term = &term * &scaled * Complex64::new(1.0 / k as f64, 0.0);
        result += &term;
        if one_norm(&term) <= 1e-18 * one_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn spectral_norm(a: &RMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Copies an `n × n` block of `src` into `dst` at block position (`bi`, `bj`).
pub fn set_block(dst: &mut CMat, bi: usize, bj: usize, src: &CMat) {
    let n = src.nrows();
    dst.view_mut((bi * n, bj * n), (n, n)).copy_from(src);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_det_matches_direct_2x2_with_pivoting() {
        let a = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 1.0), c(3.0, 0.0), c(1.0, -1.0)]);
        let expected = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let got = det(&a);
        assert!((got - expected).norm() < 1e-14);
    }

    #[test]
    fn singular_matrix_gives_zero() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let d = log_det(&a);
        assert!(d.is_zero() || d.log_abs < -30.0);
    }

    #[test]
    fn banded_matches_dense() {
        let n = 12;
        let (kl, ku) = (3, 3);
        let entry = |r: usize, cc: usize| {
            let d = r as f64 - cc as f64;
            c((r * 7 + cc * 3) as f64 % 5.0 - 2.0 + if d == 0.0 { 0.1 } else { 0.0 }, d * 0.3)
        };
        let dense = CMat::from_fn(n, n, |r, cc| {
            if (r as isize - cc as isize) <= kl as isize && (cc as isize - r as isize) <= ku as isize {
                entry(r, cc)
            } else {
                ZERO
            }
        });
        let a = log_det(&dense);
        let b = banded_log_det(n, kl, ku, entry);
        assert!((a.log_abs - b.log_abs).abs() < 1e-10);
        assert!(wrap_angle(a.arg - b.arg).abs() < 1e-10);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let t = 2.5;
        let a = CMat::from_row_slice(2, 2, &[ZERO, c(-t, 0.0), c(t, 0.0), ZERO]);
        let e = expm(&a);
        assert!((e[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-13);
        assert!((e[(1, 0)] - c(t.sin(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn expm_of_diagonal_complex() {
        let a = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0, 1.0), c(-7.0, 0.5)]));
        let e = expm(&a);
        assert!((e[(0, 0)] - c(3.0, 1.0).exp()).norm() < 1e-12 * c(3.0, 1.0).exp().norm());
        assert!((e[(1, 1)] - c(-7.0, 0.5).exp()).norm() < 1e-15);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -10..10 {
            let a = wrap_angle(k as f64 * 1.3);
            assert!(a > -PI && a <= PI);
        }
        assert_eq!(wrap_angle(-PI), PI);
    }
}
