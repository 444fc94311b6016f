//! Acceptance suite: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use degree_index::degree::{
    default_rectangle, degree_index_with, winding, DegreeOptions, DegreeResult, WindingOptions,
};
use degree_index::fundamental::DEFAULT_STEPS_PER_UNIT;
use degree_index::linalg::{Polar, RMat};
use degree_index::morse::{local_degree_at, morse_via_degree, scan_conjugate_points, GDeterminant, MorseOptions};
use degree_index::oracle::{default_nodes, morse_index, morse_report, spectral_flow, FlowOptions};
use degree_index::planar::{nilpotent_invariance_check, PlanarConstantProblem};
use degree_index::problem::{matrix, PathKind};
use degree_index::turing::{conjugate_sets, count_negative_eigenvalues, degree_equals_negative_count, turing_check};
use degree_index::{ProblemSpec, Rectangle};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    ensure!(
        elapsed.as_secs_f64() < limit_s,
        "runtime {:.1}s exceeds {limit_s}s",
        elapsed.as_secs_f64()
    );
    Ok(String::new())
}

// ---------------------------------------------------------------------------
// test-side oracles

/// Eigenvalues of a small real matrix.
fn eigenvalues(m: &RMat) -> Vec<Complex64> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Spectrum of `−P u″ + C u` (constant, Dirichlet on `[0, ℓ]`) restricted to the
/// modes `sin(kπx/ℓ)` that can have `Re λ < bound`: returns the Morse count and
/// the smallest `|Re λ|` over those modes.
fn modal_spectrum(p: &RMat, c: &RMat, length: f64) -> (usize, f64) {
    let p_min = nalgebra::SymmetricEigen::new((p + p.transpose()) * 0.5)
        .eigenvalues
        .min();
    let c_norm = c.clone().svd(false, false).singular_values.max();
    let mut count = 0;
    let mut gap = f64::INFINITY;
    for k in 1.. {
        let mu = (k as f64 * PI / length).powi(2);
        if mu * p_min > c_norm + 10.0 {
            break;
        }
        for l in eigenvalues(&(p * mu + c)) {
            count += usize::from(l.re < 0.0);
            gap = gap.min(l.re.abs());
        }
    }
    (count, gap)
}

/// Winding number of `f` around the boundary of `omega` from `n` uniform
/// samples per edge, summing principal argument increments.
fn brute_force_winding(f: impl Fn(Complex64) -> Complex64, omega: &Rectangle, n: usize) -> i64 {
    let corners = [
        Complex64::new(omega.t_min, omega.s_min),
        Complex64::new(omega.t_max, omega.s_min),
        Complex64::new(omega.t_max, omega.s_max),
        Complex64::new(omega.t_min, omega.s_max),
    ];
    let mut total = 0.0;
    let mut prev = f(corners[0]);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for i in 1..=n {
            let z = a + (b - a) * (i as f64 / n as f64);
            let w = f(z);
            total += (w / prev).arg();
            prev = w;
        }
    }
    (total / (2.0 * PI)).round() as i64
}

fn polar_map(f: impl Fn(Complex64) -> Complex64 + Sync) -> impl Fn(f64, f64) -> degree_index::Result<Polar> + Sync {
    move |t, s| Ok(Polar::from_complex(f(Complex64::new(t, s))))
}

fn wind(f: impl Fn(Complex64) -> Complex64 + Sync, omega: &Rectangle, samples: usize) -> Result<DegreeResult, String> {
    let opts = WindingOptions {
        initial_samples: samples,
        ..WindingOptions::default()
    };
    winding(&polar_map(f), omega, &opts).map_err(err)
}

fn square() -> Rectangle {
    Rectangle::new(-1.0, 1.0, -1.0, 1.0).unwrap()
}

// ---------------------------------------------------------------------------
// criteria

fn planar_example() -> Outcome {
    let start = Instant::now();
    let p = PlanarConstantProblem::new(0.5, [[-1.8, 4.0], [-1.05, 2.0]], 4.0);
    let spec = p.to_spec();
    // P⁻¹L with L = −V and P = diag(1, 1/2)
    let pinv_l = [[1.8, -4.0], [2.1, -4.0]];
    let l = spec.c0.eval(0.0);
    let pm = spec.p.eval(0.0);
    for i in 0..2 {
        for j in 0..2 {
            ensure!((l[(i, j)] / pm[(i, i)] - pinv_l[i][j]).abs() < 1e-14, "P⁻¹L mismatch at ({i},{j})");
        }
    }
    let (lp, _) = p.lambda_pm(0.0);
    ensure!((lp - Complex64::new(-1.0, 0.0)).norm() < 1e-12, "λ₊(0) = {lp}, expected −1");
    let g = GDeterminant::new(&spec, 0.0, DEFAULT_STEPS_PER_UNIT);
    let degree = local_degree_at(&g, PI, 0.05, 0.05, &WindingOptions::default()).map_err(err)?;
    ensure!(degree == -1, "local degree at (0, π) is {degree}, expected −1");
    within(start.elapsed(), 5.0)?;
    Ok(format!("local degree −1 at (0, π), λ₊(0) = {:.15}, {:.2}s", lp.re, start.elapsed().as_secs_f64()))
}

fn nilpotent_coupling() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::constant(RMat::identity(2, 2), matrix(2, 2, &[-4.0, -1.0, 0.0, -9.0]), 4.0);
    let m = 1600;
    let oracle = morse_report(&spec, 0.0, m, true).map_err(err)?;
    ensure!(oracle.index == 5, "oracle Morse index {} at m = {m}", oracle.index);
    ensure!(oracle.max_imag_negative < 1e-6, "non-real negative eigenvalue, |Im| = {:e}", oracle.max_imag_negative);
    // −u″ − Vu: eigenvalues k²π²/16 − 4 and k²π²/16 − 9
    let mut exact: Vec<f64> = (1..4u32)
        .flat_map(|k| [(k * k) as f64 * PI * PI / 16.0 - 4.0, (k * k) as f64 * PI * PI / 16.0 - 9.0])
        .filter(|l| *l < 0.0)
        .collect();
    exact.sort_by(f64::total_cmp);
    let mut found: Vec<f64> = oracle.negative.iter().map(|l| l.re).collect();
    found.sort_by(f64::total_cmp);
    for (a, b) in found.iter().zip(&exact) {
        ensure!((a - b).abs() < 1e-3, "eigenvalue {a} vs {b}");
    }
    ensure!(found.windows(2).all(|w| w[1] - w[0] > 1e-3), "repeated negative eigenvalue: {found:?}");
    let points = scan_conjugate_points(&spec, 4.0, 4096).map_err(err)?;
    let expected = [(PI / 3.0, 1), (PI / 2.0, 1), (2.0 * PI / 3.0, 1), (PI, 2)];
    ensure!(points.len() == 4, "found {} conjugate points", points.len());
    for (c, (x, mult)) in points.iter().zip(expected) {
        ensure!((c.x0 - x).abs() < 1e-8, "conjugate point {} vs {x}", c.x0);
        ensure!(c.multiplicity == mult, "multiplicity {} at {}", c.multiplicity, c.x0);
    }
    let with: usize = points.iter().map(|c| c.multiplicity).sum();
    ensure!(with == 5, "count with multiplicity {with}");
    let degree = morse_via_degree(&spec, &MorseOptions::default()).map_err(err)?.total_degree;
    ensure!(degree == 5, "degree over V = {degree}");
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "oracle 5 (m = {m}), conjugate points 4/5, degree 5, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn turing_pattern() -> Outcome {
    let start = Instant::now();
    let p = PlanarConstantProblem::new(0.5, [[-1.0, -2.0], [49.0 / 128.0, 0.75]], 16.0);
    let report = turing_check(&p);
    ensure!(report.all_pass() && report.delta1_positive && report.m_frak_positive, "Turing conditions: {report:?}");
    let (lp, lm) = p.lambda_pm(0.0);
    let (ep, em) = ((2f64.sqrt() - 2.0) / 8.0, -(2f64.sqrt() + 2.0) / 8.0);
    ensure!((lp - ep).norm() < 1e-12 && (lm - em).norm() < 1e-12, "λ± = {lp}, {lm}");
    let sets = conjugate_sets(&p).map_err(err)?;
    ensure!(
        (sets.c1.len(), sets.c2.len(), sets.c3.len()) == (3, 1, 0),
        "|C1|, |C2|, |C3| = {}, {}, {}",
        sets.c1.len(),
        sets.c2.len(),
        sets.c3.len()
    );
    let count = count_negative_eigenvalues(&p).map_err(err)?.count;
    ensure!(count == 2, "negative eigenvalues {count}");
    let identity = degree_equals_negative_count(&p, 1600, &MorseOptions::default()).map_err(err)?;
    ensure!(identity.degree == 2 && identity.oracle == 2, "degree {}, oracle {}", identity.degree, identity.oracle);
    ensure!(sets.count_without_multiplicity == 4, "distinct conjugate points {}", sets.count_without_multiplicity);
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "ι_deg = 2 = #neg = oracle; 4 conjugate points ≠ 2 eigenvalues; {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

fn scalar_family() -> Outcome {
    let mut rows = Vec::new();
    for c in [0.5, 5.0, 12.0, 20.0] {
        let spec = ProblemSpec::constant(matrix(1, 1, &[1.0]), matrix(1, 1, &[-c]), PI);
        let analytic = (1..).take_while(|k| ((k * k) as f64) < c).count();
        let degree = morse_via_degree(&spec, &MorseOptions::default()).map_err(err)?.total_degree;
        let oracle = morse_index(&spec, 0.0, default_nodes(&spec)).map_err(err)?;
        ensure!(
            degree == analytic as i64 && oracle == analytic,
            "c = {c}: analytic {analytic}, degree {degree}, oracle {oracle}"
        );
        rows.push(format!("c={c}:{analytic}"));
    }
    Ok(rows.join(" "))
}

fn random_paths() -> Outcome {
    const PATHS: usize = 50;
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let mut accepted = 0;
    let mut attempts = 0;
    let mut nonzero = 0;
    while accepted < PATHS {
        attempts += 1;
        ensure!(attempts < 20 * PATHS, "too few admissible samples ({accepted} of {attempts})");
        let n = rng.gen_range(1..=2);
        let length = rng.gen_range(1.0..3.0);
        let mut p = RMat::zeros(n, n);
        for i in 0..n {
            p[(i, i)] = rng.gen_range(0.5..2.0);
        }
        if n == 2 {
            let b = rng.gen_range(-0.3..0.3);
            p[(0, 1)] = b;
            p[(1, 0)] = b;
        }
        let c0 = RMat::from_fn(n, n, |i, j| {
            if i == j {
                rng.gen_range(-14.0..2.0)
            } else {
                rng.gen_range(-4.0..4.0)
            }
        });
        let path = if rng.gen_bool(0.5) { PathKind::Shift } else { PathKind::Fade };
        let spec = ProblemSpec::constant(p.clone(), c0, length)
            .with_shift(rng.gen_range(4.0..30.0))
            .with_path(path);
        let omega = default_rectangle(&spec);
        let (m0, gap0) = modal_spectrum(&p, &spec.zeroth_order_real(0.0, 0.0), length);
        let (m1, gap1) = modal_spectrum(&p, &spec.zeroth_order_real(0.0, 1.0), length);
        if gap0.min(gap1) < 1.0 {
            continue;
        }
        let flow = FlowOptions::for_spec(&spec);
        let ledger = spectral_flow(&spec, &omega, &flow).map_err(|e| format!("path {accepted}: {e}"))?;
        let start = morse_index(&spec, omega.t_min, flow.m).map_err(err)?;
        let end = morse_index(&spec, omega.t_max, flow.m).map_err(err)?;
        ensure!(
            start == m0 && end == m1,
            "path {accepted}: oracle endpoint indices {start}, {end} vs modal {m0}, {m1}"
        );
        ensure!(
            ledger.net == start as i64 - end as i64,
            "path {accepted}: sf {} vs m⁻ {start} − {end}",
            ledger.net
        );
        let reversed = spectral_flow(&spec.reversed_path(&omega), &omega, &flow).map_err(err)?;
        ensure!(reversed.net == -ledger.net, "path {accepted}: reversed sf {} vs {}", reversed.net, ledger.net);
        let opts = DegreeOptions {
            localization: None,
            ..DegreeOptions::default()
        };
        let degree = degree_index_with(&spec, &omega, &opts).map_err(err)?.degree;
        ensure!(degree == ledger.net, "path {accepted}: degree {degree} vs sf {}", ledger.net);
        nonzero += usize::from(ledger.net != 0);
        accepted += 1;
    }
    Ok(format!("{accepted} paths ({nonzero} with sf ≠ 0), {attempts} drawn"))
}

fn degree_engine() -> Outcome {
    let omega = square();
    let d = wind(|z| z, &omega, 64)?.degree;
    ensure!(d == 1, "deg z = {d}");
    let d = wind(|z| z.conj(), &omega, 64)?.degree;
    ensure!(d == -1, "deg z̄ = {d}");
    let (a, b) = (Complex64::new(0.3, 0.2), Complex64::new(-0.4, -0.5));
    let two = move |z: Complex64| (z - a) * (z - b);
    let d = wind(two, &omega, 64)?.degree;
    let brute = brute_force_winding(two, &omega, 100_000);
    ensure!(d == 2 && brute == 2, "deg (z−a)(z−b) = {d}, brute force {brute}");
    let d = wind(move |z| two(z) * z.exp(), &omega, 64)?.degree;
    ensure!(d == 2, "deg e^z (z−a)(z−b) = {d}");

    let mut rng = StdRng::seed_from_u64(0x5eed_0006);
    for case in 0..40 {
        let roots: Vec<Complex64> = (0..rng.gen_range(1..5))
            .map(|_| Complex64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
            .collect();
        let conj: Vec<bool> = roots.iter().map(|_| rng.gen_bool(0.3)).collect();
        let f = |z: Complex64| {
            roots
                .iter()
                .zip(&conj)
                .map(|(r, &c)| if c { (z - r).conj() } else { z - r })
                .product::<Complex64>()
        };
        let split = rng.gen_range(-0.8..0.8);
        let left = Rectangle::new(-1.0, split, -1.0, 1.0).unwrap();
        let right = Rectangle::new(split, 1.0, -1.0, 1.0).unwrap();
        let clear = |r: &Complex64| {
            (r.re.abs() - 1.0).abs() > 0.02 && (r.im.abs() - 1.0).abs() > 0.02 && (r.re - split).abs() > 0.02
        };
        if !roots.iter().all(clear) {
            continue;
        }
        let expected: i64 = roots
            .iter()
            .zip(&conj)
            .filter(|(r, _)| r.re.abs() < 1.0 && r.im.abs() < 1.0)
            .map(|(_, &c)| if c { -1 } else { 1 })
            .sum();
        let whole = wind(f, &omega, 64)?.degree;
        let halves = wind(f, &left, 64)?.degree + wind(f, &right, 64)?.degree;
        ensure!(whole == expected, "case {case}: degree {whole}, expected {expected}");
        ensure!(halves == whole, "case {case}: additivity {halves} vs {whole}");
        for samples in [16, 128, 256] {
            let refined = wind(f, &omega, samples)?.degree;
            ensure!(refined == whole, "case {case}: {samples} samples give {refined} vs {whole}");
        }
    }

    // determinant map: −u″ − 12u on [0, 1] shifted by 20t, and a far-from-critical problem
    let spec = ProblemSpec::constant(matrix(1, 1, &[1.0]), matrix(1, 1, &[-12.0]), 1.0).with_shift(20.0);
    let omega = default_rectangle(&spec);
    let degree = degree_index_with(&spec, &omega, &DegreeOptions::default()).map_err(err)?;
    let sf = spectral_flow(&spec, &omega, &FlowOptions::for_spec(&spec)).map_err(err)?.net;
    ensure!(degree.degree == 1 && sf == 1, "−u″ − 12u: degree {}, sf {sf}", degree.degree);
    let cell_sum: i64 = degree.zero_cells.iter().map(|c| c.degree).sum();
    ensure!(cell_sum == degree.degree, "zero cells sum to {cell_sum}");
    let stiff = ProblemSpec::constant(matrix(1, 1, &[1.0]), matrix(1, 1, &[50.0]), 1.0).with_shift(5.0);
    let d = degree_index_with(&stiff, &default_rectangle(&stiff), &DegreeOptions::default())
        .map_err(err)?
        .degree;
    ensure!(d == 0, "positive problem has degree {d}");
    Ok("z, z̄, (z−a)(z−b), e^z·f, 40 additivity/refinement cases, ρ examples".into())
}

fn nilpotent_invariance() -> Outcome {
    let n = matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let r = nilpotent_invariance_check(-12.0, &n, PI).map_err(err)?;
    ensure!(
        r.oracle_without == 6 && r.oracle_with == 6 && r.degree_without == 6 && r.degree_with == 6,
        "{r:?}"
    );
    Ok("Morse index 6 with and without N (oracle and degree)".into())
}

/// Test-side spectral data of a planar reaction–diffusion problem.
struct RdOracle {
    c1: usize,
    c2: usize,
    negative: usize,
    /// Smallest `|Re λ|` over the modal spectrum.
    gap: f64,
    /// Sorted conjugate points of both families.
    points: Vec<f64>,
}

fn rd_oracle(d: f64, v: [[f64; 2]; 2], a: f64) -> RdOracle {
    let dv = DMatrix::from_row_slice(2, 2, &[-v[0][0], -v[0][1], -v[1][0] / d, -v[1][1] / d]);
    let lambdas = eigenvalues(&dv);
    let mut ls: Vec<f64> = lambdas.iter().map(|l| l.re).collect();
    ls.sort_by(f64::total_cmp);
    let family = |l: f64| -> Vec<f64> {
        (1..).map(|k| k as f64 * PI / (-l).sqrt()).take_while(|x| *x < a).collect()
    };
    let (f1, f2) = (family(ls[0]), family(ls[1]));
    let mut points: Vec<f64> = f1.iter().chain(&f2).copied().collect();
    points.sort_by(f64::total_cmp);
    let mut negative = 0;
    let mut gap = f64::INFINITY;
    for k in 1..200 {
        let mu = (k as f64 * PI / a).powi(2);
        let m = DMatrix::from_row_slice(2, 2, &[mu - v[0][0], -v[0][1], -v[1][0], d * mu - v[1][1]]);
        for l in eigenvalues(&m) {
            negative += usize::from(l.re < 0.0);
            gap = gap.min(l.re.abs());
        }
    }
    RdOracle {
        c1: f1.len(),
        c2: f2.len(),
        negative,
        gap,
        points,
    }
}

fn random_turing() -> Outcome {
    const SAMPLES: usize = 100;
    const NODES: usize = 400;
    let mut rng = StdRng::seed_from_u64(0x5eed_0008);
    let mut accepted = 0;
    let mut attempts = 0;
    let mut histogram = [0usize; 8];
    while accepted < SAMPLES {
        attempts += 1;
        ensure!(attempts < 1000 * SAMPLES, "too few admissible samples");
        let d = rng.gen_range(0.05..0.6);
        let v = [
            [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        ];
        let a = rng.gen_range(1.0..10.0);
        let p = PlanarConstantProblem::new(d, v, a);
        let tr = v[0][0] + v[1][1];
        let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        if !(tr < 0.0 && det > 0.0 && v[1][1] + d * v[0][0] > 2.0 * (d * det).sqrt()) {
            continue;
        }
        let o = rd_oracle(d, v, a);
        // margins: spectrum away from the imaginary axis, conjugate points
        // separated from each other and from 0 and a
        if o.gap < 0.05 {
            continue;
        }
        let mut marks = vec![0.0];
        marks.extend(&o.points);
        marks.push(a);
        if o.points.len() > 12 || marks.windows(2).any(|w| w[1] - w[0] < 0.03 * a) {
            continue;
        }
        let sets = conjugate_sets(&p).map_err(err)?;
        let count = count_negative_eigenvalues(&p).map_err(err)?.count;
        ensure!(
            sets.c1.len() == o.c1 && sets.c2.len() == o.c2 && count == o.negative,
            "sample {accepted}: |C1| {} / {}, |C2| {} / {}, #neg {count} / {}",
            sets.c1.len(),
            o.c1,
            sets.c2.len(),
            o.c2,
            o.negative
        );
        ensure!(o.c1 as i64 - o.c2 as i64 == o.negative as i64, "sample {accepted}: |C1| − |C2| ≠ #neg");
        let spec = p.to_spec();
        let degree = morse_via_degree(&spec, &MorseOptions::default())
            .map_err(|e| format!("sample {accepted} (d = {d}, V = {v:?}, a = {a}): {e}"))?
            .total_degree;
        ensure!(degree == o.negative as i64, "sample {accepted}: degree {degree} vs {}", o.negative);
        let oracle = morse_report(&spec, 0.0, NODES, true).map_err(err)?;
        ensure!(oracle.index == o.negative, "sample {accepted}: oracle {} vs {}", oracle.index, o.negative);
        ensure!(
            oracle.max_imag_negative < 1e-6,
            "sample {accepted}: non-real negative eigenvalue, |Im| = {:e}",
            oracle.max_imag_negative
        );
        histogram[o.negative.min(7)] += 1;
        accepted += 1;
    }
    Ok(format!("{accepted} samples, #neg histogram {histogram:?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("planar example local degree", planar_example),
        ("nilpotent coupling counterexample", nilpotent_coupling),
        ("Turing pattern counterexample", turing_pattern),
        ("selfadjoint scalar family", scalar_family),
        ("spectral flow identities", random_paths),
        ("degree engine self-tests", degree_engine),
        ("nilpotent invariance", nilpotent_invariance),
        ("randomized Turing family", random_turing),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {}. {name}: {detail} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {why} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
