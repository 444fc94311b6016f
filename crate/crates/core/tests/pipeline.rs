//! End-to-end runs on the bundled problem files.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;

use degree_index::boundary::{dirichlet_self_test, write_samples_csv, RhoEvaluator};
use degree_index::degree::{degree_index_with, DegreeOptions};
use degree_index::morse::{morse_via_degree, MorseOptions};
use degree_index::oracle::{spectral_flow, verify_sf_morse, FlowOptions};
use degree_index::planar::{modal_morse_count, PlanarConstantProblem};
use degree_index::problem::{load_problem, parse_problem, write_problem, ProblemFile};
use degree_index::turing::conjugate_sets;
use degree_index::Error;

fn fixture(name: &str) -> ProblemFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name);
    load_problem(path).unwrap()
}

#[test]
fn fixtures_round_trip_through_toml() {
    for name in [
        "planar_example.toml",
        "nilpotent_coupling.toml",
        "turing_pattern.toml",
        "scalar_c0_5.toml",
        "scalar_c5.toml",
        "scalar_c12.toml",
        "scalar_c20.toml",
    ] {
        let file = fixture(name);
        let text = write_problem(&file.spec, file.rectangle.as_ref());
        assert_eq!(parse_problem(&text).unwrap(), file, "{name}");
    }
}

#[test]
fn planar_fixtures_match_closed_forms() {
    let example = PlanarConstantProblem::from_spec(&fixture("planar_example.toml").spec).unwrap();
    assert_eq!(example.d, 0.5);
    assert!((example.lambda_pm(0.0).0 - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    let turing = PlanarConstantProblem::from_spec(&fixture("turing_pattern.toml").spec).unwrap();
    let sets = conjugate_sets(&turing).unwrap();
    assert_eq!((sets.c1.len(), sets.c2.len()), (3, 1));
}

#[test]
fn scalar_fixtures_degree_matches_flow() {
    for (name, expected) in [
        ("scalar_c0_5.toml", 0),
        ("scalar_c5.toml", 2),
        ("scalar_c12.toml", 3),
        ("scalar_c20.toml", 4),
    ] {
        let file = fixture(name);
        let omega = file.rectangle.unwrap();
        let opts = DegreeOptions::default();
        let degree = degree_index_with(&file.spec, &omega, &opts).unwrap();
        assert_eq!(degree.degree, expected, "{name}");
        assert_eq!(degree.zero_cells.iter().map(|c| c.degree).sum::<i64>(), expected);
        // zeros sit on s = 0 at t = (c − k²)/25
        for cell in &degree.zero_cells {
            assert!(cell.cell.s_min <= 0.0 && cell.cell.s_max >= 0.0);
        }
        let report = verify_sf_morse(&file.spec, &omega, 256, &FlowOptions::for_spec(&file.spec)).unwrap();
        assert_eq!(report.spectral_flow, expected);
        assert_eq!(modal_morse_count(&file.spec, 0.0).unwrap().index, expected as usize);
    }
}

#[test]
fn dirichlet_fast_path_agrees_with_full_determinant() {
    let spec = fixture("nilpotent_coupling.toml").spec;
    let zs: Vec<Complex64> = (0..8).map(|k| Complex64::new(0.1 * k as f64, 2.0 - 0.5 * k as f64)).collect();
    assert!(dirichlet_self_test(&spec, &zs, 1e-9).unwrap() < 1e-9);
    let ev = RhoEvaluator::new(&spec);
    let samples: Vec<_> = zs.iter().map(|&z| ev.sample(z).unwrap()).collect();
    let mut csv = Vec::new();
    write_samples_csv(&samples, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("z_re,z_im,rho_re,rho_im,log_abs_rho,arg_rho\n"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn morse_wrapper_reports_conjugate_points() {
    let spec = fixture("nilpotent_coupling.toml").spec;
    let report = morse_via_degree(&spec, &MorseOptions::default()).unwrap();
    assert_eq!(report.total_degree, 5);
    assert_eq!(report.count_without_multiplicity(), 4);
    assert_eq!(report.count_with_multiplicity(), 5);
    let last = report.conjugate_points.last().unwrap();
    assert!((last.x0 - PI).abs() < 1e-8);
    assert_eq!(last.local_degree, 2);
}

#[test]
fn conjugate_point_at_endpoint_is_rejected() {
    let mut spec = fixture("nilpotent_coupling.toml").spec;
    spec.length = PI;
    assert!(matches!(
        morse_via_degree(&spec, &MorseOptions::default()),
        Err(Error::ConjugateAtEndpoint { .. })
    ));
}

#[test]
fn reversed_flow_changes_sign() {
    let file = fixture("scalar_c12.toml");
    let omega = file.rectangle.unwrap();
    let opts = FlowOptions::for_spec(&file.spec);
    let forward = spectral_flow(&file.spec, &omega, &opts).unwrap();
    let backward = spectral_flow(&file.spec.reversed_path(&omega), &omega, &opts).unwrap();
    assert_eq!(forward.net, 3);
    assert_eq!(backward.net, -3);
    assert_eq!(forward.det_winding, Some(3));
}
