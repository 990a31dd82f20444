mod common;

use std::f64::consts::PI;

use blochhom::bloch::{
    dispersion_diagram, find_band_gaps, gamma_x_m_gamma, uniform_1d, Operator, StiffnessRule, ORTHONORMALITY_TOL,
};
use blochhom::linalg::{dot, matvec};
use blochhom::medium::{build_medium, MediumSpec};
use common::{transfer_matrix_omega_sq, two_phase_layers, Layer};
use faer::c64;
use proptest::prelude::*;

fn smooth_1d() -> Operator {
    let m = build_medium(MediumSpec::two_phase_1d().with_smoothing(0.05)).unwrap();
    Operator::new(&m, 32, StiffnessRule::Auto).unwrap()
}

fn disk(n: usize, rule: StiffnessRule) -> Operator {
    let m = build_medium(MediumSpec::disk_2d()).unwrap();
    Operator::new(&m, n, rule).unwrap()
}

#[test]
fn two_phase_edges_match_transfer_matrix() {
    let m = build_medium(MediumSpec::two_phase_1d()).unwrap();
    let op = Operator::new(&m, 64, StiffnessRule::Auto).unwrap();
    let (a, b) = two_phase_layers();
    for k in [0.0, PI] {
        let oracle = transfer_matrix_omega_sq(a, b, k, 6);
        let sol = op.solve([k, 0.0], 6).unwrap();
        for (w, o) in sol.omega_sq.iter().zip(&oracle) {
            let err = if *o == 0.0 { w.abs() } else { (w - o).abs() / o };
            assert!(err < 1e-4, "k = {k}: {w} vs {o}");
        }
    }
}

#[test]
fn unequal_layers_match_transfer_matrix_inside_the_zone() {
    let spec: MediumSpec = serde_json::from_str(
        r#"{"d":1,"background":{"G":2.0,"rho":1.0},
            "inclusions":[{"shape":"interval","center":[0.1],"radius":0.15,"G":5.0,"rho":9.0}]}"#,
    )
    .unwrap();
    let op = Operator::new(&build_medium(spec).unwrap(), 64, StiffnessRule::Auto).unwrap();
    let a = Layer { g: 2.0, rho: 1.0, len: 0.7 };
    let b = Layer { g: 5.0, rho: 9.0, len: 0.3 };
    // Away from the zone edges every root of half_trace = cos k is simple.
    let k = 1.3;
    let oracle = transfer_matrix_omega_sq(a, b, k, 4);
    let sol = op.solve([k, 0.0], 4).unwrap();
    for (w, o) in sol.omega_sq.iter().zip(&oracle) {
        assert!((w - o).abs() / o < 1e-4, "{w} vs {o}");
    }
}

#[test]
fn inverse_rule_converges_faster_on_sharp_layers() {
    let m = build_medium(MediumSpec::two_phase_1d()).unwrap();
    let (a, b) = two_phase_layers();
    let oracle = transfer_matrix_omega_sq(a, b, PI, 3);
    let err = |rule| {
        let op = Operator::new(&m, 32, rule).unwrap();
        let w = op.solve([PI, 0.0], 3).unwrap().omega_sq;
        w.iter().zip(&oracle).map(|(x, o)| (x - o).abs() / o).fold(0.0, f64::max)
    };
    assert!(err(StiffnessRule::Inverse) < 0.1 * err(StiffnessRule::Laurent));
}

#[test]
fn laurent_eigenvalues_do_not_increase_with_cutoff() {
    let ks = [[0.0, 0.0], [PI, 0.0], [1.0, 2.0]];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for n in 3..=7 {
        let op = disk(n, StiffnessRule::Laurent);
        let now: Vec<Vec<f64>> = ks.iter().map(|&k| op.solve(k, 8).unwrap().omega_sq).collect();
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&now) {
                for (x, y) in a.iter().zip(b) {
                    assert!(*y <= x + 1e-9 * x.abs().max(1.0), "N = {n}: {y} > {x}");
                }
            }
        }
        prev = Some(now);
    }
}

#[test]
fn disk_gaps_are_resolved_and_stable_in_cutoff() {
    // The first two gaps of the contrast-6/20 disk lattice, checked against an
    // independent finite-difference eigensolver at Gamma, X and M.
    let gaps: Vec<_> = [8usize, 10]
        .iter()
        .map(|&n| find_band_gaps(&dispersion_diagram(&disk(n, StiffnessRule::Auto), &gamma_x_m_gamma(8), 8).unwrap()))
        .collect();
    for g in &gaps {
        assert_eq!(g[0].lower_branch, 0);
        assert_eq!(g[1].lower_branch, 2);
        assert!((g[0].lo - 1.73).abs() < 0.1 && (g[0].hi - 9.84).abs() < 0.3, "{:?}", g[0]);
        assert!((g[1].lo - 13.48).abs() < 0.4 && (g[1].hi - 22.27).abs() < 0.6, "{:?}", g[1]);
    }
    assert!((gaps[0][0].hi - gaps[1][0].hi).abs() / gaps[1][0].hi < 0.02);
}

#[test]
fn homogeneous_lattice_has_no_gaps() {
    let m = build_medium(MediumSpec::homogeneous(2, 1.0, 1.0)).unwrap();
    let op = Operator::new(&m, 3, StiffnessRule::Auto).unwrap();
    let d = dispersion_diagram(&op, &gamma_x_m_gamma(10), 10).unwrap();
    assert!(find_band_gaps(&d).is_empty());
}

#[test]
fn samples_outside_the_zone_are_rejected() {
    let op = smooth_1d();
    assert!(dispersion_diagram(&op, &[[3.5, 0.0]], 2).is_err());
    assert!(dispersion_diagram(&op, &uniform_1d(4), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solves_are_mass_orthonormal(k1 in -PI..PI, k2 in -PI..PI) {
        let op = disk(4, StiffnessRule::Auto);
        let sol = op.solve([k1, k2], 12).unwrap();
        prop_assert!(sol.orthonormality <= ORTHONORMALITY_TOL);
        let s = op.solve([k1, 0.0], 6).unwrap();
        prop_assert!(s.orthonormality <= ORTHONORMALITY_TOL);
    }

    #[test]
    fn reciprocal_shift_leaves_low_branches_unchanged(k in -PI..PI) {
        let op = smooth_1d();
        let a = op.solve([k, 0.0], 4).unwrap().omega_sq;
        let b = op.solve([k + 2.0 * PI, 0.0], 4).unwrap().omega_sq;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }

    #[test]
    fn time_reversal_symmetry(k1 in -PI..PI, k2 in -PI..PI) {
        let op = disk(4, StiffnessRule::Auto);
        let a = op.solve([k1, k2], 8).unwrap().omega_sq;
        let b = op.solve([-k1, -k2], 8).unwrap().omega_sq;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn discrete_parseval(
        re in proptest::collection::vec(-1.0f64..1.0, 49),
        im in proptest::collection::vec(-1.0f64..1.0, 49),
        k1 in -PI..PI,
    ) {
        let op = disk(3, StiffnessRule::Auto);
        let psi: Vec<c64> = re.iter().zip(&im).map(|(a, b)| c64::new(*a, *b)).collect();
        let sol = op.solve([k1, 0.5], op.len()).unwrap();
        let mpsi = matvec(&op.mass, &psi);
        let total = dot(&psi, &mpsi).re;
        let sum: f64 = (0..op.len()).map(|m| dot(&sol.vector(m), &mpsi).norm_sqr()).sum();
        prop_assert!((sum - total).abs() <= 1e-10 * total);
    }
}
