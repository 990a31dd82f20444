use std::f64::consts::PI;

use blochhom::medium::{build_medium, Coefficient, MediumSpec, Phase};
use faer::c64;
use proptest::prelude::*;

fn phase(g: f64, rho: f64) -> Phase {
    Phase { g, rho }
}

/// Cell-L2 error of the truncated Fourier synthesis of rho against pointwise values.
fn synthesis_error_1d(spec: &MediumSpec, cutoff: i64) -> f64 {
    let m = build_medium(spec.clone()).unwrap();
    let n = 2000;
    let mut err = 0.0;
    for i in 0..n {
        let x = -0.5 + (i as f64 + 0.5) / n as f64;
        let mut s = c64::new(0.0, 0.0);
        for j in -cutoff..=cutoff {
            s += m.fourier_coefficient(Coefficient::Rho, [j, 0]) * c64::cis(2.0 * PI * j as f64 * x);
        }
        err += (s.re - m.evaluate(Coefficient::Rho, &[x])).powi(2) / n as f64;
    }
    err.sqrt()
}

#[test]
fn sharp_synthesis_error_decreases_with_cutoff() {
    let spec = MediumSpec::two_phase_1d();
    let errs: Vec<f64> = [4, 16, 64].iter().map(|&n| synthesis_error_1d(&spec, n)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn smoothed_synthesis_error_decreases_geometrically() {
    let spec = MediumSpec::two_phase_1d().with_smoothing(0.05);
    let errs: Vec<f64> = [2, 4, 6, 8].iter().map(|&n| synthesis_error_1d(&spec, n)).collect();
    for w in errs.windows(2) {
        assert!(w[1] < 0.5 * w[0], "{errs:?}");
    }
}

#[test]
fn paper_disk_json_round_trips() {
    let text = r#"{"d":2,"background":{"G":1.0,"rho":1.0},"inclusions":[{"shape":"disk","center":[0,0],"radius":0.3,"G":6.0,"rho":20.0}],"smoothing":0.0}"#;
    let spec: MediumSpec = serde_json::from_str(text).unwrap();
    assert_eq!(spec, MediumSpec::disk_2d());
    let back: MediumSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
    assert!(serde_json::from_str::<MediumSpec>(&text.replace("\"smoothing\"", "\"smoothin\"")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mean_equals_area_weighted_average(
        r in 0.05f64..0.45,
        g in 0.5f64..10.0,
        rho in 0.5f64..30.0,
        s in prop_oneof![Just(0.0), 0.01f64..0.1],
    ) {
        let m = build_medium(MediumSpec::disk(phase(1.0, 2.0), r, phase(g, rho)).with_smoothing(s)).unwrap();
        let area = PI * r * r;
        prop_assert!((m.mean(Coefficient::Rho) - (2.0 * (1.0 - area) + rho * area)).abs() < 1e-12);
        prop_assert!((m.mean(Coefficient::G) - (1.0 - area + g * area)).abs() < 1e-12);
        let half = r.min(0.45);
        let l = build_medium(MediumSpec::layered(phase(1.0, 2.0), half, phase(g, rho))).unwrap();
        prop_assert!((l.mean(Coefficient::Rho) - (2.0 * (1.0 - 2.0 * half) + rho * 2.0 * half)).abs() < 1e-12);
    }

    #[test]
    fn coefficients_are_hermitian(
        cx in -0.2f64..0.2,
        cy in -0.2f64..0.2,
        r in 0.05f64..0.25,
        n1 in -12i64..12,
        n2 in -12i64..12,
    ) {
        let mut spec = MediumSpec::disk(phase(1.0, 1.0), r, phase(6.0, 20.0));
        spec.inclusions[0].center = vec![cx, cy];
        let m = build_medium(spec).unwrap();
        for which in [Coefficient::G, Coefficient::Rho, Coefficient::InvG] {
            let a = m.fourier_coefficient(which, [n1, n2]);
            let b = m.fourier_coefficient(which, [-n1, -n2]);
            prop_assert_eq!(a, b.conj());
        }
    }
}
