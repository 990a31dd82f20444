use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HOMOGENEOUS_2D: &str = r#"{
  "medium": {"d": 2, "background": {"G": 2.5, "rho": 1.0}},
  "cutoff": 3,
  "eps": [0.5],
  "fields": {"kinds": ["u0", "exact"], "half_width": 2, "n_cell": 4, "mode_count": 9}
}"#;

const LAYERED_SMALL: &str = r#"{
  "medium": {"d": 1, "background": {"G": 1.0, "rho": 1.0},
             "inclusions": [{"shape": "interval", "center": [0.0], "radius": 0.25, "G": 6.0, "rho": 20.0}]},
  "cutoff": 16,
  "dispersion": {"samples": 16, "count": 6}
}"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blochhom"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn payload_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_file()).collect();
    v.sort();
    v
}

#[test]
fn homogeneous_effective_tensor_is_g_times_identity() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", HOMOGENEOUS_2D);
    let o = run(&["effective"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e = json(tmp.path().join("effective.json"));
    let entries = e["mu0"]["entries"].as_array().unwrap();
    for ent in entries {
        let idx = ent["index"].as_array().unwrap();
        let want = if idx[0] == idx[1] { 2.5 } else { 0.0 };
        assert!((ent["re"].as_f64().unwrap() - want).abs() < 1e-12);
        assert_eq!(ent["im"].as_f64().unwrap(), 0.0);
    }
    for key in ["rho1", "mu1", "rho2"] {
        assert!(e["diagnostics"]["norms"][key].as_f64().unwrap() < 1e-14, "{key}");
    }
    assert_eq!(e["diagnostics"]["tolerances_met"], Value::Bool(true));
    assert_eq!(e["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", LAYERED_SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        for cmd in ["dispersion", "gaps", "cell", "effective"] {
            assert_eq!(code(&run(&[cmd], &cfg, dir)), 0, "{cmd}");
        }
    }
    // Second pass into `a` goes through the cache.
    assert_eq!(code(&run(&["dispersion"], &cfg, &a)), 0);
    let fa = payload_files(&a);
    assert_eq!(fa.len(), 5);
    for p in &fa {
        let q = b.join(p.file_name().unwrap());
        assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap(), "{}", p.display());
    }
}

#[test]
fn dispersion_cache_is_written_and_reused() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", LAYERED_SMALL);
    let first = run(&["gaps", "--verbose"], &cfg, tmp.path());
    assert_eq!(code(&first), 0);
    let cache: Vec<_> = fs::read_dir(tmp.path().join(".cache")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(cache.len(), 1);
    assert!(cache[0].to_string_lossy().starts_with("dispersion-"));
    assert!(!String::from_utf8_lossy(&first.stderr).contains("reusing"));
    // A different eps list leaves the dispersion subtree unchanged.
    let cfg2 = write_config(&tmp, "c2.json", &LAYERED_SMALL.replace("\"cutoff\": 16", "\"cutoff\": 16, \"eps\": [0.5, 0.25, 0.125]"));
    let second = run(&["dispersion", "--verbose"], &cfg2, tmp.path());
    assert_eq!(code(&second), 0);
    assert!(String::from_utf8_lossy(&second.stderr).contains("reusing"));
}

#[test]
fn normalized_dispersion_rescales_k_and_omega() {
    let tmp = TempDir::new().unwrap();
    let text = LAYERED_SMALL.replace("\"G\": 1.0, \"rho\": 1.0}", "\"G\": 4.0, \"rho\": 1.0}");
    let cfg = write_config(&tmp, "c.json", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run(&["dispersion"], &cfg, &a)), 0);
    assert_eq!(code(&run(&["dispersion", "--normalized"], &cfg, &b)), 0);
    let rows = |d: &Path| -> Vec<Vec<f64>> {
        fs::read_to_string(d.join("dispersion.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (ra, rb) = (rows(&a), rows(&b));
    assert_eq!(ra.len(), 17 * 6);
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x[1] / std::f64::consts::PI - y[1]).abs() < 1e-15);
        assert!((x[4] / 2.0 - y[4]).abs() <= 1e-15 * x[4].max(1.0));
    }
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let typo = write_config(&tmp, "typo.json", &LAYERED_SMALL.replace("\"cutoff\"", "\"cutof\""));
    let o = run(&["gaps"], &typo, tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutof"));

    let nested = write_config(&tmp, "nested.json", &LAYERED_SMALL.replace("\"count\": 6", "\"count\": 6, \"cout\": 1"));
    assert_eq!(code(&run(&["gaps"], &nested, tmp.path())), 2);

    let missing = tmp.path().join("absent.json");
    assert_eq!(code(&run(&["gaps"], &missing, tmp.path())), 2);

    let cfg = write_config(&tmp, "c.json", LAYERED_SMALL);
    assert_eq!(code(&run(&["fields", "--line", "y0=0.1"], &cfg, tmp.path())), 2);
    assert_eq!(code(&run(&["fields", "--line", "0.1"], &cfg, tmp.path())), 2);

    let few = write_config(&tmp, "few.json", &LAYERED_SMALL.replace("\"cutoff\": 16", "\"cutoff\": 16, \"eps\": [0.5, 0.25]"));
    assert_eq!(code(&run(&["converge"], &few, tmp.path())), 2);
}

#[test]
fn degenerate_branch_is_a_numerical_failure() {
    // omega_1 = omega_2 = 2 pi at Gamma in a homogeneous line.
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", r#"{"medium": {"d": 1, "background": {"G": 1.0, "rho": 1.0}}, "cutoff": 4, "p": 1}"#);
    let o = run(&["effective"], &cfg, tmp.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not simple"));
}

#[test]
fn gap_count_mismatch_is_an_acceptance_violation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", &LAYERED_SMALL.replace("\"count\": 6}", "\"count\": 6}, \"gaps\": {\"expected\": 9}"));
    let o = run(&["gaps"], &cfg, tmp.path());
    assert_eq!(code(&o), 4);
    let g = json(tmp.path().join("gaps.json"));
    assert_eq!(g["count"].as_u64().unwrap() as usize, g["gaps"].as_array().unwrap().len());
    assert!(g["count"].as_u64().unwrap() >= 1);
}

#[test]
fn fields_write_csv_binary_and_transects() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "c.json", HOMOGENEOUS_2D);
    let o = run(&["fields", "--line", "y0=0.0"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let n = (2 * 2 + 1) * 4;
    let csv = fs::read_to_string(tmp.path().join("field_U0_eps0.5.csv")).unwrap();
    assert!(csv.starts_with("# blochhom "));
    assert!(csv.contains("frame=slow"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + n * n);
    let line = fs::read_to_string(tmp.path().join("field_u_exact_eps0.5_line.csv")).unwrap();
    assert_eq!(line.lines().filter(|l| !l.starts_with('#')).count(), 1 + n);

    let bin = fs::read(tmp.path().join("field_u_exact_eps0.5.bin")).unwrap();
    assert_eq!(&bin[..8], b"BHFIELD1");
    let plen = u32::from_le_bytes(bin[8..12].try_into().unwrap()) as usize;
    let header = 8 + 4 + plen + 4 + 8 + 8 + 8 + 1 + 32;
    assert_eq!(bin.len(), header + 16 * n * n);
    let at = 12 + plen;
    assert_eq!(u32::from_le_bytes(bin[at..at + 4].try_into().unwrap()), 2);
    assert_eq!(bin[at + 28], 0, "exact solution is stored in the fast frame");

    let summary = json(tmp.path().join("fields.json"));
    for f in summary["fields"].as_array().unwrap() {
        assert!(f["max_imag"].as_f64().unwrap() <= 1e-10 * f["max_abs"].as_f64().unwrap());
    }
}

#[test]
fn layered_convergence_run_passes_its_bands() {
    let tmp = TempDir::new().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/layered_1d.json");
    let o = run(&["converge"], &cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(tmp.path().join("report.json"));
    assert_eq!(r["pass"], Value::Bool(true));
    let slopes: Vec<f64> = r["slopes"].as_array().unwrap().iter().map(|s| s["slope"].as_f64().unwrap()).collect();
    assert!((slopes[2] - 3.0).abs() < 0.3, "{slopes:?}");
    let csv = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert!(csv.contains("\n# slopes\norder,slope,intercept,residual,against\n"));

    // Tightening a band past the measured slope flips the exit status.
    let strict = fs::read_to_string(&cfg).unwrap().replace(
        "\"fields\":",
        "\"converge\": {\"bands\": [[0.7, 1.7], [1.7, 2.6], [3.5, 3.7]], \"exact_modes\": null},\n  \"fields\":",
    );
    let cfg2 = write_config(&tmp, "strict.json", &strict);
    let o2 = run(&["converge"], &cfg2, &tmp.path().join("strict"));
    assert_eq!(code(&o2), 4);
    assert!(tmp.path().join("strict/report.json").exists());
}
