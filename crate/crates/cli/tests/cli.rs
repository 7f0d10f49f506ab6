use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use extpos::report::{
    read_report, to_json, DerivativeReport, ExtremalReport, MaxintReport, PjpReport, PolarReport, Report,
    TransportReport, VerifyReport,
};
use extpos::suite::SuiteReport;
use tempfile::TempDir;

fn extpos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extpos")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn lp_ball(dir: &Path, name: &str, p: &str, n: usize, radius: f64) -> String {
    write(dir, name, &format!(r#"{{"type": "lp-ball", "p": {p}, "n": {n}, "radius": {radius}}}"#))
}

/// Parses a JSON report and checks that it serializes back to the same bytes.
fn round_trip<R: Report>(path: PathBuf) -> R {
    let text = fs::read_to_string(&path).unwrap();
    let report: R = read_report(&path).unwrap();
    assert_eq!(to_json(&report).unwrap(), text, "{} does not round-trip", path.display());
    report
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn pjp_of_the_diamond_in_the_square_is_the_identity() {
    let dir = TempDir::new().unwrap();
    let k = lp_ball(dir.path(), "binf2.json", "\"inf\"", 2, 1.0);
    let l = lp_ball(dir.path(), "b1_2.json", "1", 2, 1.0);
    let out_dir = dir.path().join("out");
    let out = extpos(&["pjp", "--outer", &k, "--inner", &l, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: PjpReport = round_trip(out_dir.join("pjp.json"));
    assert!((report.p.clone() - extpos::Matrix::identity(2, 2)).amax() < 1e-6);
    assert!(report.z.amax() < 1e-6);
    assert!(report.certified);
    assert!(out_dir.join("pjp.txt").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("certificate: holds"));
}

#[test]
fn verify_reports_missing_contact_pairs() {
    let dir = TempDir::new().unwrap();
    let k = lp_ball(dir.path(), "big.json", "\"inf\"", 2, 2.0);
    let l = lp_ball(dir.path(), "small.json", "1", 2, 1.0);
    let out_dir = dir.path().join("out");
    let out = extpos(&["verify", "--outer", &k, "--inner", &l, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no contact pairs found"), "{}", stderr(&out));
    let report: VerifyReport = round_trip(out_dir.join("verify.json"));
    assert!(!report.verification.holds);

    // In position already: passes.
    let k = lp_ball(dir.path(), "square.json", "\"inf\"", 2, 1.0);
    let out = extpos(&["verify", "--outer", &k, "--inner", &l]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let l = lp_ball(dir.path(), "b1.json", "1", 2, 1.0);
    let out = extpos(&["pjp", "--inner", &l]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--outer is required"));
    assert_eq!(code(&extpos(&["no-such-command"])), 2);
    let bad = write(dir.path(), "bad.json", r#"{"type": "lp-ball", "p": 1, "n": 0, "radius": 1}"#);
    assert_eq!(code(&extpos(&["pjp", "--outer", &bad, "--inner", &l])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&extpos(&["pjp", "--outer", missing.to_str().unwrap(), "--inner", &l])), 2);
    assert_eq!(code(&extpos(&["paper-suite", "--criteria", "11"])), 2);
    assert_eq!(code(&extpos(&["--help"])), 0);
}

#[test]
fn sweep_csv_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let k = lp_ball(dir.path(), "binf.json", "\"inf\"", 2, 1.0);
    let l = lp_ball(dir.path(), "b1.json", "1", 2, 1.0);
    let mut files = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(run);
        let args = ["sweep", "--outer", &k, "--inner", &l, "--samples", "12", "--seed", "5", "--jobs", jobs];
        let out = extpos(&[&args[..], &["--out", out_dir.to_str().unwrap()]].concat());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push(fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "seed_index,logdet,det_nth_root,grad_norm,solver_iters");
    assert_eq!(text.lines().count(), 13);
    // The determinant of the family lies between 1 and 2.
    for line in text.lines().skip(1) {
        let det: f64 = line.split(',').nth(2).unwrap().parse::<f64>().unwrap().powi(2);
        assert!((1.0 - 1e-9..=2.0 + 1e-5).contains(&det), "{det}");
    }
}

#[test]
fn maxint_recenters_offset_squares() {
    let dir = TempDir::new().unwrap();
    let k = lp_ball(dir.path(), "k.json", "\"inf\"", 2, 1.0);
    let l = write(
        dir.path(),
        "l.json",
        r#"{"type": "v-polytope", "vertices": [[1.3, 1], [-0.7, 1], [-0.7, -1], [1.3, -1]]}"#,
    );
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out =
            extpos(&["maxint", "--outer", &k, "--inner", &l, "--mode", "positive", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let report: MaxintReport = round_trip(out_dir.join("maxint.json"));
        assert!(report.certified);
        assert!((report.final_volume - 4.0).abs() < 1e-12);
        csvs.push(fs::read(out_dir.join("flow.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,volume,flux_norm,anisotropy,step_size,det_drift");
}

#[test]
fn maxint_without_enough_steps_reports_nonconvergence() {
    let dir = TempDir::new().unwrap();
    let k = write(dir.path(), "k.json", r#"{"type": "ellipsoid", "shape": [[1, 0], [0, 1]], "center": [0, 0]}"#);
    let l = write(dir.path(), "l.json", r#"{"type": "ellipsoid", "shape": [[1, 0], [0, 1]], "center": [0.4, -0.2]}"#);
    let out = extpos(&["maxint", "--outer", &k, "--inner", &l, "--max-iter", "1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("MaxIterations"));
    let out = extpos(&["maxint", "--outer", &k, "--inner", &l]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn saddle_of_the_square_family() {
    let dir = TempDir::new().unwrap();
    let k = lp_ball(dir.path(), "k.json", "\"inf\"", 2, 1.0);
    let out_dir = dir.path().join("out");
    let out = extpos(&["saddle", "--outer", &k, "--inner", &k, "--starts", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: ExtremalReport = round_trip(out_dir.join("saddle.json"));
    assert!((report.position.logdet + 2f64.ln()).abs() < 1e-4);
    assert!(report.dilation_check.unwrap().holds);

    let l = lp_ball(dir.path(), "l.json", "1", 2, 1.0);
    let out = extpos(&["maxvol", "--outer", &k, "--inner", &l, "--starts", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: ExtremalReport = round_trip(out_dir.join("maxvol.json"));
    assert!((report.position.logdet.exp() - 2.0).abs() < 1e-5);
}

#[test]
fn transport_polar_and_derivative_checks() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out_flag = out_dir.to_str().unwrap();
    let e = write(dir.path(), "e.json", r#"{"type": "ellipsoid", "shape": [[2, 0], [0, 1]], "center": [0, 0]}"#);
    let cube = lp_ball(dir.path(), "cube.json", "\"inf\"", 2, 1.0);
    let out = extpos(&["ellipsoid-transport", "--outer", &e, "--inner", &cube, "--samples", "4", "--out", out_flag]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: TransportReport = round_trip(out_dir.join("transport.json"));
    assert_eq!(report.rows.len(), 4);
    assert!(report.logdet_std < 1e-6);
    // Transport needs an ellipsoid container.
    assert_eq!(code(&extpos(&["ellipsoid-transport", "--outer", &cube, "--inner", &cube])), 2);

    let m =
        write(dir.path(), "m.json", r#"[{"A": [[2, 1], [0, 3]], "M": [[1, 0.5], [0, 1]]}, {"A": [[0, -1], [1, 0]]}]"#);
    let out = extpos(&["polar-decomp", "--matrices", &m, "--out", out_flag]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: PolarReport = round_trip(out_dir.join("polar.json"));
    assert_eq!(report.cases.len(), 2);
    // A rotation has P = I.
    assert!((report.cases[1].p.clone() - extpos::Matrix::identity(2, 2)).amax() < 1e-12);
    let singular = write(dir.path(), "s.json", r#"{"A": [[1, 2], [2, 4]]}"#);
    assert_eq!(code(&extpos(&["polar-decomp", "--matrices", &singular])), 2);

    let k = write(
        dir.path(),
        "k.json",
        r#"{"type": "v-polytope", "vertices": [[1, 0], [0, 1.2], [-0.9, 0.1], [0.1, -1]]}"#,
    );
    let l = write(
        dir.path(),
        "l.json",
        r#"{"type": "v-polytope", "vertices": [[1.4, 0.3], [0.2, 1.1], [-0.5, 0.2], [0.5, -0.7]]}"#,
    );
    let out = extpos(&["derivative-check", "--outer", &k, "--inner", &l, "--samples", "5", "--out", out_flag]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: DerivativeReport = round_trip(out_dir.join("derivatives.json"));
    assert_eq!(report.cases.len(), 10);
}

#[test]
fn paper_suite_prints_a_table() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = extpos(&["paper-suite", "--criteria", "4,8", "--jobs", "2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("[PASS]  4 generalized polar decomposition"));
    assert!(stdout.contains("[PASS]  8 closed-surface identities"));
    assert!(stdout.contains("2/2 criteria passed"));
    let report: SuiteReport = round_trip(out_dir.join("suite.json"));
    assert!(report.all_passed());
}
