use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughheat"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"{
  "problem": "constant_k",
  "grid": {"x_min": -2, "x_max": 2, "nx": 17, "nt": 9},
  "verify": {"reference_nx": 256, "reference_nt": 256},
  "seed": 4
}"#;

#[test]
fn solve_constant_k_writes_every_node() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve"], &configs().join("constant_k.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash=") && lines[0].ends_with(" seed=1"));
    assert_eq!(lines[1], "x,t,w,w_x,W,W_G,W_f,W_x,W_Gx,W_fx");
    assert_eq!(lines.len() - 2, 129 * 65);
    assert!(!csv.contains('\r'));
    for f in ["solution.gp", "norms_w.csv", "norms_wx.csv", "norms.txt"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert_eq!(text.lines().next(), lines.first().copied(), "{f}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["solve"], &cfg, out).status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    // the seed flag lands in the header
    let c = dir.path().join("c");
    let o = Command::new(env!("CARGO_BIN_EXE_roughheat"))
        .args(["solve", "--seed", "99", "--jobs", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&c)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(c.join("solution.csv")).unwrap().lines().next().unwrap().ends_with("seed=99"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (SMALL.replace("\"nx\"", "\"nx_count\""), "nx_count"),
        (SMALL.replace("\"nt\": 9", "\"nt\": \"nine\""), "grid.nt"),
        (SMALL.replace("constant_k", "no_such_problem"), "no_such_problem"),
        (SMALL.replace("\"seed\": 4", "\"seed\": 4,"), "line"),
        (SMALL.replace("\"seed\": 4", "\"seed\": 4, \"verify\": {\"test_functions\": 0}"), "verify"),
        (SMALL.replace("\"seed\": 4", "\"seed\": 4, \"parametrix\": {\"sign\": \"sideways\"}"), "parametrix.sign"),
    ];
    for (text, key) in cases {
        let cfg = write_config(dir.path(), &text);
        let o = run(&["verify"], &cfg, &dir.path().join("out"));
        assert_eq!(o.status.code(), Some(2), "{key}: {}", stderr(&o));
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
    let o = run(&["solve"], &dir.path().join("missing.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_test_function_panel_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"reference_nx\": 256", "\"test_functions\": 0, \"reference_nx\": 256"));
    let o = run(&["verify"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("test_functions"), "{}", stderr(&o));
}

#[test]
fn verify_constant_coefficients_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], &configs().join("constant_k.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let table = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert_eq!(table.lines().nth(1), Some("check,value,threshold,pass,note"));
    assert!(table.contains("closed_form,") && !table.contains(",false,"));
    assert!(fs::read_to_string(dir.path().join("residuals.csv")).unwrap().lines().count() == 22);
}

#[test]
fn wrong_phi_sign_fails_the_residual_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify"], &configs().join("wrong_sign.json"), dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("weak_residual"), "{}", stderr(&o));
}

#[test]
fn l2decay_on_zero_forcing_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = run(&["study", "--kind", "l2decay"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("l2decay.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').skip(1).all(|v| v == "0e0")), "{csv}");
    assert!(dir.path().join("l2decay.gp").exists());
}

#[test]
fn mollify_study_on_smooth_data_is_cauchy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "problem": {
    "coefficient": {"kind": "constant", "k": 1.0},
    "forcing": {"kind": "separable", "profile": {"kind": "gaussian", "amp": 1.0, "center": 0.0, "width": 0.5}},
    "initial": {"kind": "zero"},
    "horizon": 0.5,
    "halfwidth": 5.0
  },
  "grid": {"x_min": -2, "x_max": 2, "nx": 17, "nt": 5, "t_min": 0.1},
  "study": {"epsilons": [0.2, 0.1, 0.05]}
}"#,
    );
    let o = run(&["study", "--kind", "mollify"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("mollify.csv")).unwrap().lines().count(), 5);
}

#[test]
fn rough_pulse_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("rough_pulse.json");
    let o = run(&["solve"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("norms_wx.csv")).unwrap();
    assert!(report.contains("fitted_exponent,x,") && report.contains("holder,t,"));
    let o = run(&["study", "--kind", "holder"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert!(dir.path().join("holder_fit.csv").exists());
}
