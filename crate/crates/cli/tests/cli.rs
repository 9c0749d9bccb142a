use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gyrotrack_cli::config::RunConfig;
use gyrotrack_cli::telemetry::HEADER;
use proptest::prelude::*;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gyrotrack"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Bundled config with a shorter horizon and optional line replacements.
fn variant(dir: &TempDir, name: &str, duration: f64, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(bundled(name)).unwrap();
    text = text.replace(
        "integrator.duration = 30",
        &format!("integrator.duration = {duration}"),
    );
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir
        .path()
        .join(format!("{}-{duration}.cfg", name.trim_end_matches(".cfg")));
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn golden_header() {
    let golden = "t,R11,R12,R13,R21,R22,R23,R31,R32,R33,Rd11,Rd12,Rd13,Rd21,Rd22,Rd23,Rd31,Rd32,Rd33,\
Omega1,Omega2,Omega3,OmegaR1,OmegaR2,OmegaR3,Theta1,Theta2,Theta3,u_int1,u_int2,u_int3,psi_E,geo_err,E_cl,momentum_drift";
    assert_eq!(HEADER.join(","), golden);

    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "zero_torque.cfg", 0.01, &[]);
    let out = dir.path().join("run.csv");
    assert_eq!(code(&run(&["simulate", s(&cfg), "-o", s(&out)])), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), golden);
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 12);
    let first_row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first_row.len(), HEADER.len());
    assert_eq!(first_row[1], "3.5999999999999999e-1");
}

#[test]
fn bundled_run_has_expected_row_count() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("zero.csv");
    let o = run(&["simulate", s(&bundled("zero_torque.cfg")), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(&out).unwrap().lines().count() - 1;
    assert_eq!(rows, 30001);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("zero.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["rows"], 30001);
    assert_eq!(meta["feasibility"]["feasible"], false);
    assert!(meta["conservation"]["max_momentum_drift"].as_f64().unwrap() < 1e-6);
}

#[test]
fn stride_thins_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(
        &dir,
        "constant_torque.cfg",
        1.0,
        &[(
            "integrator.reproject = true",
            "integrator.reproject = true\noutput.stride = 10",
        )],
    );
    let out = dir.path().join("run.csv");
    assert_eq!(code(&run(&["simulate", s(&cfg), "-o", s(&out)])), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 102);
}

#[test]
fn malformed_config_exits_one_naming_key() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(
        &dir,
        "zero_torque.cfg",
        1.0,
        &[("gains.kd = 3", "gains.kd = three")],
    );
    let o = run(&["simulate", s(&cfg), "-o", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gains.kd") && err.contains("line"), "{err}");
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn divergence_exits_two_with_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(
        &dir,
        "zero_torque.cfg",
        5.0,
        &[
            ("gains.kd = 3", "gains.kd = 10000"),
            ("integrator.step = 0.001", "integrator.step = 0.05"),
        ],
    );
    let out = dir.path().join("run.csv");
    let o = run(&["simulate", s(&cfg), "-o", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["status"], "diverged");
    assert!(meta["feasibility"].is_object());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["simulate"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(
        code(&run(&["simulate", "/nonexistent.cfg", "-o", "/tmp/x.csv"])),
        1
    );
}

#[test]
fn check_validates() {
    let o = run(&["check", s(&bundled("sinusoid_torque.cfg"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sinusoid"));
}

#[test]
fn tune_gains_reports_both_sides() {
    let o = run(&["tune-gains", s(&bundled("zero_torque.cfg"))]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("1 > max(13.46"), "{text}");
    assert!(text.contains("1 < 10.10"), "{text}");
    assert!(text.contains("verdict: infeasible"));
}

#[test]
fn tune_gains_rejects_nonpositive_mu() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(
        &dir,
        "zero_torque.cfg",
        1.0,
        &[("gains.mu_hess = 2.0048", "gains.mu_hess = 0")],
    );
    let o = run(&["tune-gains", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gains.mu_hess"));
}

#[test]
fn synthesized_config_rechecks_feasible() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(
        &dir,
        "zero_torque.cfg",
        1.0,
        &[("gains.kd = 3", "gains.kd = 1")],
    );
    let synth = dir.path().join("synth.cfg");
    let o = run(&["tune-gains", s(&cfg), "--synthesize", "-o", s(&synth)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: feasible"));
    let o = run(&["tune-gains", s(&synth)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: feasible"));
}

#[test]
fn compare_against_self_has_unit_ratio() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "constant_torque.cfg", 1.0, &[]);
    let out = dir.path().join("cmp");
    assert_eq!(
        code(&run(&[
            "compare",
            s(&cfg),
            "-o",
            s(&out),
            "--baseline",
            "self"
        ])),
        0
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ratio_u_ext"], 1.0);
    assert_eq!(
        fs::read(out.join("effort_pid.csv")).unwrap(),
        fs::read(out.join("effort_baseline.csv")).unwrap()
    );
}

#[test]
fn compare_against_pd_writes_two_series() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "constant_torque.cfg", 2.0, &[]);
    let out = dir.path().join("cmp");
    assert_eq!(code(&run(&["compare", s(&cfg), "-o", s(&out)])), 0);
    for name in ["effort_pid.csv", "effort_baseline.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,u_ext_norm,u_int_norm");
        assert_eq!(text.lines().count(), 2002);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["integral_u_ext_norm"]["baseline"]
        .as_f64()
        .unwrap()
        .is_finite());
    assert_eq!(summary["baseline_gains"]["ki"], 0.0);
}

#[test]
fn compare_needs_existing_parent() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "zero_torque.cfg", 0.1, &[]);
    let out = dir.path().join("missing").join("cmp");
    assert_eq!(code(&run(&["compare", s(&cfg), "-o", s(&out)])), 1);
    assert!(!out.exists());
}

#[test]
fn plot_writes_nonempty_svgs() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "sinusoid_torque.cfg", 2.0, &[]);
    let csv = dir.path().join("run.csv");
    assert_eq!(code(&run(&["simulate", s(&cfg), "-o", s(&csv)])), 0);
    let svg = dir.path().join("fig.svg");
    let o = run(&["plot", s(&csv), "-o", s(&svg), "--entries", "11,12,21,22"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let overlay = fs::read_to_string(&svg).unwrap();
    for title in ["(1,1)(t)", "(1,2)(t)", "(2,1)(t)", "(2,2)(t)"] {
        assert!(overlay.contains(title));
    }
    assert_eq!(overlay.matches("<polyline").count(), 8);
    for extra in ["fig_psi.svg", "fig_effort.svg"] {
        assert!(fs::metadata(dir.path().join(extra)).unwrap().len() > 0);
    }
}

#[test]
fn plot_rejects_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, format!("{}\n", HEADER.join(","))).unwrap();
    let svg = dir.path().join("fig.svg");
    assert_eq!(code(&run(&["plot", s(&csv), "-o", s(&svg)])), 1);
    assert!(!svg.exists());
    assert!(!dir.path().join("fig_psi.svg").exists());
}

#[test]
fn plot_rejects_foreign_schema_and_bad_entries() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("other.csv");
    fs::write(&csv, "a,b\n1,2\n").unwrap();
    assert_eq!(
        code(&run(&["plot", s(&csv), "-o", s(&dir.path().join("f.svg"))])),
        1
    );
    let good = dir.path().join("good.csv");
    fs::write(
        &good,
        format!(
            "{}\n{}\n",
            HEADER.join(","),
            vec!["0"; HEADER.len()].join(",")
        ),
    )
    .unwrap();
    assert_eq!(
        code(&run(&[
            "plot",
            s(&good),
            "-o",
            s(&dir.path().join("f.svg")),
            "--entries",
            "44"
        ])),
        1
    );
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "sinusoid_torque.cfg", 1.0, &[]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(code(&run(&["simulate", s(&cfg), "-o", s(&a)])), 0);
    assert_eq!(code(&run(&["simulate", s(&cfg), "-o", s(&b)])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip_is_idempotent(
        kp in 0.1f64..100.0,
        kd in 0.1f64..10.0,
        ki in 0.01f64..5.0,
        step in 1e-4f64..1e-2,
        amp in proptest::array::uniform3(-2.0f64..2.0),
        w in proptest::array::uniform3(-3.0f64..3.0),
        certified in any::<bool>(),
        stride in 1usize..50,
    ) {
        let base = fs::read_to_string(bundled("sinusoid_torque.cfg")).unwrap();
        let text = base
            .replace("gains.kp = 1\n", &format!("gains.kp = {kp}\n"))
            .replace("gains.kd = 3", &format!("gains.kd = {kd}"))
            .replace("gains.ki = 1\n", &format!("gains.ki = {ki}\n"))
            .replace("gains.mode = explicit", if certified { "gains.mode = certified" } else { "gains.mode = explicit" })
            .replace("integrator.step = 0.001", &format!("integrator.step = {step}"))
            .replace("reference.amplitude = 1 1 1", &format!("reference.amplitude = {} {} {}", amp[0], amp[1], amp[2]))
            .replace("plant.IOmega0 = 1 2.2 5.1", &format!("plant.Omega0 = {}, {}, {}", w[0], w[1], w[2]))
            + &format!("output.stride = {stride}\n");
        let once = RunConfig::parse(&text).unwrap();
        let canonical = once.to_text();
        let again = RunConfig::parse(&canonical).unwrap();
        prop_assert_eq!(&again, &once);
        prop_assert_eq!(again.to_text(), canonical);
    }
}
