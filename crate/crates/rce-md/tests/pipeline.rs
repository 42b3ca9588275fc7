//! End-to-end command-line pipeline: gen-truth → synth → estimate → verify →
//! compare-l2 → arma, exercised through the real binary with real files.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use num_complex::Complex64;
use rce_md::cli::{ComparisonFile, VerifyFile};
use rce_md::io::{self, ArmaFile, DensityFile, FieldMetaFile, ManifestFile, MomentsFile, ReportFile};
use rce_md::moments::LatticeField;
use rce_md::synth::FilterCoefficients;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rce-md"))
}

fn run_ok(args: &[&str]) -> String {
    let output = binary().args(args).output().expect("spawn rce-md");
    assert!(
        output.status.success(),
        "command {:?} failed with {:?}:\n{}",
        args,
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn run_expect_code(args: &[&str], code: i32) {
    let output = binary().args(args).output().expect("spawn rce-md");
    assert_eq!(
        output.status.code(),
        Some(code),
        "command {:?}: stderr {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_runs_green() {
    let dir = tempfile::tempdir().unwrap();
    let at = |name: &str| -> PathBuf { dir.path().join(name) };

    // gen-truth with the built-in filter.
    let truth = at("truth.json");
    let truth_csv = at("truth.csv");
    let exact = at("exact.json");
    run_ok(&[
        "gen-truth",
        "--out",
        path_str(&truth),
        "--grid-csv",
        path_str(&truth_csv),
        "--moments-out",
        path_str(&exact),
    ]);
    assert!(truth.exists() && truth_csv.exists() && exact.exists());
    let manifest: ManifestFile = io::read_json(&at("truth.manifest.json")).unwrap();
    assert_eq!(manifest.command, "gen-truth");

    // synth: deterministic per seed, bit for bit.
    let field = at("field.bin");
    run_ok(&["synth", "--in", path_str(&truth), "--N", "96", "--seed", "7", "--out", path_str(&field)]);
    let first = std::fs::read(&field).unwrap();
    run_ok(&["synth", "--in", path_str(&truth), "--N", "96", "--seed", "7", "--out", path_str(&field)]);
    let second = std::fs::read(&field).unwrap();
    assert_eq!(first, second, "same seed must give identical bytes");
    let meta: FieldMetaFile = io::read_json(&at("field.meta.json")).unwrap();
    assert_eq!(meta.n_axis, 96);
    assert_eq!(meta.seed, 7);

    // estimate from the field with the truth numerator as prior.
    let report = at("report.json");
    let est_density = at("estimate.json");
    let sample_moments = at("sample.json");
    run_ok(&[
        "estimate",
        "--in",
        path_str(&field),
        "--d",
        "2",
        "--n",
        "2",
        "--prior",
        path_str(&truth),
        "--out",
        path_str(&report),
        "--density-out",
        path_str(&est_density),
        "--moments-out",
        path_str(&sample_moments),
    ]);
    let report_data: ReportFile = io::read_json(&report).unwrap();
    assert!(report_data.moment_residual < 1e-6);
    assert!(report_data.statistic.is_some());

    // verify the estimate against the sample moments it matched.
    let verify_out = at("verify.json");
    let stdout = run_ok(&[
        "verify",
        "--in",
        path_str(&est_density),
        "--moments",
        path_str(&sample_moments),
        "--out",
        path_str(&verify_out),
    ]);
    assert!(stdout.contains("moment residual"));
    let verify_data: VerifyFile = io::read_json(&verify_out).unwrap();
    assert!(verify_data.residual_linf < 1e-6);
    assert!(verify_data.moment_matrix.is_pd);
    assert!(verify_data.modes.count <= verify_data.mode_bound);

    // exact-moment estimate reproduces the truth's denominator closely.
    let report2 = at("report_exact.json");
    run_ok(&[
        "estimate",
        "--moments",
        path_str(&exact),
        "--prior",
        path_str(&truth),
        "--tol",
        "1e-9",
        "--max-iters",
        "3000",
        "--out",
        path_str(&report2),
    ]);
    let report2_data: ReportFile = io::read_json(&report2).unwrap();
    let truth_data: DensityFile = io::read_json(&truth).unwrap();
    let want = truth_data.into_density().unwrap();
    let got = report2_data.into_density().unwrap();
    let scale = want
        .denominator()
        .coefficients()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    for (a, b) in got
        .denominator()
        .coefficients()
        .iter()
        .zip(want.denominator().coefficients())
    {
        assert!((a - b).norm() <= 1e-4 * scale, "coefficient mismatch: {a} vs {b}");
    }

    // compare-l2 against the truth.
    let versus = at("versus.json");
    run_ok(&[
        "compare-l2",
        "--in",
        path_str(&field),
        "--prior",
        path_str(&truth),
        "--truth",
        path_str(&truth),
        "--out",
        path_str(&versus),
    ]);
    let versus_data: ComparisonFile = io::read_json(&versus).unwrap();
    assert!(versus_data.convex_moment_residual < versus_data.l2_moment_residual);
    assert!(versus_data.tv_convex_to_truth.unwrap() <= versus_data.tv_l2_to_truth.unwrap());

    // arma export with the built-in filter as AR reference.
    let filter_file = at("filter.json");
    io::write_json(
        &filter_file,
        &io::FilterFile::from_filter(&FilterCoefficients::default_truth_filter()),
    )
    .unwrap();
    let model = at("model.json");
    run_ok(&[
        "arma",
        "--report",
        path_str(&report2),
        "--ar-ref",
        path_str(&filter_file),
        "--out",
        path_str(&model),
    ]);
    let model_data: ArmaFile = io::read_json(&model).unwrap();
    assert_eq!(model_data.form, "lambda-weighted");
    // Round trip: the model's stored coefficients rebuild the estimate.
    let implied = model_data.implied_density().unwrap();
    let direct = report2_data.into_density().unwrap();
    let grid = rce_md::grid::TorusGrid::new(2, 32);
    let a = implied.evaluate(grid).unwrap();
    let b = direct.evaluate(grid).unwrap();
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).norm() <= 1e-8);
    }
    // The weight at lag (0,0) is the autocorrelation of the AR taps at zero.
    let w0 = model_data
        .rhs_weights
        .iter()
        .find(|e| e.k.iter().all(|c| *c == 0))
        .unwrap();
    assert!((w0.re - 1.32).abs() < 1e-3, "lag-0 weight {}", w0.re);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    run_ok(&["gen-truth", "--out", path_str(&truth)]);

    let config = dir.path().join("synth.json");
    std::fs::write(
        &config,
        format!(r#"{{"input": "{}", "n_samples": 32, "seed": 5}}"#, truth.display()),
    )
    .unwrap();

    let field = dir.path().join("field.bin");
    run_ok(&[
        "synth",
        "--config",
        path_str(&config),
        "--seed",
        "9",
        "--out",
        path_str(&field),
    ]);
    let meta: FieldMetaFile = io::read_json(&dir.path().join("field.meta.json")).unwrap();
    assert_eq!(meta.n_axis, 32, "config file value should apply");
    assert_eq!(meta.seed, 9, "flag should override the config file");
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let at = |name: &str| -> PathBuf { dir.path().join(name) };

    // Missing required flag: usage error.
    run_expect_code(&["gen-truth"], 2);

    // Unstable (all-zero) denominator taps: filter error.
    let mut bad_filter = io::FilterFile::from_filter(&FilterCoefficients::default_truth_filter());
    for tap in &mut bad_filter.a {
        tap.re = 0.0;
        tap.im = 0.0;
    }
    let bad_filter_path = at("bad_filter.json");
    io::write_json(&bad_filter_path, &bad_filter).unwrap();
    run_expect_code(
        &["gen-truth", "--filter", path_str(&bad_filter_path), "--out", path_str(&at("x.json"))],
        3,
    );

    // Zero field: degenerate data under automatic selection.
    let zero_path = at("zero.bin");
    let zeros = LatticeField::new(2, 8, vec![Complex64::ZERO; 64]).unwrap();
    io::write_field(&zero_path, &zeros).unwrap();
    run_expect_code(
        &[
            "estimate",
            "--in",
            path_str(&zero_path),
            "--d",
            "2",
            "--n",
            "2",
            "--out",
            path_str(&at("r.json")),
        ],
        4,
    );

    // Indefinite moment file: solve precondition.
    let omega = rce_md::indexing::MultiIndexSet::new(1, 1).unwrap();
    let bad_moments = rce_md::moments::MomentSequence::new(
        omega,
        vec![Complex64::ONE, Complex64::new(1.4, 0.0)],
    )
    .unwrap();
    let bad_moments_path = at("bad_moments.json");
    io::write_json(&bad_moments_path, &MomentsFile::from_sequence(&bad_moments, "hand-built"))
        .unwrap();
    run_expect_code(
        &[
            "estimate",
            "--moments",
            path_str(&bad_moments_path),
            "--out",
            path_str(&at("r2.json")),
        ],
        5,
    );

    // Mismatched orders between density and moments: shape error.
    let truth = at("truth.json");
    run_ok(&["gen-truth", "--out", path_str(&truth)]);
    run_expect_code(
        &[
            "verify",
            "--in",
            path_str(&truth),
            "--moments",
            path_str(&bad_moments_path),
        ],
        8,
    );

    // Unsolved report refused by the ARMA export.
    let exact = at("exact.json");
    run_ok(&["gen-truth", "--out", path_str(&truth), "--moments-out", path_str(&exact)]);
    let report = at("report.json");
    run_ok(&[
        "estimate",
        "--moments",
        path_str(&exact),
        "--prior",
        path_str(&truth),
        "--out",
        path_str(&report),
    ]);
    run_expect_code(
        &[
            "arma",
            "--report",
            path_str(&report),
            "--tol",
            "1e-30",
            "--out",
            path_str(&at("model.json")),
        ],
        7,
    );
}

#[test]
fn csv_field_fallback_round_trips_through_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    run_ok(&["gen-truth", "--out", path_str(&truth)]);
    let field_csv = dir.path().join("field.csv");
    run_ok(&[
        "synth",
        "--in",
        path_str(&truth),
        "--N",
        "48",
        "--seed",
        "3",
        "--out",
        path_str(&field_csv),
    ]);
    let text = std::fs::read_to_string(&field_csv).unwrap();
    assert!(text.starts_with("t1,t2,re,im"));
    let report = dir.path().join("report.json");
    run_ok(&[
        "estimate",
        "--in",
        path_str(&field_csv),
        "--d",
        "2",
        "--n",
        "2",
        "--out",
        path_str(&report),
    ]);
    let report_data: ReportFile = io::read_json(&report).unwrap();
    assert!(report_data.moment_residual < 1e-6);
}

#[test]
fn thread_cap_env_is_honored_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    let output = binary()
        .env("RCE_MD_THREADS", "1")
        .args(["gen-truth", "--out", path_str(&truth)])
        .output()
        .unwrap();
    assert!(output.status.success());

    let output = binary()
        .env("RCE_MD_THREADS", "zero")
        .args(["gen-truth", "--out", path_str(&truth)])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}
