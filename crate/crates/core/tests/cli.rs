use std::fs;
use std::path::Path;

use fdcb::cli::{main_with_args, ExperimentConfig, DEFAULT_CONFIG};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["fdcb"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// A fast configuration: 4x4 arrays, a 9-beam grid, few users.
fn small_config(dir: &Path) -> String {
    let text = DEFAULT_CONFIG
        .replace("tx_rows = 8", "tx_rows = 4")
        .replace("tx_cols = 8", "tx_cols = 4")
        .replace("rx_rows = 8", "rx_rows = 4")
        .replace("rx_cols = 8", "rx_cols = 4")
        .replace("[-60.0, 60.0, 15.0]", "[-60.0, 60.0, 60.0]")
        .replace("num_user_pairs = 500", "num_user_pairs = 20")
        .replace(
            "sigma_grid_db = [-40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0]",
            "sigma_grid_db = [-30.0, -15.0]",
        );
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn design_writes_codebooks_trace_and_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("design");
    let (code, stdout, stderr) = run(&["design", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("final expected objective"));
    assert!(stdout.contains("coverage residual tx"));
    for f in [
        "tx_codebook.csv",
        "rx_codebook.csv",
        "objective_trace.csv",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(out.join("objective_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6);

    // Re-running from the echoed configuration reproduces every output.
    let again = dir.path().join("again");
    let echo = out.join("config.toml");
    let (code, _, _) = run(&[
        "design",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for f in ["tx_codebook.csv", "rx_codebook.csv", "objective_trace.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn eval_reports_metrics_and_designed_beats_cbf() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["design", "--config", &cfg, "--out", o]).0, 0);
    let tx = out.join("tx_codebook.csv");
    let rx = out.join("rx_codebook.csv");
    let (code, designed, err) = run(&[
        "eval",
        "--config",
        &cfg,
        "--out",
        o,
        "--tx",
        tx.to_str().unwrap(),
        "--rx",
        rx.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    for key in [
        "avg inr (dB)",
        "mean gamma_sum",
        "coverage variance tx",
        "coverage variance rx",
    ] {
        assert!(designed.contains(key), "{designed}");
    }
    let inr = |s: &str| -> f64 {
        s.lines()
            .find(|l| l.starts_with("avg inr"))
            .unwrap()
            .rsplit(' ')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };

    // Conjugate codebooks written through the library for comparison.
    let c = ExperimentConfig::parse(&fs::read_to_string(&cfg).unwrap()).unwrap();
    let layout = c.layout().unwrap();
    let spec = c.baseline_spec().unwrap();
    let cbf_tx =
        fdcb::codebooks::cbf_codebook(layout.tx_geom(), &c.tx_region().unwrap(), &spec).unwrap();
    let cbf_rx =
        fdcb::codebooks::cbf_codebook(layout.rx_geom(), &c.rx_region().unwrap(), &spec).unwrap();
    let ctx = out.join("cbf_tx.csv");
    let crx = out.join("cbf_rx.csv");
    cbf_tx.write_csv(fs::File::create(&ctx).unwrap()).unwrap();
    cbf_rx.write_csv(fs::File::create(&crx).unwrap()).unwrap();
    let (code, cbf, _) = run(&[
        "eval",
        "--config",
        &cfg,
        "--out",
        o,
        "--tx",
        ctx.to_str().unwrap(),
        "--rx",
        crx.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(inr(&designed) < inr(&cbf), "{designed}\n{cbf}");
}

#[test]
fn sweep_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        let (code, _, err) = run(&[
            "sweep",
            "--config",
            &cfg,
            "--out",
            o.to_str().unwrap(),
            "--experiment",
            "inr_sweep",
            "--seed",
            "9",
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let x = fs::read(a.join("inr_sweep.csv")).unwrap();
    assert_eq!(x, fs::read(b.join("inr_sweep.csv")).unwrap());
    let echo = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 9"));
}

#[test]
fn unknown_experiment_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--experiment",
        "fig6",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("fig6"));
}

#[test]
fn missing_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, DEFAULT_CONFIG.replace("inrbar_rx_db = 90.0\n", "")).unwrap();
    let (code, _, err) = run(&[
        "design",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("inrbar_rx_db"), "{err}");
}

#[test]
fn unreadable_codebook_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "not a codebook\n").unwrap();
    let b = bad.to_str().unwrap();
    let (code, _, _) = run(&[
        "eval",
        "--out",
        dir.path().to_str().unwrap(),
        "--tx",
        b,
        "--rx",
        b,
    ]);
    assert_eq!(code, 1);
}

#[test]
fn zero_coverage_variance_with_coarse_quantization_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(small_config(dir.path()))
        .unwrap()
        .replace("sigma_tx_sq_db = -15.0", "sigma_tx_sq_db = -inf")
        .replace("sigma_rx_sq_db = -15.0", "sigma_rx_sq_db = -inf")
        .replace("phase_bits = 8", "phase_bits = 2")
        .replace("amplitude_bits = 8", "amplitude_bits = 1");
    let path = dir.path().join("zero.toml");
    fs::write(&path, text).unwrap();
    let (code, stdout, err) = run(&[
        "design",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("z").to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("quantized"));
}
