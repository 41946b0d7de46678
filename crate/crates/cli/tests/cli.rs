use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fsvol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsvol")).args(args).output().expect("spawn fsvol")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/cleaning_fixture.csv")
}

fn simulate_to(path: &Path, seed: &str) -> Output {
    fsvol(&[
        "simulate",
        "--sigma",
        "flat:0.2",
        "--phi",
        "0.55",
        "--sigma-eps2",
        "0.25",
        "--n",
        "300",
        "--m",
        "78",
        "--seed",
        seed,
        "-o",
        s(path),
    ])
}

#[test]
fn version_is_json() {
    let o = fsvol(&["--version"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn help_lists_every_subcommand() {
    let o = fsvol(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["simulate", "estimate", "mc", "ingest", "avar"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    assert!(simulate_to(&a, "7").status.success());
    let o = fsvol(&[
        "--threads",
        "3",
        "simulate",
        "--sigma",
        "flat:0.2",
        "--phi",
        "0.55",
        "--sigma-eps2",
        "0.25",
        "--n",
        "300",
        "--m",
        "78",
        "--seed",
        "7",
        "-o",
        s(&b),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.truth.json")).unwrap().len(),
        std::fs::read(dir.path().join("b.truth.json")).unwrap().len()
    );
    let c = dir.path().join("c.bin");
    simulate_to(&c, "8");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn noncausal_phi_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        fsvol(&["simulate", "--phi", "1.2", "--sigma-eps2", "0.25", "--n", "10", "-o", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("causal"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn estimate_emits_reports_and_ghat() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.csv");
    assert!(simulate_to(&panel, "11").status.success());
    let out = dir.path().join("est.json");
    let o = fsvol(&[
        "estimate",
        "-i",
        s(&panel),
        "--proc",
        "A,B,C",
        "--p",
        "1",
        "--alpha",
        "1,5",
        "--bias-correct",
        "--stderr",
        "-o",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reports: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // A once, B and C per alpha, each with its corrected twin
    assert_eq!(reports.len(), 2 * (1 + 2 + 2));
    assert!(reports.iter().all(|r| r["stderr"]["phi"][0].as_f64().unwrap() > 0.0));
    assert_eq!(reports.iter().filter(|r| r["bias_corrected"] == true).count(), 5);
    let ghat = std::fs::read_to_string(dir.path().join("est.ghat.csv")).unwrap();
    assert_eq!(ghat.lines().next(), Some("t_k,Hhat,Ghat"));
    assert_eq!(ghat.lines().count(), 1 + 78);
}

#[test]
fn bias_correction_of_order_two_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("p.bin");
    assert!(simulate_to(&panel, "12").status.success());
    let o = fsvol(&["estimate", "-i", s(&panel), "--p", "2", "--bias-correct"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported order"));
}

#[test]
fn zero_quadratic_variation_names_curve_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("flat.csv");
    let mut text = String::from("curve_index,k,t_k,value\n");
    for i in 0..4 {
        for k in 0..=3 {
            let v = if i == 2 && k <= 1 { 0.0 } else { 0.01 * (i * 4 + k) as f64 };
            writeln!(text, "{i},{k},{},{v}", k as f64 / 3.0).unwrap();
        }
    }
    std::fs::write(&panel, text).unwrap();
    let o = fsvol(&["estimate", "-i", s(&panel), "--proc", "A", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("curve 2") && msg.contains("grid index 1"), "{msg}");
    let o = fsvol(&["estimate", "-i", s(&panel), "--proc", "B", "--alpha", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn avar_reports_named_blocks() {
    let o = fsvol(&["avar", "--phi", "0.55", "--sigma-eps2", "0.25", "--eta", "3", "--proc", "C"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = &v["results"][0];
    assert!(r["pi"][0][0].as_f64().unwrap() > 0.0 && r["rho"].as_f64().unwrap() > 0.0);

    let o = fsvol(&["avar", "--p", "2", "--phi", "0.5,0.3", "--sigma-eps2", "1", "--proc", "A"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let nu = &v["results"][0]["nu"];
    // classical Yule–Walker limit: 1 - phi_2^2 on the diagonal, -phi_1 (1 + phi_2) off it
    assert!((nu[0][0].as_f64().unwrap() - 0.91).abs() < 1e-6);
    assert!((nu[0][1].as_f64().unwrap() + 0.65).abs() < 1e-6);

    let o = fsvol(&["avar", "--phi", "0.6,0.5", "--sigma-eps2", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mc_smoke_run_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        let start = std::time::Instant::now();
        let o = fsvol(&["--threads", threads, "mc", "--r", "1", "--n", "100", "--quiet", "-o", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        (start.elapsed(), std::fs::read_to_string(out.join("mc_cells.csv")).unwrap())
    };
    let (t, a) = run("one", "1");
    assert!(t.as_secs_f64() < 5.0);
    let (_, b) = run("two", "2");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 3);
}

#[test]
fn mc_reports_progress_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsvol(&[
        "mc",
        "--shapes",
        "flat,ushape",
        "--r",
        "4",
        "--n",
        "50",
        "--alpha",
        "1,5",
        "--bias-correct",
        "-o",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("[ushape] N=50: 4/4"));
    let cells = std::fs::read_to_string(dir.path().join("mc_cells.csv")).unwrap();
    // per shape: A, B x2, C x2, each raw and corrected
    assert_eq!(cells.lines().count(), 1 + 2 * 10);
    assert!(dir.path().join("mc_summary.json").exists());
}

#[test]
fn ingest_fixture_writes_panel_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cidr.bin");
    let o = fsvol(&["ingest", "-i", fixture().to_str().unwrap(), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cidr.report.json")).unwrap()).unwrap();
    assert_eq!(report["retained_days"], 1297);
    assert!(std::fs::metadata(&out).unwrap().len() > 24);
}

#[test]
fn ingest_drops_security_with_six_percent_missing() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let mut text = String::from("security_id,date,k,price\n");
    let start = chrono::NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    // 50 days x 5 slots = 250 slots; 15 missing = 6%
    for sec in ["KEEP", "GAPPY"] {
        for d in 0..50u32 {
            let date = start + chrono::Days::new(d as u64);
            for k in 0..5 {
                let missing = sec == "GAPPY" && d % 3 == 0 && d < 45 && k == 2;
                let price = if missing { String::new() } else { format!("{}", 100.0 + d as f64 + 0.1 * k as f64) };
                writeln!(text, "{sec},{date},{k},{price}").unwrap();
            }
        }
    }
    std::fs::write(&raw, text).unwrap();
    let out = dir.path().join("cidr.csv");
    let o = fsvol(&["ingest", "-i", s(&raw), "-o", s(&out), "--min-trading-days", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let panel = std::fs::read_to_string(&out).unwrap();
    assert!(panel.contains("KEEP:") && !panel.contains("GAPPY:"));
    let report = std::fs::read_to_string(dir.path().join("cidr.report.json")).unwrap();
    assert!(report.contains("GAPPY") && report.contains("excess_missing"));
}

#[test]
fn ingest_reports_line_of_malformed_row() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    std::fs::write(&raw, "security_id,date,k,price\nA,2022-01-03,0,10\nA,2022-01-03,1,ten\n").unwrap();
    let o = fsvol(&["ingest", "-i", s(&raw), "-o", s(&dir.path().join("o.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("p.csv");
    std::fs::write(
        &cfg,
        format!("seed = 5\n[simulate]\nphi = [0.4]\nsigma_eps2 = 0.1\nn = 40\nm = 10\noutput = \"{}\"\n", s(&out)),
    )
    .unwrap();
    let o = fsvol(&["--config", s(&cfg), "simulate", "--n", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1 + 7 * 11);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"], 5);
    assert_eq!(truth["params"]["phi"][0], 0.4);

    std::fs::write(&cfg, "[simulate]\nunknown_key = 1\n").unwrap();
    assert_eq!(fsvol(&["--config", s(&cfg), "simulate"]).status.code(), Some(2));
}
