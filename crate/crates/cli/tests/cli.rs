use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causal-detector"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn r_value(stdout: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with("R ")).expect("R line");
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn synthetic_train_eval_agree() {
    let dir = TempDir::new().unwrap();
    let rec = dir.path().join("syn.spkc");
    let snap = dir.path().join("det.snap");
    ok(&["synthetic", "--seed", "3", "--duration", "200", "--out", p(&rec)]);
    let trained = ok(&[
        "train",
        p(&rec),
        "--out",
        p(&snap),
        "--window",
        "100:200",
        "--freeze-window",
    ]);
    let eval = ok(&["eval", p(&rec), "--snapshot", p(&snap), "--window", "100:200"]);
    assert_eq!(r_value(&trained), r_value(&eval));
    assert!(r_value(&eval) >= 0.9, "{eval}");

    let series = std::fs::read_to_string(dir.path().join("det.snap.series.csv")).unwrap();
    assert!(series.starts_with("window_start_s,window_end_s,fires,rewards,firing_hz,stability,abs_dw"));
    assert_eq!(series.lines().count(), 1 + 20);
    assert!(dir.path().join("det.snap.resources.csv").exists());

    let again = ok(&["eval", p(&rec), "--snapshot", p(&snap), "--window", "100:200"]);
    assert_eq!(again, eval);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.spkc"), dir.path().join("b.spkc"));
    ok(&["record", "--duration", "20", "--seed", "5", "--out", p(&a)]);
    ok(&["record", "--duration", "20", "--seed", "5", "--out", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let csv = ok(&["export", p(&a)]);
    assert!(csv.starts_with("step,channels,event\n"));
    let steps: Vec<u64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(!steps.is_empty());
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
    assert!(*steps.last().unwrap() < 20_000);
}

#[test]
fn dump_config_round_trips() {
    let dir = TempDir::new().unwrap();
    for cmd in [
        &["train", "--dump-config"][..],
        &["ga", "--dump-config"],
        &["ga", "--desk", "--dump-config"],
        &["synthetic", "--dump-config"],
        &["record", "--dump-config"],
    ] {
        let dumped = ok(cmd);
        assert!(dumped.lines().all(|l| l.contains(" = ")), "{dumped}");
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, &dumped).unwrap();
        let mut args = cmd.to_vec();
        args.extend(["--params", p(&path)]);
        assert_eq!(ok(&args), dumped);
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "w_max = -1\n").unwrap();
    assert_eq!(code(&["train", "--params", p(&cfg), "--dump-config"]), 2);
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&["synthetic", "--params", p(&cfg), "--dump-config"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["record", "--duration", "0", "--out", "x"]), 2);

    let rec = dir.path().join("r.spkc");
    ok(&["synthetic", "--duration", "5", "--out", p(&rec)]);
    let snap = dir.path().join("s.snap");
    assert_eq!(code(&["train", p(&rec), "--out", p(&snap), "--window", "0:999"]), 2);
    assert_eq!(code(&["train", p(&rec), "--out", p(&snap), "--window", "abc"]), 2);
}

#[test]
fn io_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.spkc");
    assert_eq!(code(&["export", p(&missing)]), 3);
    let junk = dir.path().join("junk.spkc");
    std::fs::write(&junk, b"not a record").unwrap();
    assert_eq!(code(&["export", p(&junk)]), 3);
    let rec = dir.path().join("r.spkc");
    ok(&["synthetic", "--duration", "5", "--out", p(&rec)]);
    assert_eq!(code(&["eval", p(&rec), "--snapshot", p(&missing)]), 3);
}

#[test]
fn eval_rejects_channel_mismatch() {
    let dir = TempDir::new().unwrap();
    let syn = dir.path().join("syn.spkc");
    let pong = dir.path().join("pong.spkc");
    let snap = dir.path().join("det.snap");
    ok(&["synthetic", "--duration", "5", "--out", p(&syn)]);
    ok(&["record", "--duration", "5", "--out", p(&pong)]);
    ok(&["train", p(&syn), "--out", p(&snap), "--window", "0:5"]);
    assert_eq!(code(&["eval", p(&pong), "--snapshot", p(&snap), "--window", "0:5"]), 2);
}

#[test]
fn help_documents_csv_columns() {
    let help = ok(&["--help"]);
    assert!(help.contains("generation,best_r,mean_r"));
    assert!(help.contains("Exit codes"));
}
