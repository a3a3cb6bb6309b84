use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[run]
seed = 11
train_episodes = 2
train_steps = 4
eval_episodes = 2
eval_steps = 3

[episode]
ues = 4
slots_per_step = 40
throughput_window_slots = 4

[agent]
batch_size = 4

[papr]
blocks = 100
"#;

fn dpws(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpws"))
        .args(args)
        .current_dir(dir)
        .env_remove("DPWS_OUT")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn unknown_subcommand_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpws(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpws(&["train", "--config", "absent.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn bad_config_key_is_line_anchored() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[run]\nseed = 3\n[episode]\nuess = 3\n").unwrap();
    let out = dpws(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn papr_writes_twelve_reproducible_rows() {
    let dir = tiny_dir();
    for out in ["p1", "p2"] {
        let o = dpws(&["papr", "--config", "tiny.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read(dir.path().join("p1/papr.csv"));
    assert_eq!(a.lines().count(), 13);
    assert_eq!(a, read(dir.path().join("p2/papr.csv")));
}

#[test]
fn train_is_byte_reproducible_and_evaluate_consumes_its_checkpoint() {
    let dir = tiny_dir();
    for out in ["t1", "t2"] {
        let o = dpws(&["train", "--config", "tiny.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "training_log.csv",
        "episode_rewards.csv",
        "kpi_steps.csv",
        "switch_events.csv",
        "checkpoint.txt",
        "manifest.toml",
    ] {
        assert_eq!(read(dir.path().join("t1").join(f)), read(dir.path().join("t2").join(f)), "{f}");
    }
    let o = dpws(
        &["evaluate", "--config", "tiny.toml", "--checkpoint", "t1/checkpoint.txt", "--out", "ev"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cmp = read(dir.path().join("ev/comparison.csv"));
    assert_eq!(cmp.lines().count(), 1 + 18);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tiny_dir();
    let o = dpws(&["baseline", "--waveform", "cp-ofdm", "--config", "tiny.toml", "--seed", "99", "--out", "b"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path().join("b/manifest.toml")).contains("seed = 99"));
}

#[test]
fn out_dir_can_come_from_the_environment() {
    let dir = tiny_dir();
    let o = Command::new(env!("CARGO_BIN_EXE_dpws"))
        .args(["papr", "--config", "tiny.toml"])
        .current_dir(dir.path())
        .env("DPWS_OUT", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-env/papr.csv").exists());
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tiny_dir();
    let o = dpws(&["evaluate", "--config", "tiny.toml", "--checkpoint", "none.txt"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

fn write_stats(dir: &Path, values: &[(&str, f64)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut s = String::from("factor,value_bps\n");
    for (k, v) in values {
        s.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(dir.join("stats.csv"), s).unwrap();
}

const LABELS: [&str; 9] = ["p10", "p15", "p20", "p25", "p30", "p35", "p40", "p45", "avg"];

#[test]
fn compare_arithmetic_and_self_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let a: Vec<_> = LABELS.iter().map(|&l| (l, 2000.0)).collect();
    let b: Vec<_> = LABELS.iter().map(|&l| (l, 1000.0)).collect();
    write_stats(&dir.path().join("a"), &a);
    write_stats(&dir.path().join("b"), &b);

    let o = dpws(&["compare", "a", "b", "--out", "ab"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path().join("ab/comparison.csv"));
    let p10: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(p10[1], "p10");
    assert_eq!(p10[4].parse::<f64>().unwrap(), 100.0);
    assert!((p10[5].parse::<f64>().unwrap() - 0.001).abs() < 1e-15);

    let o = dpws(&["compare", "a", "a", "--out", "aa"], dir.path());
    assert!(o.status.success());
    for line in read(dir.path().join("aa/comparison.csv")).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[5].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn compare_rejects_mismatched_factor_sets() {
    let dir = tempfile::tempdir().unwrap();
    let a: Vec<_> = LABELS.iter().map(|&l| (l, 1.0)).collect();
    write_stats(&dir.path().join("a"), &a);
    write_stats(&dir.path().join("b"), &a[..8]);
    let o = dpws(&["compare", "a", "b"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("factor set"));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dpws(&["selftest"], dir.path());
    assert!(o.status.success());
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
