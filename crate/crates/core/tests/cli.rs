use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"
seed = 3
meta_epochs = 4
adapt_epochs = 10
sicnet_epochs = 10
n_symbols = 5000
realizations = 2
snr_grid = [0.0, 9.0, 18.0]
pilot_grid = [1, 4]
k_grid = [2, 4]
timing_repeats = 1
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meta-sicnet"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(sub: &str, config: &Path, out: &Path, threads: &str) -> std::process::Output {
    bin()
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", threads])
        .output()
        .unwrap()
}

#[test]
fn ser_vs_snr_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = run("ser-vs-snr", &cfg, &out, "2");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("results.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "experiment", "sweep_var", "sweep_value", "detector", "device", "ser", "stderr", "n_symbols", "pilots",
            "snr_db", "k_tasks", "seed", "wall_ms"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 3 * 2);
    for r in &rows {
        let ser: f64 = r[5].parse().unwrap();
        let se: f64 = r[6].parse().unwrap();
        let n: f64 = r[7].parse().unwrap();
        assert!((0.0..=1.0).contains(&ser));
        assert!((se - (ser * (1.0 - ser) / n).sqrt()).abs() < 1e-15);
        assert_eq!(&r[11], "3");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "ser_vs_snr");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["meta_epochs"], 4);
    // every detector at a sweep point saw the same stream
    let sums = manifest["stream_checksums"].as_array().unwrap();
    assert_eq!(sums.len(), 9);
    for chunk in sums.chunks(3) {
        assert!(chunk.iter().all(|c| c["checksum"] == chunk[0]["checksum"]));
    }
    assert!(out.join("meta_state.bin").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for sub in ["ser-vs-pilots", "ser-vs-tasks", "train-meta", "train-sicnet", "complexity"] {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        assert!(run(sub, &cfg, &a, "1").status.success());
        assert!(run(sub, &cfg, &b, "3").status.success());
        let (x, y) = (std::fs::read(a.join("results.csv")).unwrap(), std::fs::read(b.join("results.csv")).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{sub}");
    }
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ser-vs-snr", &dir.path().join("nope.toml"), dir.path(), "1");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nlearning_rate = 0.1\n");
    assert_eq!(run("ser-vs-pilots", &cfg, dir.path(), "1").status.code(), Some(2));
}

#[test]
fn negative_pilot_count_exits_3_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\npilot_grid = [1, -2]\n");
    let o = run("ser-vs-pilots", &cfg, dir.path(), "1");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pilot_grid"));
}

#[test]
fn odd_task_count_and_kind_mismatch_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nk_grid = [2, 5]\n");
    assert_eq!(run("ser-vs-tasks", &cfg, dir.path(), "1").status.code(), Some(3));
    let cfg = write_config(dir.path(), "seed = 1\nexperiment = \"complexity\"\n");
    let o = run("ser-vs-snr", &cfg, dir.path(), "1");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}

#[test]
fn run_config_dispatches_on_file_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!("{SMALL}experiment = \"train_sicnet\"\nout = {:?}\n", out.to_str().unwrap());
    let cfg = write_config(dir.path(), &text);
    assert_eq!(meta_sicnet::experiments::run_config(&cfg), 0);
    assert!(out.join("results.csv").exists());
    assert!(out.join("sicnet.bin").exists());
    assert_eq!(meta_sicnet::experiments::run_config(&dir.path().join("missing.toml")), 2);
}
