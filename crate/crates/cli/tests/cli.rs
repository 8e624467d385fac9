use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 2
methods = climate, st-mask, pca-qr
sensors = 5
synth.rows = 16
synth.cols = 16
synth.front_band = 6,10
entropy.patch_size = 4
entropy.scale = 4
entropy.min_samples = 16
entropy.ensemble = 2
entropy.smooth_window = 3
train.epochs = 4
train.lambda_ramp_epochs = 2
";

fn fieldsense(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("run.cfg");
    if !config.exists() {
        fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_fieldsense"))
        .arg("--quiet")
        .arg("--config")
        .arg(&config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn subcommands_compose_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let whole = dir.path().join("whole");
    let staged = dir.path().join("staged");
    let w = whole.to_str().unwrap();
    let s = staged.to_str().unwrap();

    let run = fieldsense(dir.path(), &["--out", w, "run"]);
    ok(&run);
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.starts_with("method"), "{table}");
    assert!(table.contains("st-mask"));

    for args in [
        vec!["gen"],
        vec!["entropy"],
        vec!["place"],
        vec!["train", "--method", "st-mask"],
        vec!["baseline", "--method", "climate"],
        vec!["baseline", "--method", "pca-qr"],
        vec!["eval", "--method", "climate"],
        vec!["eval", "--method", "st-mask"],
        vec!["eval", "--method", "pca-qr"],
        vec!["report"],
    ] {
        let mut full = vec!["--out", s];
        full.extend(args);
        ok(&fieldsense(dir.path(), &full));
    }
    assert_eq!(
        fs::read(whole.join("report.csv")).unwrap(),
        fs::read(staged.join("report.csv")).unwrap()
    );
    ok(&fieldsense(dir.path(), &["--out", s, "verify"]));

    fs::write(staged.join("entropy.csv"), "1\n").unwrap();
    let bad = fieldsense(dir.path(), &["--out", s, "verify"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("changed   entropy.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();

    // config error
    fs::write(dir.path().join("bad.cfg"), "split_fraction = 2\n").unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_fieldsense"))
        .args(["--quiet", "--config"])
        .arg(dir.path().join("bad.cfg"))
        .args(["--out", o, "gen"])
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("split_fraction"));

    // scale larger than the patch
    assert_eq!(fieldsense(dir.path(), &["--out", o, "--scale", "9", "gen"]).status.code(), Some(2));
    // unknown method
    assert_eq!(fieldsense(dir.path(), &["--out", o, "eval", "--method", "pod"]).status.code(), Some(2));
    // a baseline through `train`
    assert_eq!(fieldsense(dir.path(), &["--out", o, "train", "--method", "climate"]).status.code(), Some(2));
    // data error: nothing generated yet
    let r = fieldsense(dir.path(), &["--out", o, "entropy"]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("entropy"));
    // missing input file: nonzero exit and no report
    let cfg = dir.path().join("input.cfg");
    fs::write(&cfg, format!("{SMALL}input = {}\n", dir.path().join("missing.fsr").display())).unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_fieldsense"))
        .args(["--quiet", "--config"])
        .arg(&cfg)
        .args(["--out", o, "run"])
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.join("report.csv").exists());
    assert!(fs::read_to_string(out.join("MANIFEST")).unwrap().starts_with("status failed gen"));
}

#[test]
fn seed_flag_changes_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&fieldsense(dir.path(), &["--out", a.to_str().unwrap(), "gen"]));
    ok(&fieldsense(dir.path(), &["--out", b.to_str().unwrap(), "gen"]));
    ok(&fieldsense(dir.path(), &["--out", c.to_str().unwrap(), "--seed", "3", "gen"]));
    let data = |p: &Path| fs::read(p.join("data.fsr")).unwrap();
    assert_eq!(data(&a), data(&b));
    assert_ne!(data(&a), data(&c));
}
