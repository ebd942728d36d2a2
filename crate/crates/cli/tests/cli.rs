use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn infonet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infonet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tapes(dir: &Path) {
    let o = infonet(&[
        "synth", "tapes", "--vars", "6", "--weeks", "2", "--coupling", "0:1:1:0.4", "--coupling", "2:3:1:0.3", "--seed", "3",
        "--out", s(dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const FAST: [&str; 4] = ["--pmax", "5", "--nmax", "3"];

#[test]
fn stages_reproduce_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tapes(&data);
    let full = dir.path().join("full");
    let staged = dir.path().join("staged");

    let mut args = vec!["run", "--input", s(&data), "--out", s(&full)];
    args.extend(FAST);
    let o = infonet(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for stage in ["ingest", "gc-network", "oinfo-scan", "net-stats", "window-corr", "indicators"] {
        let mut args = vec![stage, "--input", s(&data), "--out", s(&staged)];
        args.extend(FAST);
        let o = infonet(&args);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut a = tree(&full);
    assert!(a.remove("manifest.json").is_some());
    let b = tree(&staged);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    assert!(a == b, "staged outputs differ from the full run");
    assert!(a.contains_key("networks/edges_1.csv"));
    assert!(!a.contains_key("networks/edges_2.csv"));

    // single-window recomputation
    fs::remove_file(staged.join("networks/edges_0.csv")).unwrap();
    let mut args = vec!["gc-network", "--window", "0", "--out", s(&staged)];
    args.extend(FAST);
    assert_eq!(code(&infonet(&args)), 0);
    assert_eq!(fs::read(staged.join("networks/edges_0.csv")).unwrap(), a["networks/edges_0.csv"]);
    args[2] = "7";
    assert_eq!(code(&infonet(&args)), 1);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tapes(&data);
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "[input]\ndir = {:?}\n[granger]\nalpha = 0.05\np_max = 4\n[oinfo]\nn_max = 3\n[run]\nout = {:?}\n",
            s(&data),
            s(&out)
        ),
    )
    .unwrap();
    let o = infonet(&["run", "--config", s(&cfg), "--alpha", "0.02"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"alpha\": 0.02"));
    assert!(manifest.contains("\"p_max\": 4"));

    // rerun reuses everything
    let before = fs::read(out.join("manifest.json")).unwrap();
    let o = infonet(&["run", "--config", s(&cfg), "--alpha", "0.02"]);
    assert_eq!(code(&o), 0);
    assert!(fs::read(out.join("manifest.json")).unwrap() == before, "manifest changed on rerun");

    // corrupted panel: exit 1, other windows intact
    fs::write(out.join("panels/panel_0.csv"), "X0,X1\n1,2\n").unwrap();
    fs::remove_file(out.join("networks/gc_0.csv")).unwrap();
    let o = infonet(&["run", "--config", s(&cfg), "--alpha", "0.02"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("window 0 failed"));
    assert!(out.join("networks/gc_1.csv").exists());
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&infonet(&["run", "--input", d, "--alpha", "1.5"])), 2);
    assert_eq!(code(&infonet(&["run", "--input", d, "--nmax", "9"])), 2);
    assert_eq!(code(&infonet(&["run", "--input", "/no/such/dir"])), 2);
    assert_eq!(code(&infonet(&["run"])), 2);
    assert_eq!(code(&infonet(&["run", "--config", "/no/such.toml"])), 2);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[granger]\nalfa = 0.1\n").unwrap();
    assert_eq!(code(&infonet(&["run", "--config", s(&cfg)])), 2);
    assert_eq!(code(&infonet(&["frobnicate"])), 2);
    assert_eq!(code(&infonet(&["synth", "var", "--vars", "2", "--coupling", "0:1", "--out", d])), 2);
    assert_eq!(code(&infonet(&["synth", "var", "--vars", "1", "--coupling", "0:0:1:1.5", "--out", d])), 2);
}

#[test]
fn synth_planted_writes_panel_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = infonet(&[
        "synth", "planted", "--kind", "synergy", "--extra", "2", "--length", "10000", "--seed", "9", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.trim().ends_with("panel_0.csv"));
    let panel = fs::read_to_string(dir.path().join("panel_0.csv")).unwrap();
    assert_eq!(panel.lines().next().unwrap(), "y,x1,x2,d1,d2");
    assert_eq!(panel.lines().count(), 10_001);
    let meta = fs::read_to_string(dir.path().join("synth.json")).unwrap();
    assert!(meta.contains("chacha8"));
    assert!(meta.contains("synergistic"));

    let again = tempfile::tempdir().unwrap();
    infonet(&[
        "synth", "planted", "--kind", "synergistic", "--extra", "2", "--length", "10000", "--seed", "9", "--out",
        s(again.path()),
    ]);
    assert_eq!(fs::read_to_string(again.path().join("panel_0.csv")).unwrap(), panel);
}
