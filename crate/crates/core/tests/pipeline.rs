use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use infonet_core::io;
use infonet_core::pipeline::{run_pipeline, write_synth, Layout, Manifest, RunConfig, SynthRequest, WindowStatus};
use infonet_core::synth::CouplingSpec;

fn tapes(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let spec = CouplingSpec::new(10, vec![(0, 1, 1, 0.3), (2, 3, 1, 0.4), (3, 8, 1, 0.3)], vec![1.0; 10], 2).unwrap();
    write_synth(
        dir,
        &SynthRequest::Tapes {
            spec,
            monday: NaiveDate::from_ymd_opt(2024, 3, 4).unwrap(),
            weeks: 4,
            scale: 2e-3,
            quote: "EUR".into(),
        },
    )
    .unwrap();
    fs::write(
        dir.join("registry.csv"),
        "ticker,class,first_day\nX0,coin,20150101\nX1,coin,20160101\nX2,token,20170101\nX3,token,20180101\n\
         X4,stablecoin,20190101\nX5,stablecoin,20190601\nX6,fiat,20150101\nX7,coin,20200101\nX8,token,20210101\n",
    )
    .unwrap();
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            fs::copy(&p, &dest).unwrap();
        }
    }
}

#[test]
fn end_to_end_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    tapes(&data);
    let mut config = RunConfig::default();
    config.input.dir = Some(data.clone());
    config.input.fiat = "EUR".into();
    config.run.out = dir.path().join("out");
    config.oinfo.n_max = 4;

    let run = run_pipeline(&config);
    assert_eq!(run.exit_code, 0);
    assert_eq!(run.computed, vec![0, 1, 2, 3]);
    let layout = Layout::new(&config.run.out);

    // cardinalities
    for w in 0..4 {
        assert!(layout.edges(w).exists());
        let m = io::read_multiplets(&layout.multiplets(w)).unwrap();
        // 10 targets x 2 kinds x sizes 2..=4
        assert_eq!(m.len(), 60);
    }
    assert!(!layout.edges(4).exists());
    let (labels, wc) = io::read_window_corr(&layout.window_corr()).unwrap();
    assert_eq!(labels, vec!["0", "1", "2", "3"]);
    assert_eq!(wc.shape(), (4, 4));
    let indicators = fs::read_to_string(layout.indicators()).unwrap();
    assert_eq!(indicators.lines().count(), 5);
    assert!(indicators.lines().nth(1).unwrap().starts_with("0,2024-03-04,"));
    let fractions = fs::read_to_string(layout.class_fractions()).unwrap();
    assert_eq!(fractions.lines().count(), 1 + 2 * 3);
    let summary = fs::read_to_string(layout.age_strength_summary()).unwrap();
    assert!(summary.lines().count() >= 2);

    let manifest = Manifest::load(&layout.manifest()).unwrap();
    assert!(manifest.windows.iter().all(|w| w.status == WindowStatus::Complete));
    assert_eq!(manifest.config, config);
    assert_eq!(manifest.config_hash, config.hash());
    assert!(manifest.summaries_complete);

    // idempotence
    let bytes = fs::read(layout.manifest()).unwrap();
    let again = run_pipeline(&config);
    assert_eq!(again.exit_code, 0);
    assert!(again.computed.is_empty());
    assert_eq!(fs::read(layout.manifest()).unwrap(), bytes);

    // a deleted output recomputes only its window
    fs::remove_file(layout.multiplets(2)).unwrap();
    let redo = run_pipeline(&config);
    assert_eq!(redo.computed, vec![2]);
    assert_eq!(fs::read(layout.manifest()).unwrap(), bytes);

    // a changed setting recomputes everything
    let mut looser = config.clone();
    looser.granger.alpha = 0.05;
    let changed = run_pipeline(&looser);
    assert_eq!(changed.computed, vec![0, 1, 2, 3]);
    assert_ne!(Manifest::load(&layout.manifest()).unwrap().config_hash, manifest.config_hash);
    assert_eq!(run_pipeline(&config).computed.len(), 4);
    assert_eq!(fs::read(layout.manifest()).unwrap(), bytes);

    // a corrupted panel only fails its own window
    let broken = dir.path().join("broken");
    copy_dir(&config.run.out, &broken);
    let mut bad = config.clone();
    bad.run.out = broken.clone();
    fs::write(Layout::new(&broken).panel(1), "X0,X1\n0.1,not-a-number\n").unwrap();
    fs::remove_file(Layout::new(&broken).edges(1)).unwrap();
    let partial = run_pipeline(&bad);
    assert_eq!(partial.exit_code, 1);
    assert_eq!(partial.computed, vec![1]);
    let m = partial.manifest.unwrap();
    assert_eq!(m.failed_windows(), vec![1]);
    assert!(m.windows[1].error.as_deref().unwrap().contains("panel_1.csv"));
    assert!(m.summaries_complete);
    let (labels, _) = io::read_window_corr(&Layout::new(&broken).window_corr()).unwrap();
    assert_eq!(labels, vec!["0", "2", "3"]);

    // strict mode skips the summaries
    bad.run.strict = true;
    fs::remove_file(Layout::new(&broken).window_corr()).unwrap();
    let strict = run_pipeline(&bad);
    assert_eq!(strict.exit_code, 1);
    assert!(!strict.manifest.unwrap().summaries_complete);
    assert!(!Layout::new(&broken).window_corr().exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.input.dir = Some(dir.path().to_path_buf());
    c.run.out = dir.path().join("out");
    c.oinfo.n_max = 9;
    assert_eq!(run_pipeline(&c).exit_code, 2);
    c.oinfo.n_max = 5;
    c.granger.alpha = 0.0;
    assert_eq!(run_pipeline(&c).exit_code, 2);
    assert!(!c.run.out.exists());
}

#[test]
fn missing_trade_files_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.input.dir = Some(dir.path().to_path_buf());
    c.run.out = dir.path().join("out");
    assert_eq!(run_pipeline(&c).exit_code, 1);
}
