use std::path::Path;
use std::process::{Command, Output};

fn mimo_ae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimo-ae"))
        .args(args)
        .env_remove("MIMO_AE_THREADS")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn selftest_passes_and_reports_injected_fault() {
    let ok = mimo_ae(&["selftest"]);
    assert_eq!(ok.status.code(), Some(0), "{}", text(&ok));
    assert_eq!(text(&ok).matches("PASS").count(), 5);

    let bad = mimo_ae(&["selftest", "--inject-fault", "gradient"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad).contains("FAIL gradient"), "{}", text(&bad));
}

#[test]
fn train_writes_frames_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = mimo_ae(&["train", "--blocks", "2", "--ndiv", "8", "--epochs", "20", "--seed", "3", "--out", path(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "b00000-ndiv8-snr10.dec.maef",
            "b00000-ndiv8-snr10.enc.maef",
            "b00001-ndiv8-snr10.dec.maef",
            "b00001-ndiv8-snr10.enc.maef",
            "manifest.json",
        ]
    );
    for n in &names {
        assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{n}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["models"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["seed"], 3);

    let frame = mimo_ae::fronthaul::deserialize(&std::fs::read(a.join(&names[0])).unwrap()).unwrap();
    assert_eq!(frame.kind, mimo_ae::fronthaul::FrameKind::Decoder);
    assert_eq!((frame.rows, frame.cols), (128, 16 + 3));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, b"x").unwrap();
    let target = file.join("models");
    let o = mimo_ae(&["train", "--blocks", "1", "--epochs", "1", "--out", path(&target)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("plain-file"), "{}", text(&o));
}

#[test]
fn sweep_is_seed_deterministic_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "sweep".to_string(),
            "--scenarios".into(),
            "full,ae,array,admm".into(),
            "--ndiv".into(),
            "4,8".into(),
            "--snr".into(),
            "0,10".into(),
            "--blocks".into(),
            "2".into(),
            "--epochs".into(),
            "15".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let argv = args(path(out));
        let o = mimo_ae(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    // full + ae/4 + ae/8 + array/4 + array/8 + admm-c4, two SNR points each
    assert_eq!(csv.lines().count(), 1 + 6 * 2);
    assert!(dir.path().join("a.plot.csv").exists());
    assert!(dir.path().join("a.report.txt").exists());

    let r = mimo_ae(&["report", path(&a)]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r));
    let t = text(&r);
    for remark in ["remark (i) ", "remark (ii) ", "remark (iii) "] {
        assert_eq!(t.matches(remark).count(), 1, "{t}");
    }
    let strict = mimo_ae(&["report", "--strict", path(&a)]);
    let any_fail = t.contains(" FAIL ");
    assert_eq!(strict.status.code(), Some(if any_fail { 1 } else { 0 }));
}

#[test]
fn paper_scale_report_prints_formula_factor_and_quoted_value() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    std::fs::write(
        &csv,
        "scenario,n_div,snr_db,evm_percent,n_blocks,seed,recon_mse,paper_factor,actual_overhead\n\
         ae,8,10,20.5,5,0,0.1,7,134144\nfull,1,10,5.0,5,0,,,\n",
    )
    .unwrap();
    let o = mimo_ae(&["report", "--paper-scale", path(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("M=512"), "{t}");
    assert!(t.contains("factor 7.000"), "{t}");
    assert!(t.contains("7.466"), "{t}");
    assert!(t.contains("overhead   134144"), "{t}");
}

#[test]
fn report_rejects_bad_csv_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    std::fs::write(&missing, "scenario,n_div,snr_db,n_blocks,seed,recon_mse,paper_factor,actual_overhead\nfull,1,0,1,0,,,\n").unwrap();
    let o = mimo_ae(&["report", path(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("evm_percent"), "{}", text(&o));

    let garbled = dir.path().join("garbled.csv");
    std::fs::write(
        &garbled,
        "scenario,n_div,snr_db,evm_percent,n_blocks,seed,recon_mse,paper_factor,actual_overhead\n\
         full,1,0,10,1,0,,,\nfull,1,5,ten,1,0,,,\n",
    )
    .unwrap();
    let o = mimo_ae(&["report", path(&garbled)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 3"), "{}", text(&o));

    let o = mimo_ae(&["report", path(&dir.path().join("absent.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[system]\nm = 6\nk = 8\n[sweep]\nblocks = 0\nsnr_db = []\n").unwrap();
    let o = mimo_ae(&["sweep", "--config", path(&cfg), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    let t = text(&o);
    for needle in ["must exceed k", "blocks", "snr_db"] {
        assert!(t.contains(needle), "missing {needle:?} in {t}");
    }
    assert!(!dir.path().join("x.csv").exists());

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[system]\nantennas = 4\n").unwrap();
    let o = mimo_ae(&["sweep", "--config", path(&unknown)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("antennas"), "{}", text(&o));
}

#[test]
fn thread_cap_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_mimo-ae"))
        .args(["sweep", "--scenarios", "full", "--snr", "0", "--blocks", "1", "--out", "/dev/null/x.csv"])
        .env("MIMO_AE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}
