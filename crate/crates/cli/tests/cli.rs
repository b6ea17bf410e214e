//! End-to-end runs of the `depthmend` binary on small synthetic data.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthmend_core::io::{load_color_png, load_depth_png, read_manifest, save_depth_png, write_manifest, ManifestEntry};
use depthmend_core::DepthFrame;
use depthmend_nn::{DenoiserModel, NetworkConfig};

fn depthmend(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthmend"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthetic scene of `frames` frames at `w x h`; returns (manifest, rig).
fn scene(dir: &Path, w: usize, h: usize, frames: usize) -> (PathBuf, PathBuf) {
    let o = depthmend(
        dir,
        &[
            "synth-scene",
            &format!("--scene.width={w}"),
            &format!("--scene.height={h}"),
            &format!("--scene.frames={frames}"),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (dir.join("scene/manifest.txt"), dir.join("scene/rig.txt"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "train.epochz = 3\n").unwrap();
    let o = depthmend(dir.path(), &["--config", s(&cfg), "train"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train.epochz"), "{}", stderr(&o));

    let o = depthmend(dir.path(), &["train", "--train.batch_size", "x"]);
    assert_eq!(code(&o), 2);
    let o = depthmend(dir.path(), &["no-such-command"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_rig_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = scene(dir.path(), 16, 16, 2);
    let rig = dir.path().join("nowhere/rig.txt");
    let o = depthmend(dir.path(), &["register", "--data.manifest", s(&manifest), "--rig.path", s(&rig)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(s(&rig)), "{}", stderr(&o));
}

#[test]
fn identity_rig_registration_returns_input_color() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, rig) = scene(dir.path(), 24, 20, 3);
    let o = depthmend(dir.path(), &["register", "--data.manifest", s(&manifest), "--rig.path", s(&rig)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let input = read_manifest(&manifest).unwrap();
    let out = read_manifest(dir.path().join("registered/manifest.txt")).unwrap();
    assert_eq!(out.len(), 3);
    for (a, b) in input.iter().zip(&out) {
        let ca = load_color_png(a.color.as_ref().unwrap()).unwrap();
        let cb = load_color_png(b.color.as_ref().unwrap()).unwrap();
        assert_eq!(ca, cb);
    }
    let text = std::fs::read_to_string(dir.path().join("registered/manifest.txt")).unwrap();
    assert!(text.starts_with("# seed=0\n"));
}

#[test]
fn targets_of_hole_free_sequence_are_the_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, rig) = scene(dir.path(), 20, 16, 7);
    let o = depthmend(dir.path(), &["make-targets", "--data.manifest", s(&manifest), "--rig.path", s(&rig)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let targets = read_manifest(dir.path().join("targets/manifest.txt")).unwrap();
    // Windows end at t = 4, 5, 6; targets are t - 1.
    assert_eq!(targets.iter().map(|e| e.index).collect::<Vec<_>>(), [3, 4, 5]);
    let input = read_manifest(&manifest).unwrap();
    for t in &targets {
        let original = load_depth_png(&input[t.index as usize].depth).unwrap();
        assert_eq!(load_depth_png(&t.depth).unwrap(), original);
    }
}

#[test]
fn synth_noise_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, rig) = scene(dir.path(), 24, 24, 2);
    let run = |seed: &str, out: &Path| {
        let o = depthmend(out, &["--seed", seed, "synth-noise", "--data.manifest", s(&manifest), "--rig.path", s(&rig)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        read_manifest(out.join("noisy/manifest.txt"))
            .unwrap()
            .iter()
            .map(|e| load_depth_png(&e.depth).unwrap())
            .collect::<Vec<_>>()
    };
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let (fa, fb, fc) = (run("5", &a), run("5", &b), run("6", &c));
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
    // Color paths are carried through for later target generation.
    assert!(read_manifest(a.join("noisy/manifest.txt")).unwrap()[0].color.is_some());
}

#[test]
fn synth_noise_disabled_is_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let plane = DepthFrame::filled(16, 16, 1500);
    let p = dir.path().join("plane.png");
    save_depth_png(&plane, &p).unwrap();
    let manifest = dir.path().join("m.txt");
    write_manifest(&[ManifestEntry { index: 0, depth: p, color: None }], &manifest, None).unwrap();
    let rig = dir.path().join("rig.txt");
    std::fs::write(&rig, depthmend_core::CameraRig::identity(16, 16, 14.0).to_rig_string()).unwrap();
    let o = depthmend(
        dir.path(),
        &[
            "synth-noise",
            "--data.manifest",
            s(&manifest),
            "--rig.path",
            s(&rig),
            "--noise.sigma_base=0",
            "--noise.sigma_s=0",
            "--noise.q_step=0.0000001",
            "--noise.theta_max_deg=90",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = read_manifest(dir.path().join("noisy/manifest.txt")).unwrap();
    assert_eq!(load_depth_png(&out[0].depth).unwrap(), plane);
}

fn log_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# seed="));
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    assert_eq!(r.headers().unwrap(), vec!["epoch", "train_l1", "val_l1", "wall_seconds"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            // Drop the wall-clock column, it never repeats.
            rec.iter().take(3).map(String::from).collect()
        })
        .collect()
}

#[test]
fn train_smoke_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, rig) = scene(dir.path(), 32, 32, 9);
    let run = |out: &Path| {
        let o = depthmend(
            out,
            &[
                "--seed",
                "3",
                "train",
                "--data.manifest",
                s(&manifest),
                "--rig.path",
                s(&rig),
                "--train.epochs=2",
                "--train.batch_size=2",
                "--train.validation_split=0.2",
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(out.join("sred.sredw").is_file());
        log_rows(&out.join("sred_train_log.csv"))
    };
    let (a, b) = (run(&dir.path().join("a")), run(&dir.path().join("b")));
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    for row in &a {
        assert!(row[1].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn restore_with_zero_model_returns_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = scene(dir.path(), 40, 24, 5);
    let weights = dir.path().join("zero.sredw");
    DenoiserModel::zeros(NetworkConfig::default()).unwrap().save(&weights).unwrap();
    let o = depthmend(dir.path(), &["restore", "--data.manifest", s(&manifest), "--model.weights", s(&weights)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let input = read_manifest(&manifest).unwrap();
    let out = read_manifest(dir.path().join("restored_sred/manifest.txt")).unwrap();
    assert_eq!(out.len(), input.len() - 2);
    for e in &out {
        let a = load_depth_png(&e.depth).unwrap();
        let b = load_depth_png(&input[e.index as usize].depth).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.abs_diff(*y) <= 1));
    }
    let timing = std::fs::read_to_string(dir.path().join("restored_sred/timing.csv")).unwrap();
    assert_eq!(timing.lines().filter(|l| !l.starts_with('#')).count(), 1 + out.len());

    let o = depthmend(dir.path(), &["restore", "--data.manifest", s(&manifest), "--model.weights", "missing.sredw"]);
    assert_eq!(code(&o), 3);
    let o = depthmend(
        dir.path(),
        &["restore", "--data.manifest", s(&manifest), "--model.weights", s(&weights), "--model.mode=n2n"],
    );
    assert_eq!(code(&o), 2);
}

fn report_rows(path: &Path) -> Vec<csv::StringRecord> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(Result::unwrap).collect()
}

#[test]
fn evaluate_perfect_restoration() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = scene(dir.path(), 32, 32, 5);
    // The clean frames pose as the sred output and as the reference.
    let entries = read_manifest(&manifest).unwrap();
    let restored = dir.path().join("restored.txt");
    write_manifest(&entries[2..], &restored, None).unwrap();
    let o = depthmend(
        dir.path(),
        &[
            "evaluate",
            "--evaluate.noisy",
            s(&manifest),
            "--evaluate.clean",
            s(&manifest),
            "--evaluate.sred",
            s(&restored),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = report_rows(&dir.path().join("report.csv"));
    let sred: Vec<_> = rows.iter().filter(|r| &r[0] == "sred" && &r[2] != "mean").collect();
    assert_eq!(sred.len(), 3);
    for r in &sred {
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(&r[4], "inf");
        assert!((r[5].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
    for m in ["fmm_bf", "tv"] {
        assert!(rows.iter().any(|r| &r[0] == m), "{m} missing");
    }
    let series = std::fs::read_to_string(dir.path().join("temporal.csv")).unwrap();
    assert!(series.lines().any(|l| l.starts_with("sred,")));
    assert!(series.lines().any(|l| l.starts_with("noisy,")));
}

#[test]
fn evaluate_static_sequence_has_zero_temporal() {
    let dir = tempfile::tempdir().unwrap();
    let frame = DepthFrame::from_fn(16, 16, |x, y| (1000 + 10 * x + y) as u16);
    let entries: Vec<ManifestEntry> = (0..4)
        .map(|i| {
            let p = dir.path().join(format!("f{i}.png"));
            save_depth_png(&frame, &p).unwrap();
            ManifestEntry { index: i, depth: p, color: None }
        })
        .collect();
    let m = dir.path().join("m.txt");
    write_manifest(&entries, &m, None).unwrap();
    let o = depthmend(dir.path(), &["evaluate", "--evaluate.noisy", s(&m), "--evaluate.n2n", s(&m)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = report_rows(&dir.path().join("report.csv"));
    let mean = rows.iter().find(|r| &r[0] == "n2n" && &r[2] == "mean").unwrap();
    assert_eq!(mean[7].parse::<f64>().unwrap(), 0.0);

    // A clean sequence of a different length is a data error.
    let short = dir.path().join("short.txt");
    write_manifest(&entries[..3], &short, None).unwrap();
    let o = depthmend(dir.path(), &["evaluate", "--evaluate.noisy", s(&m), "--evaluate.clean", s(&short)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn bench_reports_every_size() {
    let dir = tempfile::tempdir().unwrap();
    let o = depthmend(
        dir.path(),
        &["bench", "--model.mode=n2n", "--bench.sizes=32x32,64x64,64x48", "--bench.frames=3", "--bench.warmup=1"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(text.contains("# exponent="));
    let rows = report_rows(&dir.path().join("bench.csv"));
    let sizes: Vec<(String, String)> = rows.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
    assert_eq!(sizes, [("32".into(), "32".into()), ("64".into(), "64".into()), ("64".into(), "48".into())]);
}
