use std::path::Path;
use std::process::{Command, Output};

use scratchdet::backbone::BackboneConfig;
use scratchdet::data::SceneConfig;
use scratchdet::detector::HeadConfig;
use scratchdet::run::{DataSource, RunConfig, TrainConfig};

fn scratchdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scratchdet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scene() -> SceneConfig {
    SceneConfig {
        image_size: 16,
        num_images: 10,
        objects_per_image: (1, 2),
        size_distribution: (0.08, 0.5),
        small_object_fraction: 0.2,
        eval_fraction: 0.3,
        seed: 4,
        ..SceneConfig::default()
    }
}

fn run_config(data: DataSource, max_steps: u64) -> RunConfig {
    RunConfig {
        backbone: BackboneConfig {
            first_conv_kernel: 3,
            first_conv_stride: 1,
            root_depth: 1,
            use_first_maxpool: true,
            stage_channels: vec![4, 8],
            stage_blocks: vec![1, 1],
            bn_in_backbone: true,
            input_size: 16,
            target_ladder: vec![4, 2, 1],
            extra_channels: 8,
            input_channels: 3,
        },
        head: HeadConfig {
            num_classes: 4,
            ..HeadConfig::default()
        },
        train: TrainConfig {
            batch_size: 2,
            max_steps,
            checkpoint_every: 5,
            ..TrainConfig::default()
        },
        data,
        eval: Default::default(),
        landscape: Default::default(),
    }
}

fn write_json(path: &Path, v: serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn digest(dir: &Path) -> String {
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m["digest"].as_str().unwrap().to_string()
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("scene.json");
    write_json(&cfg, serde_json::json!(scene()));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = scratchdet(&["gen-data", "--config", p(&cfg), "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(digest(&a), digest(&b));
    let c = tmp.path().join("c");
    let o = scratchdet(&[
        "gen-data",
        "--config",
        p(&cfg),
        "--out",
        p(&c),
        "--seed",
        "99",
    ]);
    assert!(o.status.success());
    assert_ne!(digest(&a), digest(&c));
}

#[test]
fn malformed_config_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"image_size\": 16,\n  \"num_images\": ,\n}\n").unwrap();
    let o = scratchdet(&[
        "gen-data",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn bad_ladder_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = run_config(DataSource::Scene { scene: scene() }, 2);
    cfg.backbone.target_ladder = vec![5, 2, 1];
    let path = tmp.path().join("run.json");
    write_json(&path, serde_json::json!(cfg));
    let o = scratchdet(&[
        "train",
        "--config",
        p(&path),
        "--out",
        p(&tmp.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_resume_and_eval_on_a_generated_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_cfg = tmp.path().join("scene.json");
    write_json(&scene_cfg, serde_json::json!(scene()));
    let data = tmp.path().join("data");
    assert!(
        scratchdet(&["gen-data", "--config", p(&scene_cfg), "--out", p(&data)])
            .status
            .success()
    );

    // Relative manifest paths resolve against the config's directory.
    let cfg = run_config(
        DataSource::Manifest {
            manifest: "data".into(),
        },
        10,
    );
    let cfg_path = tmp.path().join("run.json");
    write_json(&cfg_path, serde_json::json!(cfg));

    let full = tmp.path().join("full");
    let o = scratchdet(&["train", "--config", p(&cfg_path), "--out", p(&full)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = std::fs::read_to_string(full.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 11);

    let resumed = tmp.path().join("resumed");
    let ck = full.join("ckpt_000005.sdck");
    let o = scratchdet(&[
        "train",
        "--config",
        p(&cfg_path),
        "--out",
        p(&resumed),
        "--resume",
        p(&ck),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        trace,
        std::fs::read_to_string(resumed.join("trace.csv")).unwrap()
    );

    let ev = tmp.path().join("eval");
    let o = scratchdet(&[
        "eval",
        "--checkpoint",
        p(&full.join("final.sdck")),
        "--out",
        p(&ev),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(ev.join("eval.json")).unwrap()).unwrap();
    assert!(report.get("map").is_some());
    assert!(ev.join("detections.jsonl").exists());

    let merged = tmp.path().join("merged.csv");
    let o = scratchdet(&[
        "landscape",
        "--out",
        p(&merged),
        p(&full.join("trace.csv")),
        &format!("again={}", p(&resumed.join("trace.csv"))),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&merged).unwrap();
    assert_eq!(text.lines().next(), Some("run,step,metric,value"));
    assert!(text.lines().nth(1).unwrap().starts_with("full,1,loss,"));
    let full_rows = text.lines().filter(|l| l.starts_with("full,")).count();
    assert_eq!(
        full_rows,
        text.lines().filter(|l| l.starts_with("again,")).count()
    );
}

#[test]
fn corrupted_checkpoint_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = run_config(DataSource::Scene { scene: scene() }, 2);
    let cfg_path = tmp.path().join("run.json");
    write_json(&cfg_path, serde_json::json!(cfg));
    let out = tmp.path().join("r");
    assert!(
        scratchdet(&["train", "--config", p(&cfg_path), "--out", p(&out)])
            .status
            .success()
    );
    let ck = out.join("final.sdck");
    let mut bytes = std::fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&ck, bytes).unwrap();
    let o = scratchdet(&[
        "eval",
        "--checkpoint",
        p(&ck),
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn landscape_rejects_foreign_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "step,loss\n1,2.0\n").unwrap();
    let o = scratchdet(&["landscape", "--out", p(&tmp.path().join("m.csv")), p(&bad)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scene: SceneConfig =
        serde_json::from_slice(&std::fs::read(dir.join("scene.json")).unwrap()).unwrap();
    scene.validate().unwrap();
    let run = RunConfig::load(&dir.join("train.json")).unwrap();
    assert_eq!(run.backbone, BackboneConfig::desk());
    for grid in ["bn_grid.json", "stem_grid.json"] {
        let g = scratchdet::run::GridConfig::load(&dir.join(grid)).unwrap();
        assert!(!g.cells().is_empty());
    }
}
