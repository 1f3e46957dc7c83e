use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use splatseg::image::BinaryMask;
use splatseg::io;
use tempfile::TempDir;

fn splatseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatseg"))
        .args(args)
        .env_remove("SPLATSEG_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = splatseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], code: i32) -> String {
    let out = splatseg(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic dataset and a model trained on it with views 3 and 7
/// held out, shared by every test.
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    model: PathBuf,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        let model = root.join("model").join("model.ply");
        ok(&[
            "synth",
            "--out",
            s(&data),
            "--objects",
            "2",
            "--per-object",
            "40",
            "--views",
            "8",
            "--size",
            "32",
        ]);
        ok(&[
            "train",
            "--data",
            s(&data),
            "--out",
            s(&model),
            "--iterations",
            "400",
            "--holdout-every",
            "4",
        ]);
        Fixture {
            _dir: dir,
            data,
            model,
            root,
        }
    })
}

fn json_lines(stdout: &str) -> Vec<serde_json::Value> {
    stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn synth_writes_dataset_layout() {
    let f = fixture();
    for name in [
        "cameras.txt",
        "points.ply",
        "gt_labels.txt",
        "gt_scene.ply",
        "images/view_007.ppm",
        "masks/view_000.pgm",
    ] {
        assert!(f.data.join(name).is_file(), "missing {name}");
    }
    let data = io::read_dataset(&f.data).unwrap();
    assert_eq!(data.cameras.len(), 8);
    assert_eq!(io::read_labels(&f.data.join("gt_labels.txt")).unwrap().len(), 80);
}

#[test]
fn train_writes_model_and_history() {
    let f = fixture();
    let scene = io::read_scene(&f.model).unwrap();
    assert!(!scene.is_empty());
    let csv = std::fs::read_to_string(f.model.with_file_name("loss_history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,camera_id,gaussians,total,rendering,clustering,regularization")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    // Held-out cameras never appear in the history.
    for row in &rows {
        let camera: u32 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(camera != 3 && camera != 7, "{row}");
    }
    let first: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
    let last: f64 = rows[399].split(',').nth(3).unwrap().parse().unwrap();
    assert!(last.is_finite() && last < first);
}

#[test]
fn train_is_deterministic_across_thread_counts() {
    let f = fixture();
    let a = f.root.join("det").join("a.ply");
    let b = f.root.join("det").join("b.ply");
    let base = ["train", "--data", s(&f.data), "--iterations", "60", "--seed", "5"];
    ok(&[&base[..], &["--out", s(&a), "--threads", "1"]].concat());
    ok(&[
        &base[..],
        &[
            "--out",
            s(&b),
            "--threads",
            "3",
            "--history",
            s(&f.root.join("det").join("h.csv")),
        ],
    ]
    .concat());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(a.with_file_name("loss_history.csv")).unwrap(),
        std::fs::read(f.root.join("det").join("h.csv")).unwrap()
    );
}

#[test]
fn segment_then_eval_on_held_out_views() {
    let f = fixture();
    let pred = f.root.join("pred");
    for id in ["3", "7"] {
        let out = ok(&[
            "segment2d",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            id,
            "--t",
            "0.7",
            "--out",
            s(&pred.join(format!("view_00{id}.pgm"))),
        ]);
        assert_eq!(json_lines(&out)[0]["instances"], 2);
    }
    let out = ok(&[
        "eval",
        "--pred-masks",
        s(&pred),
        "--gt-masks",
        s(&f.data.join("masks")),
        "--boundary",
        "3",
    ]);
    let records = json_lines(&out);
    assert_eq!(records.len(), 6);
    let means: HashMap<String, f64> = records
        .iter()
        .filter(|r| r["view"] == "mean")
        .map(|r| (r["metric"].as_str().unwrap().to_string(), r["value"].as_f64().unwrap()))
        .collect();
    assert!(means["miou"] >= 0.85, "{means:?}");
    assert!(means["mbiou"] >= 0.75, "{means:?}");
}

#[test]
fn higher_threshold_refines_instances() {
    let f = fixture();
    let low = f.root.join("t_low.pgm");
    let high = f.root.join("t_high.pgm");
    let common = [
        "segment2d",
        "--model",
        s(&f.model),
        "--data",
        s(&f.data),
        "--camera-id",
        "3",
    ];
    ok(&[&common[..], &["--t", "0.7", "--out", s(&low)]].concat());
    ok(&[&common[..], &["--t", "0.999", "--out", s(&high)]].concat());
    let (low, high) = (io::read_mask(&low).unwrap(), io::read_mask(&high).unwrap());
    let mut parent: HashMap<u32, u32> = HashMap::new();
    for (&h, &l) in high.ids.iter().zip(&low.ids) {
        if h != 0 {
            assert_ne!(l, 0, "pixel labeled at t=0.999 but not at t=0.7");
            assert_eq!(
                *parent.entry(h).or_insert(l),
                l,
                "instance {h} spans two coarser instances"
            );
        }
    }
}

#[test]
fn extract_then_render_subset() {
    let f = fixture();
    let data = io::read_dataset(&f.data).unwrap();
    let gt = &data.masks[3];
    let prompt = gt.binary(gt.labels()[0]);
    let prompt_path = f.root.join("prompt.pgm");
    io::write_binary_mask(&prompt_path, &prompt).unwrap();
    let subset = f.root.join("subset.ply");
    let out = ok(&[
        "extract3d",
        "--model",
        s(&f.model),
        "--data",
        s(&f.data),
        "--camera-id",
        "3",
        "--prompt-mask",
        s(&prompt_path),
        "--t",
        "0.7",
        "--out",
        s(&subset),
    ]);
    let counts = &json_lines(&out)[0];
    let extracted = counts["extracted"].as_u64().unwrap() as usize;
    let scene = io::read_scene(&subset).unwrap();
    assert_eq!(scene.len(), extracted);
    let total = io::read_scene(&f.model).unwrap().len();
    assert!(extracted > 0 && extracted < total, "{extracted} of {total}");

    let image = f.root.join("subset.ppm");
    ok(&[
        "render",
        "--model",
        s(&subset),
        "--cameras",
        s(&f.data.join("cameras.txt")),
        "--camera-id",
        "3",
        "--out",
        s(&image),
    ]);
    let img = io::read_image(&image).unwrap();
    assert_eq!((img.width, img.height), (32, 32));
}

#[test]
fn empty_prompt_reports_no_match() {
    let f = fixture();
    let empty = f.root.join("empty.pgm");
    io::write_binary_mask(&empty, &BinaryMask::new(32, 32)).unwrap();
    let err = fails(
        &[
            "extract3d",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            "0",
            "--prompt-mask",
            s(&empty),
            "--out",
            s(&f.root.join("none.ply")),
        ],
        2,
    );
    assert!(err.contains("no Gaussians match prompt"), "{err}");
}

#[test]
fn usage_errors_exit_1() {
    fails(&["render"], 1);
    fails(&["frobnicate"], 1);
    fails(
        &["segment2d", "--model", "m.ply", "--camera-id", "0", "--out", "x.pgm"],
        1,
    );
    fails(&["eval", "--pred-masks", "a", "--gt-masks", "b", "--boundary", "-2"], 1);
    assert!(splatseg(&["--help"]).status.success());
}

#[test]
fn data_errors_exit_2() {
    let f = fixture();
    let err = fails(
        &[
            "render",
            "--model",
            "/nonexistent/m.ply",
            "--data",
            s(&f.data),
            "--camera-id",
            "0",
            "--out",
            "x.ppm",
        ],
        2,
    );
    assert!(err.contains("/nonexistent/m.ply"), "{err}");

    let cfg = f.root.join("typo.toml");
    std::fs::write(&cfg, "lamda_clustering = 0.2\n").unwrap();
    let err = fails(
        &[
            "train",
            "--data",
            s(&f.data),
            "--config",
            s(&cfg),
            "--out",
            s(&f.root.join("t.ply")),
        ],
        2,
    );
    assert!(err.contains("did you mean `lambda_clustering`"), "{err}");

    let err = fails(
        &[
            "render",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            "99",
            "--out",
            "x.ppm",
        ],
        2,
    );
    assert!(err.contains("no camera with id 99"), "{err}");

    let err = fails(
        &[
            "segment2d",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            "0",
            "--t",
            "1.5",
            "--out",
            "x.pgm",
        ],
        2,
    );
    assert!(err.contains("threshold"), "{err}");
}

#[test]
fn diverging_training_exits_3() {
    let f = fixture();
    let cfg = f.root.join("diverge.toml");
    std::fs::write(&cfg, "lr_color = 1e300\n").unwrap();
    let err = fails(
        &[
            "train",
            "--data",
            s(&f.data),
            "--config",
            s(&cfg),
            "--iterations",
            "20",
            "--out",
            s(&f.root.join("nan.ply")),
        ],
        3,
    );
    assert!(err.contains("non-finite"), "{err}");
}

#[test]
fn threads_env_var_is_a_fallback() {
    let f = fixture();
    let out = Command::new(env!("CARGO_BIN_EXE_splatseg"))
        .args([
            "render",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            "1",
            "--out",
        ])
        .arg(f.root.join("env.ppm"))
        .env("SPLATSEG_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(env!("CARGO_BIN_EXE_splatseg"))
        .args([
            "render",
            "--model",
            s(&f.model),
            "--data",
            s(&f.data),
            "--camera-id",
            "1",
            "--out",
            "x.ppm",
        ])
        .env("SPLATSEG_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
