use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use splatseg::io::{self, find_camera, Config};
use splatseg::metrics::matched_mean_iou;
use splatseg::segmentation::{extract_object_3d, feature_prompt_from_mask, render_instance_masks};
use splatseg::synth::{generate, SyntheticSpec};
use splatseg::trainer::{initialize, train_with, View};
use splatseg::{rasterize, Camera};

use crate::{CameraSource, EvalArgs, Extract3dArgs, RenderArgs, Segment2dArgs, SynthArgs, TrainArgs};

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(io::read_config(p)?),
        None => Ok(Config::default()),
    }
}

fn load_camera(source: &CameraSource, id: u32) -> Result<Camera> {
    let path = match (&source.cameras, &source.data) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("cameras.txt"),
        (None, None) => unreachable!("clap requires one camera source"),
    };
    let cameras = io::read_cameras(&path)?;
    Ok(find_camera(&cameras, id)
        .with_context(|| path.display().to_string())?
        .clone())
}

fn threshold(cfg: &mut Config, t: Option<f64>) -> Result<()> {
    if let Some(t) = t {
        cfg.segment.threshold = t;
    }
    cfg.segment.validate()?;
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        object_count: a.objects,
        gaussians_per_object: a.per_object,
        object_spacing: a.spacing,
        object_radius: a.radius,
        camera_count: a.views,
        image_size: a.size,
        seed: a.seed,
    };
    let data = generate(&spec)?;
    io::write_synthetic(&a.out, &data)?;
    eprintln!(
        "wrote {} views of {} objects ({} Gaussians) to {}",
        data.cameras.len(),
        spec.object_count,
        data.scene.len(),
        a.out.display()
    );
    Ok(())
}

const HISTORY_HEADER: &str = "iteration,camera_id,gaussians,total,rendering,clustering,regularization";

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(n) = a.iterations {
        cfg.train.iterations = n;
    }
    let data = io::read_dataset(&a.data)?;
    let held_out = |i: usize| a.holdout_every.is_some_and(|k| i as u64 % k == k - 1);
    let picked: Vec<usize> = (0..data.cameras.len()).filter(|&i| !held_out(i)).collect();
    if picked.is_empty() {
        bail!("{} contains no training views", a.data.display());
    }
    let views: Vec<View> = picked.iter().map(|&i| data.view(i)).collect();
    let init = initialize(&data.points, data.point_colors.as_deref(), cfg.train.seed)?;
    eprintln!(
        "training {} iterations on {} views from {} points",
        cfg.train.iterations,
        views.len(),
        init.len()
    );
    let every = (cfg.train.iterations / 10).max(1);
    let out = train_with(init, &views, &cfg.train, &cfg.loss, |r| {
        if (r.iteration + 1) % every == 0 {
            eprintln!(
                "  iter {:>6}  loss {:.5}  gaussians {}",
                r.iteration + 1,
                r.total,
                r.gaussians
            );
        }
    })?;

    let mut csv = String::from(HISTORY_HEADER);
    csv.push('\n');
    for r in &out.history {
        let camera_id = data.cameras[picked[r.view]].id;
        writeln!(
            csv,
            "{},{camera_id},{},{:?},{:?},{:?},{:?}",
            r.iteration, r.gaussians, r.total, r.rendering, r.clustering, r.regularization
        )?;
    }
    let history = a
        .history
        .unwrap_or_else(|| a.out.parent().unwrap_or(Path::new("")).join("loss_history.csv"));
    io::write_scene(&a.out, &out.scene)?;
    fs::write(&history, csv).with_context(|| history.display().to_string())?;
    let last = out.history.last().map_or(0.0, |r| r.total);
    eprintln!(
        "final loss {last:.5}; wrote {} and {}",
        a.out.display(),
        history.display()
    );
    Ok(())
}

pub fn render(a: RenderArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let scene = io::read_scene(&a.model)?;
    let cam = load_camera(&a.source, a.camera_id)?;
    let out = rasterize(&scene, &cam, cfg.train.background)?;
    io::write_image(&a.out, &out.color_image())?;
    Ok(())
}

pub fn segment2d(a: Segment2dArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    threshold(&mut cfg, a.t)?;
    let scene = io::read_scene(&a.model)?;
    let cam = load_camera(&a.source, a.camera_id)?;
    let mask = render_instance_masks(&scene, &cam, &cfg.segment)?;
    io::write_mask(&a.out, &mask)?;
    println!(
        "{}",
        json!({ "camera_id": a.camera_id, "instances": mask.labels().len() })
    );
    Ok(())
}

pub fn extract3d(a: Extract3dArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    threshold(&mut cfg, a.t)?;
    let scene = io::read_scene(&a.model)?;
    let cam = load_camera(&a.source, a.camera_id)?;
    let prompt_mask = io::read_binary_mask(&a.prompt_mask)?;
    let prompt = feature_prompt_from_mask(&scene, &cam, &prompt_mask, &cfg.segment)?;
    let ex = extract_object_3d(&scene, &prompt, &cfg.segment)?;
    io::write_scene(&a.out, &ex.scene)?;
    println!(
        "{}",
        json!({
            "selected": ex.selected.len(),
            "survivors": ex.survivors.len(),
            "extracted": ex.indices.len(),
        })
    );
    Ok(())
}

fn mask_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| dir.display().to_string())?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .with_context(|| dir.display().to_string())?;
    files.retain(|p| p.extension().is_some_and(|e| e == "pgm"));
    files.sort();
    Ok(files)
}

/// Scores every ground-truth mask that has a same-named prediction. Prints
/// one JSON object per view and metric, then the means.
pub fn eval(a: EvalArgs) -> Result<()> {
    if a.boundary == 0 {
        bail!("--boundary must be at least 1");
    }
    let (mut miou, mut mbiou, mut views) = (0.0, 0.0, 0usize);
    for gt_path in mask_files(&a.gt_masks)? {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = a.pred_masks.join(name);
        if !pred_path.exists() {
            continue;
        }
        let gt = io::read_mask(&gt_path)?;
        if gt.labels().is_empty() {
            eprintln!("skipping {}: no labeled instances", gt_path.display());
            continue;
        }
        let pred = io::read_mask(&pred_path)?;
        let view = name.to_string_lossy();
        let plain = matched_mean_iou(&pred, &gt, None).with_context(|| view.to_string())?;
        let band = matched_mean_iou(&pred, &gt, Some(a.boundary)).with_context(|| view.to_string())?;
        println!("{}", json!({ "metric": "miou", "view": view, "value": plain }));
        println!("{}", json!({ "metric": "mbiou", "view": view, "value": band }));
        miou += plain;
        mbiou += band;
        views += 1;
    }
    if views == 0 {
        bail!(
            "no mask in {} has a same-named prediction in {}",
            a.gt_masks.display(),
            a.pred_masks.display()
        );
    }
    let n = views as f64;
    println!(
        "{}",
        json!({ "metric": "miou", "view": "mean", "value": miou / n, "views": views })
    );
    println!(
        "{}",
        json!({ "metric": "mbiou", "view": "mean", "value": mbiou / n, "views": views })
    );
    Ok(())
}
