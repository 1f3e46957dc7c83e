//! File formats and the on-disk dataset layout.
//!
//! ```text
//! DIR/cameras.txt           camera list
//! DIR/images/view_###.ppm   color images, one per camera id
//! DIR/masks/view_###.pgm    16-bit instance masks, one per camera id
//! DIR/points.ply            initialization points
//! DIR/gt_labels.txt         ground-truth object label per Gaussian (synthetic only)
//! DIR/gt_scene.ply          ground-truth scene (synthetic only)
//! ```

pub mod cameras;
pub mod config;
pub mod ply;
pub mod pnm;

use std::fs;
use std::path::{Path, PathBuf};

pub use cameras::{decode_cameras, encode_cameras, find_camera, CameraEntry};
pub use config::{decode_config, encode_config, Config};
pub use ply::{decode_points, decode_scene, encode_points, encode_scene, PointCloud};
pub use pnm::{decode_binary_mask, decode_image, decode_mask, encode_binary_mask, encode_image, encode_mask};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, InstanceMask, RgbImage};
use crate::model::SceneModel;
use crate::synth::SyntheticDataset;
use crate::trainer::View;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|e| {
        Error::parse(
            path.display().to_string(),
            e.utf8_error().valid_up_to(),
            "file is not UTF-8",
        )
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reading from a file attaches the path to parse errors.
fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse {
            context,
            offset,
            message,
        } => Error::Parse {
            context: format!("{context} {}", path.display()),
            offset,
            message,
        },
        other => other,
    })
}

pub fn read_scene(path: &Path) -> Result<SceneModel> {
    with_path(path, decode_scene(&read(path)?))
}

pub fn write_scene(path: &Path, scene: &SceneModel) -> Result<()> {
    write(path, &encode_scene(scene))
}

pub fn read_points(path: &Path) -> Result<PointCloud> {
    with_path(path, decode_points(&read(path)?))
}

pub fn write_points(path: &Path, points: &[[f64; 3]], colors: Option<&[[f64; 3]]>) -> Result<()> {
    write(path, &encode_points(points, colors))
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraEntry>> {
    with_path(path, decode_cameras(&read_text(path)?))
}

pub fn write_cameras(path: &Path, cameras: &[CameraEntry]) -> Result<()> {
    write(path, encode_cameras(cameras).as_bytes())
}

pub fn read_mask(path: &Path) -> Result<InstanceMask> {
    with_path(path, decode_mask(&read(path)?))
}

pub fn write_mask(path: &Path, mask: &InstanceMask) -> Result<()> {
    write(path, &encode_mask(mask)?)
}

pub fn read_binary_mask(path: &Path) -> Result<BinaryMask> {
    with_path(path, decode_binary_mask(&read(path)?))
}

pub fn write_binary_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write(path, &encode_binary_mask(mask))
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    with_path(path, decode_image(&read(path)?))
}

pub fn write_image(path: &Path, image: &RgbImage) -> Result<()> {
    write(path, &encode_image(image))
}

pub fn read_config(path: &Path) -> Result<Config> {
    with_path(path, decode_config(&read_text(path)?))
}

pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() {
            let label = body
                .parse()
                .map_err(|_| Error::parse(path.display().to_string(), offset, format!("bad label `{body}`")))?;
            labels.push(label);
        }
        offset += line.len();
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write(path, text.as_bytes())
}

pub fn view_file_name(id: u32, extension: &str) -> String {
    format!("view_{id:03}.{extension}")
}

pub fn image_path(dir: &Path, id: u32) -> PathBuf {
    dir.join("images").join(view_file_name(id, "ppm"))
}

pub fn mask_path(dir: &Path, id: u32) -> PathBuf {
    dir.join("masks").join(view_file_name(id, "pgm"))
}

/// A dataset directory loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub cameras: Vec<CameraEntry>,
    pub images: Vec<RgbImage>,
    pub masks: Vec<InstanceMask>,
    pub points: Vec<[f64; 3]>,
    pub point_colors: Option<Vec<[f64; 3]>>,
}

impl Dataset {
    pub fn view(&self, i: usize) -> View {
        View {
            camera: self.cameras[i].camera.clone(),
            image: self.images[i].clone(),
            mask: self.masks[i].clone(),
        }
    }
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let cameras = read_cameras(&dir.join("cameras.txt"))?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut masks = Vec::with_capacity(cameras.len());
    for c in &cameras {
        images.push(read_image(&image_path(dir, c.id))?);
        masks.push(read_mask(&mask_path(dir, c.id))?);
    }
    let (points, point_colors) = read_points(&dir.join("points.ply"))?;
    Ok(Dataset {
        cameras,
        images,
        masks,
        points,
        point_colors,
    })
}

/// Writes a synthetic dataset; camera ids are the view indices.
pub fn write_synthetic(dir: &Path, data: &SyntheticDataset) -> Result<()> {
    let cameras: Vec<CameraEntry> = data
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| CameraEntry {
            id: i as u32,
            camera: c.clone(),
        })
        .collect();
    write_cameras(&dir.join("cameras.txt"), &cameras)?;
    for (i, (image, mask)) in data.images.iter().zip(&data.masks).enumerate() {
        write_image(&image_path(dir, i as u32), image)?;
        write_mask(&mask_path(dir, i as u32), mask)?;
    }
    write_points(&dir.join("points.ply"), &data.points, Some(&data.point_colors))?;
    write_labels(&dir.join("gt_labels.txt"), &data.labels)?;
    write_scene(&dir.join("gt_scene.ply"), &data.scene)
}
