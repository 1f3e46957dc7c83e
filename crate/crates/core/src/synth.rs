//! Deterministic synthetic scenes with known object identity.
//!
//! Objects are blobs of Gaussians with distinct saturated colors, placed on a
//! ring with a fixed center-to-center spacing. Cameras sit on an elevated
//! ring looking at the centroid. Ground-truth images come from the reference
//! renderer; each mask pixel carries the object label of the splat with the
//! largest compositing weight, and every view's labels are then shuffled by
//! its own bijection.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{InstanceMask, RgbImage};
use crate::model::{logit, Camera, Gaussian, SceneModel, FEATURE_DIM};
use crate::rasterizer::reference::{pixel_weights, rasterize_reference};
use crate::rng::stream_rng;
use crate::trainer::{View, DEFAULT_BACKGROUND};

/// Pixels whose alpha falls below this are unlabeled.
pub const FOREGROUND_ALPHA: f64 = 0.5;

const PALETTE: [[f64; 3]; 6] = [
    [0.95, 0.1, 0.1],
    [0.1, 0.9, 0.15],
    [0.15, 0.2, 0.95],
    [0.95, 0.85, 0.1],
    [0.1, 0.85, 0.9],
    [0.9, 0.15, 0.85],
];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub object_count: usize,
    pub gaussians_per_object: usize,
    /// Distance between neighboring object centers.
    pub object_spacing: f64,
    /// Radius of the ball holding each object's Gaussian centers.
    pub object_radius: f64,
    pub camera_count: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            object_count: 3,
            gaussians_per_object: 100,
            object_spacing: 1.2,
            object_radius: 0.35,
            camera_count: 20,
            image_size: 64,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.object_count == 0 || self.gaussians_per_object == 0 || self.camera_count == 0 || self.image_size == 0 {
            return Err(Error::InvalidInput("synthetic spec counts must be positive".into()));
        }
        if !(self.object_radius > 0.0) {
            return Err(Error::InvalidInput("object_radius must be positive".into()));
        }
        if self.object_count > 1 && !(self.object_spacing > 3.0 * self.object_radius) {
            return Err(Error::InvalidInput(format!(
                "object_spacing {} must exceed 3 × object_radius ({})",
                self.object_spacing,
                3.0 * self.object_radius
            )));
        }
        Ok(())
    }

    pub fn object_centers(&self) -> Vec<Vector3<f64>> {
        let k = self.object_count;
        if k == 1 {
            return vec![Vector3::zeros()];
        }
        let ring = self.object_spacing / (2.0 * (PI / k as f64).sin());
        (0..k)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / k as f64;
                Vector3::new(ring * a.cos(), ring * a.sin(), 0.0)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub scene: SceneModel,
    /// Object label (1-based) of every Gaussian in `scene`.
    pub labels: Vec<u32>,
    pub cameras: Vec<Camera>,
    pub images: Vec<RgbImage>,
    /// Per-view masks with shuffled IDs.
    pub masks: Vec<InstanceMask>,
    /// The per-view bijection applied to object labels: `perms[v][label - 1]`.
    pub perms: Vec<Vec<u32>>,
    /// Sparse initialization points: jittered Gaussian centers.
    pub points: Vec<[f64; 3]>,
    pub point_colors: Vec<[f64; 3]>,
}

impl SyntheticDataset {
    pub fn view(&self, i: usize) -> View {
        View {
            camera: self.cameras[i].clone(),
            image: self.images[i].clone(),
            mask: self.masks[i].clone(),
        }
    }

    /// Mask of view `i` with IDs mapped back to object labels.
    pub fn unpermuted_mask(&self, i: usize) -> InstanceMask {
        let perm = &self.perms[i];
        let mut m = self.masks[i].clone();
        for id in m.ids.iter_mut() {
            if *id != 0 {
                *id = perm.iter().position(|&p| p == *id).unwrap() as u32 + 1;
            }
        }
        m
    }
}

/// Fixed camera-ring geometry relative to the object layout.
const ELEVATION_DEG: f64 = 55.0;
const FOV_DEG: f64 = 60.0;

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let centers = spec.object_centers();
    let r = spec.object_radius;

    let mut gaussians = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..spec.gaussians_per_object {
            let offset = loop {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if v.norm() <= 1.0 {
                    break v * r;
                }
            };
            let p = c + offset;
            let mut g = Gaussian::new([p.x, p.y, p.z]);
            for s in g.log_scale.iter_mut() {
                *s = (r * rng.random_range(0.12..0.25)).ln();
            }
            for q in g.rotation.iter_mut() {
                *q = rng.sample(StandardNormal);
            }
            g.opacity_logit = logit(rng.random_range(0.75..0.95));
            let base = PALETTE[k % PALETTE.len()];
            g.color = base.map(|v: f64| (v + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0));
            g.feature = [0.0; FEATURE_DIM];
            g.feature[k % FEATURE_DIM] = 1.0;
            gaussians.push(g);
            labels.push(k as u32 + 1);
        }
    }
    let scene = SceneModel::new(gaussians)?;

    let cameras = camera_ring(spec, &centers)?;
    let mut images = Vec::with_capacity(cameras.len());
    let mut masks = Vec::with_capacity(cameras.len());
    let mut perms = Vec::with_capacity(cameras.len());
    for cam in &cameras {
        images.push(rasterize_reference(&scene, cam, DEFAULT_BACKGROUND)?.color_image());
        let mut perm: Vec<u32> = (1..=spec.object_count as u32).collect();
        perm.shuffle(&mut rng);
        let mut mask = label_mask(&scene, &labels, cam);
        for id in mask.ids.iter_mut() {
            if *id != 0 {
                *id = perm[*id as usize - 1];
            }
        }
        masks.push(mask);
        perms.push(perm);
    }

    let jitter = 0.05 * r;
    let points = scene
        .gaussians
        .iter()
        .map(|g| {
            let mut p = g.position;
            for v in p.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += jitter * z;
            }
            p
        })
        .collect();
    let point_colors = scene.gaussians.iter().map(|g| g.color).collect();

    Ok(SyntheticDataset {
        scene,
        labels,
        cameras,
        images,
        masks,
        perms,
        points,
        point_colors,
    })
}

fn camera_ring(spec: &SyntheticSpec, centers: &[Vector3<f64>]) -> Result<Vec<Camera>> {
    let centroid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let extent = centers.iter().map(|c| (c - centroid).norm()).fold(0.0, f64::max) + 1.4 * spec.object_radius;
    let half_fov = (FOV_DEG / 2.0).to_radians();
    let distance = extent / half_fov.sin() * 1.1;
    let elevation = ELEVATION_DEG.to_radians();
    let f = 0.5 * spec.image_size as f64 / half_fov.tan();
    (0..spec.camera_count)
        .map(|i| {
            let az = 2.0 * PI * (i as f64 + 0.25) / spec.camera_count as f64;
            let eye = centroid
                + distance * Vector3::new(elevation.cos() * az.cos(), elevation.cos() * az.sin(), elevation.sin());
            Camera::look_at(eye, centroid, Vector3::z(), f, f, spec.image_size, spec.image_size)
        })
        .collect()
}

/// Object label of the splat with the largest compositing weight per pixel,
/// 0 where alpha < [`FOREGROUND_ALPHA`].
pub fn label_mask(scene: &SceneModel, labels: &[u32], cam: &Camera) -> InstanceMask {
    let weights = pixel_weights(scene, cam);
    let mut mask = InstanceMask::new(cam.width, cam.height);
    for (i, ws) in weights.iter().enumerate() {
        let alpha: f64 = ws.iter().map(|(_, w)| w).sum();
        if alpha < FOREGROUND_ALPHA {
            continue;
        }
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for &(src, w) in ws {
            if w > best.1 {
                best = (src, w);
            }
        }
        mask.ids[i] = labels[best.0];
    }
    mask
}

/// Label of the nearest ground-truth Gaussian center for every position.
pub fn nearest_labels(gt: &SceneModel, labels: &[u32], positions: &[[f64; 3]]) -> Vec<u32> {
    positions
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0u32);
            for (g, &l) in gt.gaussians.iter().zip(labels) {
                let d: f64 = (0..3).map(|k| (g.position[k] - p[k]).powi(2)).sum();
                if d < best.0 {
                    best = (d, l);
                }
            }
            best.1
        })
        .collect()
}
