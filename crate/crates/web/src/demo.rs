//! Viewer state independent of the browser: an orbit camera around a scene,
//! click-to-prompt selection and instance-mask overlays.

use nalgebra::Vector3;

use splatseg::image::InstanceMask;
use splatseg::io::{decode_scene, encode_scene};
use splatseg::rasterizer::reference::dominant_gaussian;
use splatseg::segmentation::{render_instance_masks, select_by_similarity, FeaturePrompt, SegmentConfig};
use splatseg::synth::{generate, SyntheticSpec};
use splatseg::{rasterize, Camera, Result, SceneModel};

/// Side of the square viewport in pixels.
pub const VIEW_SIZE: usize = 160;

const FOV_DEG: f64 = 60.0;
const MAX_ELEVATION_DEG: f64 = 85.0;
const BACKGROUND: [f64; 3] = [0.06, 0.06, 0.08];

pub struct DemoState {
    scene: SceneModel,
    center: Vector3<f64>,
    distance: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
    segment: SegmentConfig,
    prompt: Option<FeaturePrompt>,
    selection: Vec<usize>,
}

impl DemoState {
    pub fn new(scene: SceneModel) -> Result<Self> {
        if scene.is_empty() {
            return Err(splatseg::Error::EmptyScene);
        }
        let n = scene.len() as f64;
        let center = scene.gaussians.iter().map(|g| g.position_vec()).sum::<Vector3<f64>>() / n;
        let extent = scene
            .gaussians
            .iter()
            .map(|g| (g.position_vec() - center).norm() + 3.0 * g.scale().max())
            .fold(1e-3, f64::max);
        Ok(Self {
            scene,
            center,
            distance: 1.1 * extent / (FOV_DEG / 2.0).to_radians().sin(),
            azimuth_deg: 30.0,
            elevation_deg: 55.0,
            segment: SegmentConfig::default(),
            prompt: None,
            selection: Vec::new(),
        })
    }

    /// The ground-truth scene of the default synthetic dataset: three
    /// objects, each with its own feature direction.
    pub fn synthetic(seed: u64) -> Result<Self> {
        let spec = SyntheticSpec {
            camera_count: 1,
            image_size: 4,
            seed,
            ..SyntheticSpec::default()
        };
        Self::new(generate(&spec)?.scene)
    }

    pub fn from_ply(bytes: &[u8]) -> Result<Self> {
        Self::new(decode_scene(bytes)?)
    }

    pub fn gaussian_count(&self) -> usize {
        self.scene.len()
    }

    pub fn orbit(&mut self, azimuth_deg: f64, elevation_deg: f64) {
        self.azimuth_deg = azimuth_deg;
        self.elevation_deg = elevation_deg.clamp(-MAX_ELEVATION_DEG, MAX_ELEVATION_DEG);
    }

    pub fn camera(&self) -> Camera {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        let eye = self.center + self.distance * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        let f = 0.5 * VIEW_SIZE as f64 / (FOV_DEG / 2.0).to_radians().tan();
        Camera::look_at(eye, self.center, Vector3::z(), f, f, VIEW_SIZE, VIEW_SIZE)
            .expect("elevation is clamped away from the poles")
    }

    pub fn threshold(&self) -> f64 {
        self.segment.threshold
    }

    /// Sets the similarity threshold and reselects under the current prompt.
    pub fn set_threshold(&mut self, t: f64) -> Result<usize> {
        let segment = self.segment.with_threshold(t);
        segment.validate()?;
        self.segment = segment;
        self.reselect();
        Ok(self.selection.len())
    }

    fn reselect(&mut self) {
        self.selection = match &self.prompt {
            Some(p) => select_by_similarity(&self.scene, p, self.segment.threshold),
            None => Vec::new(),
        };
    }

    /// Prompts with the feature of the front-most dominant Gaussian under
    /// pixel (x, y). Returns the selection size, or `None` on background.
    pub fn click(&mut self, x: usize, y: usize) -> Option<usize> {
        let hit = dominant_gaussian(&self.scene, &self.camera(), x, y)?;
        let prompt = FeaturePrompt::new(self.scene.gaussians[hit].feature).ok()?;
        self.prompt = Some(prompt);
        self.reselect();
        Some(self.selection.len())
    }

    pub fn clear_selection(&mut self) {
        self.prompt = None;
        self.selection.clear();
    }

    /// Indices of the selected Gaussians, ascending.
    pub fn selection(&self) -> &[usize] {
        &self.selection
    }

    /// RGBA pixels. With a prompt active, unselected Gaussians are dimmed.
    pub fn render(&self) -> Result<Vec<u8>> {
        let shown = if self.prompt.is_some() {
            let mut dimmed = self.scene.clone();
            let mut selected = vec![false; dimmed.len()];
            self.selection.iter().for_each(|&i| selected[i] = true);
            for (g, keep) in dimmed.gaussians.iter_mut().zip(selected) {
                if !keep {
                    let grey = (g.color[0] + g.color[1] + g.color[2]) / 3.0;
                    g.color = [0.25 * grey; 3];
                    g.opacity_logit -= 2.5;
                }
            }
            dimmed
        } else {
            self.scene.clone()
        };
        let out = rasterize(&shown, &self.camera(), BACKGROUND)?;
        Ok(out.color.iter().flat_map(|c| rgba(*c)).collect())
    }

    /// RGBA instance overlay at the current threshold and the instance count.
    pub fn segment(&self) -> Result<(Vec<u8>, usize)> {
        let mask = render_instance_masks(&self.scene, &self.camera(), &self.segment)?;
        Ok((overlay(&mask), mask.labels().len()))
    }

    /// The selected Gaussians as a scene PLY.
    pub fn export_selection(&self) -> Result<Vec<u8>> {
        if self.selection.is_empty() {
            return Err(splatseg::Error::NoMatch);
        }
        Ok(encode_scene(&self.scene.clone_subset(&self.selection)?))
    }
}

fn rgba(c: [f64; 3]) -> [u8; 4] {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [q(c[0]), q(c[1]), q(c[2]), 255]
}

/// Distinct hue per instance ID; background transparent.
fn overlay(mask: &InstanceMask) -> Vec<u8> {
    mask.ids
        .iter()
        .flat_map(|&id| {
            if id == 0 {
                return [0, 0, 0, 0];
            }
            let hue = (id as f64 * 0.618_033_988_75).fract() * 6.0;
            let x = 1.0 - (hue % 2.0 - 1.0).abs();
            let rgb = match hue as u32 {
                0 => [1.0, x, 0.0],
                1 => [x, 1.0, 0.0],
                2 => [0.0, 1.0, x],
                3 => [0.0, x, 1.0],
                4 => [x, 0.0, 1.0],
                _ => [1.0, 0.0, x],
            };
            let [r, g, b, _] = rgba(rgb);
            [r, g, b, 170]
        })
        .collect()
}
