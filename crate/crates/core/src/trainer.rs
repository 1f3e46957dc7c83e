//! Joint optimization of appearance, geometry and segmentation features over
//! posed views with per-view instance masks.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{InstanceMask, RgbImage};
use crate::losses::{total_loss, LossConfig};
use crate::model::{logit, offsets, Camera, Gaussian, SceneModel, FEATURE_DIM};
use crate::optim::{Adam, LearningRates};
use crate::rasterizer::{rasterize, rasterize_backward};
use crate::rng::{derive_seed, stream_rng};

/// Background color shared by synthetic ground truth and training renders.
pub const DEFAULT_BACKGROUND: [f64; 3] = [0.0, 0.0, 0.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rates: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub densify_interval: usize,
    /// Mean screen-space position-gradient magnitude (pixels⁻¹) above which
    /// a Gaussian is cloned or split.
    pub densify_grad_threshold: f64,
    pub prune_opacity_threshold: f64,
    /// Densification runs only before this fraction of `iterations`.
    pub densify_until: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// extent are split instead of cloned.
    pub percent_dense: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rates: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            densify_interval: 300,
            densify_grad_threshold: 2e-4,
            prune_opacity_threshold: 0.01,
            densify_until: 0.5,
            percent_dense: 0.01,
            background: DEFAULT_BACKGROUND,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = &self.learning_rates;
        let rates = [lr.position, lr.log_scale, lr.rotation, lr.opacity, lr.color, lr.feature];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config(
                "adam betas must lie in [0, 1) and eps be positive".into(),
            ));
        }
        if self.densify_interval == 0 {
            return Err(Error::Config("densify_interval must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.densify_until) {
            return Err(Error::Config("densify_until must lie in [0, 1]".into()));
        }
        if !(self.densify_grad_threshold > 0.0 && self.prune_opacity_threshold >= 0.0 && self.percent_dense > 0.0) {
            return Err(Error::Config("densification thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// One posed training image with its instance mask.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub image: RgbImage,
    pub mask: InstanceMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub view: usize,
    pub total: f64,
    pub rendering: f64,
    pub clustering: f64,
    pub regularization: f64,
    pub gaussians: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub scene: SceneModel,
    pub history: Vec<LossRecord>,
}

/// One Gaussian per point. Scale is the mean distance to the (up to) three
/// nearest other points, opacity starts at 0.1, rotation at identity, and
/// features are drawn from N(0, 1/16).
pub fn initialize(points: &[[f64; 3]], colors: Option<&[[f64; 3]]>, seed: u64) -> Result<SceneModel> {
    if points.is_empty() {
        return Err(Error::InvalidInput("point set is empty".into()));
    }
    if let Some(c) = colors {
        if c.len() != points.len() {
            return Err(Error::shape(
                format!("{} colors", points.len()),
                format!("{} colors", c.len()),
            ));
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut gaussians = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        dists.clear();
        dists.extend(
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()),
        );
        dists.sort_by(f64::total_cmp);
        let near = &dists[..dists.len().min(3)];
        let mean = if near.is_empty() {
            0.01
        } else {
            (near.iter().sum::<f64>() / near.len() as f64).max(1e-7)
        };
        let mut g = Gaussian::new(*p);
        g.log_scale = [mean.ln(); 3];
        g.opacity_logit = logit(0.1);
        g.color = colors.map_or([0.5; 3], |c| c[i]);
        for f in g.feature.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *f = z / (FEATURE_DIM as f64).sqrt();
        }
        gaussians.push(g);
    }
    SceneModel::new(gaussians)
}

/// Radius of the camera centers around their mean, padded by 10%.
pub fn scene_extent(cameras: &[&Camera]) -> f64 {
    let centers: Vec<Vector3<f64>> = cameras.iter().map(|c| c.center()).collect();
    let mean = centers.iter().sum::<Vector3<f64>>() / centers.len().max(1) as f64;
    let r = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    1.1 * r.max(1e-6)
}

pub fn train(scene: SceneModel, views: &[View], cfg: &TrainConfig, loss_cfg: &LossConfig) -> Result<TrainOutput> {
    train_with(scene, views, cfg, loss_cfg, |_| {})
}

/// [`train`] with a callback invoked after every iteration.
pub fn train_with(
    mut scene: SceneModel,
    views: &[View],
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    mut observer: impl FnMut(&LossRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if views.is_empty() {
        return Err(Error::InvalidInput("no training views".into()));
    }
    for (i, v) in views.iter().enumerate() {
        let (w, h) = (v.camera.width, v.camera.height);
        if (v.image.width, v.image.height) != (w, h) || (v.mask.width, v.mask.height) != (w, h) {
            return Err(Error::InvalidInput(format!(
                "view {i}: image or mask size does not match its {w}x{h} camera"
            )));
        }
    }
    let extent = scene_extent(&views.iter().map(|v| &v.camera).collect::<Vec<_>>());
    let mut adam = Adam::new(scene.len(), &cfg.learning_rates, cfg.beta1, cfg.beta2, cfg.eps);
    let mut stats = DensifyStats::new(scene.len());
    let mut history = Vec::with_capacity(cfg.iterations);
    let densify_stop = (cfg.densify_until * cfg.iterations as f64) as usize;

    for it in 0..cfg.iterations {
        let view_index = it % views.len();
        let view = &views[view_index];
        let render = rasterize(&scene, &view.camera, cfg.background)?;
        let loss = total_loss(
            &render,
            &view.image,
            &view.mask,
            &scene,
            loss_cfg,
            derive_seed(cfg.seed, it as u64),
        )?;
        for (term, value) in [
            ("rendering", loss.rendering),
            ("clustering", loss.clustering),
            ("regularization", loss.regularization),
            ("total", loss.total),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { term, iteration: it });
            }
        }
        let mut grads = rasterize_backward(&scene, &view.camera, cfg.background, &loss.upstream)?;
        for (p, f) in grads.params.iter_mut().zip(&loss.feature_grads) {
            for k in 0..FEATURE_DIM {
                p[offsets::FEATURE + k] += f[k];
            }
        }
        stats.accumulate(&grads.mean2d, &grads.visible);
        adam.step(&mut scene.gaussians, &grads.params);
        scene.iteration += 1;

        let done = it + 1;
        if done % cfg.densify_interval == 0 && done < densify_stop {
            densify_and_prune(
                &mut scene,
                &mut adam,
                &stats,
                cfg,
                extent,
                derive_seed(cfg.seed ^ 0xD3, done as u64),
            );
            stats = DensifyStats::new(scene.len());
        }

        let record = LossRecord {
            iteration: it,
            view: view_index,
            total: loss.total,
            rendering: loss.rendering,
            clustering: loss.clustering,
            regularization: loss.regularization,
            gaussians: scene.len(),
        };
        observer(&record);
        history.push(record);
    }
    Ok(TrainOutput { scene, history })
}

struct DensifyStats {
    grad_sum: Vec<f64>,
    count: Vec<u32>,
}

impl DensifyStats {
    fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    fn accumulate(&mut self, mean2d: &[[f64; 2]], visible: &[bool]) {
        for i in 0..self.count.len() {
            if visible[i] {
                self.grad_sum[i] += (mean2d[i][0].powi(2) + mean2d[i][1].powi(2)).sqrt();
                self.count[i] += 1;
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.grad_sum[i] / self.count[i] as f64
        }
    }
}

/// Offset drawn from the Gaussian's own distribution, R S z.
fn sample_offset(g: &Gaussian, rng: &mut impl Rng) -> [f64; 3] {
    let z = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let d = g.rotation_matrix() * g.scale().component_mul(&z);
    [d.x, d.y, d.z]
}

fn densify_and_prune(
    scene: &mut SceneModel,
    adam: &mut Adam,
    stats: &DensifyStats,
    cfg: &TrainConfig,
    extent: f64,
    seed: u64,
) {
    let mut rng = stream_rng(seed, 0);
    let size_limit = cfg.percent_dense * extent;
    let mut next: Vec<Gaussian> = Vec::with_capacity(scene.len());
    let mut sources: Vec<Option<usize>> = Vec::with_capacity(scene.len());
    let mut children: Vec<Gaussian> = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        if stats.mean(i) < cfg.densify_grad_threshold {
            next.push(g.clone());
            sources.push(Some(i));
            continue;
        }
        let largest = g.scale().max();
        if largest <= size_limit {
            next.push(g.clone());
            sources.push(Some(i));
            let mut clone = g.clone();
            let d = sample_offset(g, &mut rng);
            for k in 0..3 {
                clone.position[k] += d[k];
            }
            children.push(clone);
        } else {
            for _ in 0..2 {
                let mut child = g.clone();
                let d = sample_offset(g, &mut rng);
                for k in 0..3 {
                    child.position[k] += d[k];
                    child.log_scale[k] -= 1.6f64.ln();
                }
                children.push(child);
            }
        }
    }
    sources.extend(std::iter::repeat_n(None, children.len()));
    next.extend(children);

    let keep: Vec<bool> = next
        .iter()
        .map(|g| g.opacity() >= cfg.prune_opacity_threshold)
        .collect();
    if keep.iter().any(|&k| k) {
        let mut it = keep.iter();
        next.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        sources.retain(|_| *it.next().unwrap());
    }
    scene.gaussians = next;
    adam.remap(&sources);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rasterizer::reference::rasterize_reference;
    use crate::testutil::{random_camera, random_scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_point() {
        let s = initialize(&[[1.0, 2.0, 3.0]], None, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.gaussians[0].position, [1.0, 2.0, 3.0]);
        assert_eq!(s.gaussians[0].color, [0.5; 3]);
        assert!((s.gaussians[0].opacity() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_points_rejected() {
        assert!(initialize(&[], None, 0).is_err());
    }

    #[test]
    fn grid_spacing_sets_scale() {
        let s = 0.25;
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..6 {
                    pts.push([x as f64 * s, y as f64 * s, z as f64 * s]);
                }
            }
        }
        let scene = initialize(&pts, None, 1).unwrap();
        // The three nearest neighbors of every grid point lie at distance s.
        for g in &scene.gaussians {
            for v in g.log_scale {
                assert!((v - s.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn initialize_deterministic() {
        let pts: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.1, (i % 3) as f64, 0.0]).collect();
        assert_eq!(initialize(&pts, None, 9).unwrap(), initialize(&pts, None, 9).unwrap());
        assert_ne!(initialize(&pts, None, 9).unwrap(), initialize(&pts, None, 10).unwrap());
    }

    fn single_view(seed: u64) -> (SceneModel, View) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = random_camera(&mut rng, 24, 24);
        let target = random_scene(&mut rng, 15);
        let image = rasterize_reference(&target, &cam, DEFAULT_BACKGROUND)
            .unwrap()
            .color_image();
        let pts: Vec<[f64; 3]> = target.gaussians.iter().map(|g| g.position).collect();
        let scene = initialize(&pts, None, seed).unwrap();
        let view = View {
            camera: cam,
            image,
            mask: InstanceMask::new(24, 24),
        };
        (scene, view)
    }

    #[test]
    fn zero_iterations_leave_scene_unchanged() {
        let (scene, view) = single_view(1);
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let out = train(scene.clone(), &[view], &cfg, &LossConfig::default()).unwrap();
        assert_eq!(out.scene, scene);
        assert!(out.history.is_empty());
    }

    #[test]
    fn rendering_loss_decreases() {
        let (scene, view) = single_view(2);
        let cfg = TrainConfig {
            iterations: 200,
            ..TrainConfig::default()
        };
        let loss_cfg = LossConfig {
            lambda_clustering: 0.0,
            lambda_near: 0.0,
            lambda_far: 0.0,
            ..LossConfig::default()
        };
        let out = train(scene, &[view], &cfg, &loss_cfg).unwrap();
        let first = out.history.first().unwrap().rendering;
        let last = out.history.last().unwrap().rendering;
        assert!(last < first, "{first} -> {last}");
        let again = {
            let (scene, view) = single_view(2);
            train(scene, &[view], &cfg, &loss_cfg).unwrap()
        };
        assert_eq!(out.history, again.history);
    }

    #[test]
    fn densify_keeps_invariants_and_never_empties() {
        let (scene, view) = single_view(3);
        let cfg = TrainConfig {
            iterations: 60,
            densify_interval: 20,
            densify_grad_threshold: 1e-9,
            densify_until: 1.0,
            prune_opacity_threshold: 0.0,
            ..TrainConfig::default()
        };
        let loss_cfg = LossConfig {
            lambda_near: 0.0,
            lambda_far: 0.0,
            ..LossConfig::default()
        };
        let n0 = scene.len();
        let out = train(scene, std::slice::from_ref(&view), &cfg, &loss_cfg).unwrap();
        assert!(out.scene.len() > n0);
        assert!(out.scene.gaussians.iter().all(Gaussian::is_finite));

        // Pruning everything is refused.
        let (scene, _) = single_view(3);
        let cfg = TrainConfig {
            iterations: 20,
            densify_interval: 10,
            densify_until: 1.0,
            prune_opacity_threshold: 0.99,
            ..TrainConfig::default()
        };
        let out = train(scene, &[view], &cfg, &loss_cfg).unwrap();
        assert!(!out.scene.is_empty());
    }
}
