//! Training objective: rendering loss + λ_clustering · contrastive loss +
//! spatial regularization.

pub mod contrastive;
pub mod regularization;
pub mod ssim;

pub use contrastive::{contrastive_clustering_loss, ContrastiveLoss};
pub use regularization::{spatial_regularization, Regularization};
pub use ssim::{rendering_loss, ssim, RenderingLoss};

use crate::error::{Error, Result};
use crate::image::{InstanceMask, RgbImage};
use crate::model::{Feature, SceneModel, FEATURE_DIM};
use crate::rasterizer::RenderOutput;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of (1 − SSIM) inside the rendering loss.
    pub lambda_dssim: f64,
    pub lambda_clustering: f64,
    pub temperature: f64,
    pub samples_per_view: usize,
    pub knn_k: usize,
    pub far_m: usize,
    pub lambda_near: f64,
    pub lambda_far: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            lambda_clustering: 0.1,
            temperature: 0.1,
            samples_per_view: 4096,
            knn_k: 5,
            far_m: 5,
            lambda_near: 1.0,
            lambda_far: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_dssim", self.lambda_dssim),
            ("lambda_clustering", self.lambda_clustering),
            ("lambda_near", self.lambda_near),
            ("lambda_far", self.lambda_far),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.lambda_dssim > 1.0 {
            return Err(Error::Config("lambda_dssim must be at most 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.samples_per_view == 0 || self.knn_k == 0 || self.far_m == 0 {
            return Err(Error::Config(
                "samples_per_view, knn_k and far_m must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn regularization_enabled(&self) -> bool {
        self.lambda_near > 0.0 || self.lambda_far > 0.0
    }
}

/// Unit vector and the norm it was divided by (clamped away from zero).
pub(crate) fn normalize(f: &Feature) -> (Feature, f64) {
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    (f.map(|v| v / norm), norm)
}

/// Pulls a gradient on û = u/|u| back to u.
pub(crate) fn normalize_backward(unit: &Feature, norm: f64, g: &Feature) -> Feature {
    let d: f64 = unit.iter().zip(g).map(|(a, b)| a * b).sum();
    std::array::from_fn(|k| (g[k] - unit[k] * d) / norm)
}

#[derive(Clone, Debug)]
pub struct TotalLoss {
    pub total: f64,
    pub rendering: f64,
    /// Unweighted contrastive loss.
    pub clustering: f64,
    /// Regularization including its internal weights.
    pub regularization: f64,
    /// ∂total/∂render buffers, for [`crate::rasterizer::rasterize_backward`].
    pub upstream: RenderOutput,
    /// ∂total/∂feature applied directly to each Gaussian.
    pub feature_grads: Vec<Feature>,
}

/// Evaluates the full objective for one rendered view. `seed` keys the
/// pixel and far-partner samplers.
pub fn total_loss(
    render: &RenderOutput,
    gt_color: &RgbImage,
    gt_mask: &InstanceMask,
    scene: &SceneModel,
    cfg: &LossConfig,
    seed: u64,
) -> Result<TotalLoss> {
    gt_mask.same_size(render.width, render.height)?;
    let rendered = render.color_image();
    let rl = rendering_loss(&rendered, gt_color, cfg.lambda_dssim)?;

    let mut upstream = RenderOutput::zeros(render.width, render.height);
    upstream.color = rl.grad;

    let mut clustering = 0.0;
    if cfg.lambda_clustering > 0.0 {
        let cl = contrastive_clustering_loss(&render.feature, gt_mask, cfg, derive_seed(seed, 0))?;
        clustering = cl.loss;
        for (u, g) in upstream.feature.iter_mut().zip(&cl.grad) {
            for k in 0..FEATURE_DIM {
                u[k] = cfg.lambda_clustering * g[k];
            }
        }
    }

    let (regularization, feature_grads) = if cfg.regularization_enabled() {
        let reg = spatial_regularization(scene, cfg, derive_seed(seed, 1))?;
        (reg.loss, reg.grad)
    } else {
        (0.0, vec![[0.0; FEATURE_DIM]; scene.len()])
    };

    Ok(TotalLoss {
        total: rl.loss + cfg.lambda_clustering * clustering + regularization,
        rendering: rl.loss,
        clustering,
        regularization,
        upstream,
        feature_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Camera, PARAM_COUNT};
    use crate::rasterizer::{rasterize, rasterize_backward};
    use crate::testutil::{random_camera, random_scene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize) -> (SceneModel, Camera, RgbImage, InstanceMask) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = random_camera(&mut rng, 16, 16);
        let scene = random_scene(&mut rng, n);
        let gt = RgbImage {
            width: 16,
            height: 16,
            pixels: (0..256)
                .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
                .collect(),
        };
        let mask = InstanceMask {
            width: 16,
            height: 16,
            ids: (0..256).map(|i| ((i % 16) / 5) as u32).collect(),
        };
        (scene, cam, gt, mask)
    }

    #[test]
    fn total_is_weighted_sum_of_terms() {
        let (scene, cam, gt, mask) = setup(1, 12);
        let cfg = LossConfig {
            lambda_clustering: 0.7,
            ..LossConfig::default()
        };
        let render = rasterize(&scene, &cam, [0.0; 3]).unwrap();
        let t = total_loss(&render, &gt, &mask, &scene, &cfg, 5).unwrap();
        let r = rendering_loss(&render.color_image(), &gt, cfg.lambda_dssim)
            .unwrap()
            .loss;
        let c = contrastive_clustering_loss(&render.feature, &mask, &cfg, derive_seed(5, 0))
            .unwrap()
            .loss;
        let g = spatial_regularization(&scene, &cfg, derive_seed(5, 1)).unwrap().loss;
        assert!((t.total - (r + 0.7 * c + g)).abs() < 1e-12);
        assert!(t.rendering >= 0.0 && t.clustering >= 0.0 && t.regularization >= 0.0);
    }

    #[test]
    fn switched_off_terms() {
        let (mut scene, cam, _, mask) = setup(2, 12);
        let f = scene.gaussians[0].feature;
        scene.gaussians.iter_mut().for_each(|g| g.feature = f);
        let render = rasterize(&scene, &cam, [0.0; 3]).unwrap();
        let gt = render.color_image();
        let cfg = LossConfig {
            lambda_clustering: 0.0,
            ..LossConfig::default()
        };
        let t = total_loss(&render, &gt, &mask, &scene, &cfg, 0).unwrap();
        let reg = spatial_regularization(&scene, &cfg, derive_seed(0, 1)).unwrap();
        assert!(reg.near.abs() < 1e-12);
        assert!((t.total - cfg.lambda_far * reg.far).abs() < 1e-12);

        let single = InstanceMask {
            ids: mask.ids.iter().map(|_| 1).collect(),
            ..mask
        };
        let cfg = LossConfig {
            lambda_far: 0.0,
            ..LossConfig::default()
        };
        let t = total_loss(&render, &gt, &single, &scene, &cfg, 0).unwrap();
        assert!(t.total.abs() < 1e-12, "{}", t.total);
    }

    /// Full chain: total loss → render buffers → Gaussian parameters, plus
    /// the direct feature gradient of the regularizer.
    #[test]
    fn total_gradient_matches_finite_differences() {
        let (scene, cam, gt, mask) = setup(3, 12);
        let cfg = LossConfig {
            lambda_clustering: 0.5,
            ..LossConfig::default()
        };
        let bg = [0.2, 0.4, 0.1];
        let eval = |s: &SceneModel| {
            let r = rasterize(s, &cam, bg).unwrap();
            total_loss(&r, &gt, &mask, s, &cfg, 11).unwrap()
        };
        let base = eval(&scene);
        let mut grads = rasterize_backward(&scene, &cam, bg, &base.upstream).unwrap();
        for (p, f) in grads.params.iter_mut().zip(&base.feature_grads) {
            for k in 0..FEATURE_DIM {
                p[crate::model::offsets::FEATURE + k] += f[k];
            }
        }
        let h = 1e-4;
        let mut checked = 0;
        for i in 0..scene.len() {
            for k in 0..PARAM_COUNT {
                let mut plus = scene.clone();
                let mut p = plus.gaussians[i].params();
                p[k] += h;
                plus.gaussians[i].set_params(&p);
                let mut minus = scene.clone();
                p[k] -= 2.0 * h;
                minus.gaussians[i].set_params(&p);
                let fd = (eval(&plus).total - eval(&minus).total) / (2.0 * h);
                let an = grads.params[i][k];
                if an.abs() > 1e-6 {
                    checked += 1;
                    let rel = (an - fd).abs() / an.abs();
                    assert!(rel < 1e-4, "gaussian {i} param {k}: {an} vs {fd}");
                }
            }
        }
        assert!(checked > 50, "{checked}");
    }
}
