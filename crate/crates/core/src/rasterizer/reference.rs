//! Naive reference renderer: every pixel sorts every projected splat and
//! composites without binning. Used to render ground truth and as the
//! equivalence oracle for the tiled rasterizer.

use super::{depth_order, project, Projected2DGaussian, MIN_ALPHA, MIN_TRANSMITTANCE};
use crate::error::{Error, Result};
use crate::model::{Camera, SceneModel};
use crate::rasterizer::RenderOutput;

fn sorted_splats(scene: &SceneModel, cam: &Camera) -> Vec<Projected2DGaussian> {
    let mut splats: Vec<Projected2DGaussian> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, cam, i))
        .collect();
    splats.sort_by(depth_order);
    splats
}

fn weights_at(splats: &[Projected2DGaussian], x: usize, y: usize) -> Vec<(usize, f64)> {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    let mut t = 1.0;
    let mut weights = Vec::new();
    for p in splats {
        let dx = px - p.mean2d[0];
        let dy = py - p.mean2d[1];
        let q = p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy;
        let a = p.opacity * (-0.5 * q).exp();
        if a < MIN_ALPHA {
            continue;
        }
        weights.push((p.source_index, a * t));
        t *= 1.0 - a;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    weights
}

/// Compositing weights (source index, wᵢ) of every pixel, front-to-back.
pub fn pixel_weights(scene: &SceneModel, cam: &Camera) -> Vec<Vec<(usize, f64)>> {
    let splats = sorted_splats(scene, cam);
    let mut out = Vec::with_capacity(cam.pixel_count());
    for y in 0..cam.height {
        for x in 0..cam.width {
            out.push(weights_at(&splats, x, y));
        }
    }
    out
}

/// Source index of the Gaussian with the largest compositing weight at
/// pixel (x, y); `None` off-image or where nothing is hit.
pub fn dominant_gaussian(scene: &SceneModel, cam: &Camera, x: usize, y: usize) -> Option<usize> {
    if x >= cam.width || y >= cam.height {
        return None;
    }
    weights_at(&sorted_splats(scene, cam), x, y)
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
}

pub fn rasterize_reference(scene: &SceneModel, cam: &Camera, background: [f64; 3]) -> Result<RenderOutput> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let weights = pixel_weights(scene, cam);
    let splat_depth: Vec<f64> = scene
        .gaussians
        .iter()
        .map(|g| (cam.rotation * g.position_vec() + cam.translation).z)
        .collect();
    let mut out = RenderOutput::zeros(cam.width, cam.height);
    for (i, ws) in weights.iter().enumerate() {
        let mut t = 1.0;
        for &(src, w) in ws {
            let g = &scene.gaussians[src];
            for ch in 0..3 {
                out.color[i][ch] += w * g.color[ch];
            }
            for (acc, f) in out.feature[i].iter_mut().zip(&g.feature) {
                *acc += w * f;
            }
            out.depth[i] += w * splat_depth[src];
            // Recover αᵢgᵢ from wᵢ = αᵢgᵢ·T to track transmittance.
            t -= w;
        }
        for ch in 0..3 {
            out.color[i][ch] += t * background[ch];
        }
        out.alpha[i] = 1.0 - t;
    }
    Ok(out)
}
