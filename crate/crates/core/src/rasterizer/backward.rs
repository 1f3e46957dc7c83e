//! Analytic backward pass of [`super::rasterize`].
//!
//! Per pixel, the composited output of all channels (color, feature, alpha,
//! depth) is O = Σ vᵢ aᵢ Tᵢ + T_N·B with B = (background, 0, 0, 0). Walking
//! the accepted splats back-to-front with the accumulated "behind" value
//! Rᵢ₋₁ = aᵢ vᵢ + (1 − aᵢ) Rᵢ, R_N = B, gives ∂O/∂aᵢ = Tᵢ (vᵢ − Rᵢ) without
//! dividing by (1 − aᵢ).

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::{projection_jacobian, walk_pixel, Contribution, RenderOutput, TileBins, CHANNELS};
use crate::error::{Error, Result};
use crate::model::{offsets, Camera, Gaussian, SceneModel, FEATURE_DIM, PARAM_COUNT};

/// Loss gradients for every Gaussian, in [`Gaussian::params`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<[f64; PARAM_COUNT]>,
    /// ∂L/∂mean2d in pixels, used by densification.
    pub mean2d: Vec<[f64; 2]>,
    /// Whether the Gaussian survived culling in this view.
    pub visible: Vec<bool>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            params: vec![[0.0; PARAM_COUNT]; n],
            mean2d: vec![[0.0; 2]; n],
            visible: vec![false; n],
        }
    }
}

/// Screen-space gradient of one splat.
#[derive(Clone, Copy)]
struct SplatGrad {
    mean2d: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    feature: [f64; FEATURE_DIM],
    depth: f64,
}

impl Default for SplatGrad {
    fn default() -> Self {
        Self {
            mean2d: [0.0; 2],
            conic: [0.0; 3],
            opacity: 0.0,
            color: [0.0; 3],
            feature: [0.0; FEATURE_DIM],
            depth: 0.0,
        }
    }
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean2d[k] += o.mean2d[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        for k in 0..FEATURE_DIM {
            self.feature[k] += o.feature[k];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

fn channels(g: &Gaussian, depth: f64) -> [f64; CHANNELS] {
    let mut v = [0.0; CHANNELS];
    v[..3].copy_from_slice(&g.color);
    v[3..3 + FEATURE_DIM].copy_from_slice(&g.feature);
    v[3 + FEATURE_DIM] = 1.0;
    v[4 + FEATURE_DIM] = depth;
    v
}

fn upstream_at(up: &RenderOutput, idx: usize) -> [f64; CHANNELS] {
    let mut u = [0.0; CHANNELS];
    u[..3].copy_from_slice(&up.color[idx]);
    u[3..3 + FEATURE_DIM].copy_from_slice(&up.feature[idx]);
    u[3 + FEATURE_DIM] = up.alpha[idx];
    u[4 + FEATURE_DIM] = up.depth[idx];
    u
}

/// Gradients of a scalar loss with respect to every Gaussian parameter,
/// given ∂L/∂(color, feature, alpha, depth) images in `upstream`.
pub fn rasterize_backward(
    scene: &SceneModel,
    cam: &Camera,
    background: [f64; 3],
    upstream: &RenderOutput,
) -> Result<Gradients> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    upstream.check_shape(cam.width, cam.height)?;
    let (w, h) = (cam.width, cam.height);
    let bins = TileBins::build(scene, cam);
    let mut behind_bg = [0.0; CHANNELS];
    behind_bg[..3].copy_from_slice(&background);

    // Per-tile partial sums, reduced afterwards in tile order.
    let partials: Vec<Vec<SplatGrad>> = (0..bins.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &bins.tiles[tile];
            let mut acc = vec![SplatGrad::default(); list.len()];
            let mut local: Vec<(usize, Contribution)> = Vec::new();
            for (x, y) in bins.tile_pixels(tile, w, h) {
                let idx = y * w + x;
                let up = upstream_at(upstream, idx);
                if up.iter().all(|&u| u == 0.0) {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                local.clear();
                let mut pos = 0usize;
                walk_pixel(px, py, list, &bins.sorted, |c| {
                    // Locate the list slot of this splat; lists are sorted.
                    while list[pos] != c.sorted_index {
                        pos += 1;
                    }
                    local.push((pos, c));
                });
                let mut behind = behind_bg;
                for &(slot, c) in local.iter().rev() {
                    let p = &bins.sorted[c.sorted_index as usize];
                    let g = &scene.gaussians[p.source_index];
                    let v = channels(g, p.depth);
                    let weight = c.alpha * c.transmittance;
                    let mut d_a = 0.0;
                    for ch in 0..CHANNELS {
                        d_a += up[ch] * (v[ch] - behind[ch]);
                    }
                    d_a *= c.transmittance;
                    let sg = &mut acc[slot];
                    for ch in 0..3 {
                        sg.color[ch] += up[ch] * weight;
                    }
                    for k in 0..FEATURE_DIM {
                        sg.feature[k] += up[3 + k] * weight;
                    }
                    sg.depth += up[4 + FEATURE_DIM] * weight;
                    for ch in 0..CHANNELS {
                        behind[ch] = c.alpha * v[ch] + (1.0 - c.alpha) * behind[ch];
                    }
                    // a = opacity · exp(power)
                    sg.opacity += d_a * c.falloff;
                    let d_power = d_a * c.alpha;
                    let dx = px - p.mean2d[0];
                    let dy = py - p.mean2d[1];
                    let [qa, qb, qc] = p.conic;
                    sg.mean2d[0] += d_power * (qa * dx + qb * dy);
                    sg.mean2d[1] += d_power * (qb * dx + qc * dy);
                    sg.conic[0] += d_power * (-0.5 * dx * dx);
                    sg.conic[1] += d_power * (-dx * dy);
                    sg.conic[2] += d_power * (-0.5 * dy * dy);
                }
            }
            acc
        })
        .collect();

    let mut splat_grads = vec![SplatGrad::default(); bins.sorted.len()];
    for (tile, part) in partials.iter().enumerate() {
        for (slot, sg) in part.iter().enumerate() {
            splat_grads[bins.tiles[tile][slot] as usize].add(sg);
        }
    }

    let mut out = Gradients::zeros(scene.len());
    for (p, sg) in bins.sorted.iter().zip(&splat_grads) {
        let i = p.source_index;
        out.visible[i] = true;
        out.mean2d[i] = sg.mean2d;
        out.params[i] = chain_to_params(&scene.gaussians[i], cam, sg);
    }
    Ok(out)
}

/// Chains a screen-space splat gradient through projection and covariance
/// construction to the Gaussian's own parameters.
fn chain_to_params(g: &Gaussian, cam: &Camera, sg: &SplatGrad) -> [f64; PARAM_COUNT] {
    let mut out = [0.0; PARAM_COUNT];
    let w = cam.rotation;
    let t = w * g.position_vec() + cam.translation;
    let (x, y, z) = (t.x, t.y, t.z);
    let j = projection_jacobian(cam, &t);
    let r = g.rotation_matrix();
    let s = g.scale();
    let l = r * Matrix3::from_diagonal(&s);
    let cov3d = l * l.transpose();
    let m = w * cov3d * w.transpose();
    let cov2d = j * m * j.transpose() + Matrix2::identity() * super::COV2D_DILATION;
    let q = cov2d.try_inverse().unwrap_or_else(Matrix2::zeros);

    // ∂L/∂conic as a full symmetric matrix, then ∂L/∂Σ₂ = −Q G Q.
    let g_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let g_cov2d = -(q * g_conic * q);
    let g_m = j.transpose() * g_cov2d * j;
    let g_j = 2.0 * g_cov2d * j * m;
    let g_cov3d = w.transpose() * g_m * w;

    // Camera-frame point: through the Jacobian, the mean, and the depth.
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut g_t = Vector3::new(
        g_j[(0, 2)] * (-fx * iz2),
        g_j[(1, 2)] * (-fy * iz2),
        g_j[(0, 0)] * (-fx * iz2)
            + g_j[(0, 2)] * (2.0 * fx * x * iz3)
            + g_j[(1, 1)] * (-fy * iz2)
            + g_j[(1, 2)] * (2.0 * fy * y * iz3),
    );
    g_t.x += sg.mean2d[0] * fx * iz;
    g_t.y += sg.mean2d[1] * fy * iz;
    g_t.z += -sg.mean2d[0] * fx * x * iz2 - sg.mean2d[1] * fy * y * iz2;
    g_t.z += sg.depth;
    let g_pos = w.transpose() * g_t;
    out[offsets::POSITION..offsets::POSITION + 3].copy_from_slice(g_pos.as_slice());

    // Σ = L Lᵀ with L = R S.
    let g_l = (g_cov3d + g_cov3d.transpose()) * l;
    let g_s = r.transpose() * g_l;
    for k in 0..3 {
        out[offsets::LOG_SCALE + k] = g_s[(k, k)] * s[k];
    }
    let g_r = g_l * Matrix3::from_diagonal(&s);
    let g_q = quaternion_backward(g.rotation, &g_r);
    out[offsets::ROTATION..offsets::ROTATION + 4].copy_from_slice(&g_q);

    let alpha = g.opacity();
    out[offsets::OPACITY] = sg.opacity * alpha * (1.0 - alpha);
    out[offsets::COLOR..offsets::COLOR + 3].copy_from_slice(&sg.color);
    out[offsets::FEATURE..offsets::FEATURE + FEATURE_DIM].copy_from_slice(&sg.feature);
    out
}

/// ∂L/∂q for the unnormalized quaternion, given ∂L/∂R.
fn quaternion_backward(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)]
            + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    let gn = [gw, gx, gy, gz];
    let unit = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&unit).map(|(a, b)| a * b).sum();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (gn[k] - unit[k] * dot) / n;
    }
    out
}
