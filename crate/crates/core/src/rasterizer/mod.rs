//! Differentiable splatting of color, segmentation features, alpha and depth.
//!
//! Gaussians are projected with the EWA approximation, globally sorted
//! front-to-back by camera depth (ties by source index) and composited per
//! pixel. The forward pass bins splats into 16×16 tiles using the exact
//! screen-space extent beyond which a splat's contribution falls under the
//! skip threshold, so binning never changes the output.

mod backward;
pub mod reference;

use nalgebra::{Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

pub use backward::{rasterize_backward, Gradients};

use crate::error::{Error, Result};
use crate::model::{Camera, Feature, Gaussian, SceneModel, FEATURE_DIM};

/// Gaussians at or in front of this camera depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Isotropic dilation added to every projected covariance (pixels²).
pub const COV2D_DILATION: f64 = 0.3;
/// Contributions with αᵢ·gᵢ below this are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const TILE_SIZE: usize = 16;

/// Color, feature, alpha and depth, composited with shared weights.
pub(crate) const CHANNELS: usize = 3 + FEATURE_DIM + 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Projected2DGaussian {
    /// Pixel coordinates; pixel (x, y) has its center at (x + 0.5, y + 0.5).
    pub mean2d: [f64; 2],
    /// Dilated screen covariance (xx, xy, yy).
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d` (xx, xy, yy).
    pub conic: [f64; 3],
    pub depth: f64,
    pub source_index: usize,
    pub opacity: f64,
}

impl Projected2DGaussian {
    pub fn max_eigenvalue(&self) -> f64 {
        let [a, b, c] = self.cov2d;
        let mid = 0.5 * (a + c);
        mid + (0.25 * (a - c) * (a - c) + b * b).sqrt()
    }

    /// exp(−½ dᵀ conic d) at the pixel center `(px, py)`.
    #[inline]
    pub fn falloff(&self, px: f64, py: f64) -> f64 {
        self.power(px - self.mean2d[0], py - self.mean2d[1]).exp()
    }

    #[inline]
    pub(crate) fn power(&self, dx: f64, dy: f64) -> f64 {
        let [qa, qb, qc] = self.conic;
        -0.5 * (qa * dx * dx + qc * dy * dy) - qb * dx * dy
    }

    /// Radius outside which αᵢ·gᵢ < [`MIN_ALPHA`]; `None` if the splat never
    /// reaches the threshold.
    pub fn contribution_radius(&self) -> Option<f64> {
        let peak = self.opacity / MIN_ALPHA;
        if peak < 1.0 {
            return None;
        }
        Some((2.0 * peak.ln() * self.max_eigenvalue()).sqrt())
    }
}

/// Perspective Jacobian of the pinhole projection at camera-frame point `t`.
pub(crate) fn projection_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let inv_z = 1.0 / t.z;
    let inv_z2 = inv_z * inv_z;
    Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * t.x * inv_z2,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t.y * inv_z2,
    )
}

/// Undilated screen covariance J W Σ Wᵀ Jᵀ.
pub(crate) fn screen_covariance(cam: &Camera, t: &Vector3<f64>, cov3d: &Matrix3<f64>) -> nalgebra::Matrix2<f64> {
    let j = projection_jacobian(cam, t);
    let m = cam.rotation * cov3d * cam.rotation.transpose();
    j * m * j.transpose()
}

/// EWA projection of one Gaussian; `None` when culled.
pub fn project(g: &Gaussian, cam: &Camera, source_index: usize) -> Option<Projected2DGaussian> {
    let t = cam.rotation * g.position_vec() + cam.translation;
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let mean2d = [cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy];
    let s = screen_covariance(cam, &t, &g.covariance3d());
    let cov2d = [
        s[(0, 0)] + COV2D_DILATION,
        0.5 * (s[(0, 1)] + s[(1, 0)]),
        s[(1, 1)] + COV2D_DILATION,
    ];
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > 0.0) {
        return None;
    }
    let conic = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];
    let p = Projected2DGaussian {
        mean2d,
        cov2d,
        conic,
        depth: t.z,
        source_index,
        opacity: g.opacity(),
    };
    let r = 3.0 * p.max_eigenvalue().sqrt();
    let (w, h) = (cam.width as f64, cam.height as f64);
    if mean2d[0] + r < 0.0 || mean2d[0] - r > w || mean2d[1] + r < 0.0 || mean2d[1] - r > h {
        return None;
    }
    Some(p)
}

/// Front-to-back order: depth ascending, ties by source index.
pub(crate) fn depth_order(a: &Projected2DGaussian, b: &Projected2DGaussian) -> std::cmp::Ordering {
    a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index))
}

/// Projects every Gaussian and returns the survivors sorted front-to-back.
pub fn project_sorted(scene: &SceneModel, cam: &Camera) -> Vec<Projected2DGaussian> {
    let mut projected: Vec<Projected2DGaussian> = scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, cam, i))
        .collect();
    projected.sort_by(depth_order);
    projected
}

/// Composited render of one view. All buffers are row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[f64; 3]>,
    pub feature: Vec<Feature>,
    pub alpha: Vec<f64>,
    /// Σ wᵢ zᵢ (not normalized by alpha).
    pub depth: Vec<f64>,
}

impl RenderOutput {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            color: vec![[0.0; 3]; n],
            feature: vec![[0.0; FEATURE_DIM]; n],
            alpha: vec![0.0; n],
            depth: vec![0.0; n],
        }
    }

    pub fn color_image(&self) -> crate::image::RgbImage {
        crate::image::RgbImage {
            width: self.width,
            height: self.height,
            pixels: self.color.clone(),
        }
    }

    pub(crate) fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        let n = width * height;
        if self.width != width
            || self.height != height
            || self.color.len() != n
            || self.feature.len() != n
            || self.alpha.len() != n
            || self.depth.len() != n
        {
            return Err(Error::shape(
                format!("{width}x{height} render buffers"),
                format!("{}x{} render buffers", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Sorted splats plus per-tile lists of indices into the sorted order.
pub(crate) struct TileBins {
    pub sorted: Vec<Projected2DGaussian>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
}

impl TileBins {
    pub fn build(scene: &SceneModel, cam: &Camera) -> Self {
        let sorted = project_sorted(scene, cam);
        let tiles_x = cam.width.div_ceil(TILE_SIZE);
        let tiles_y = cam.height.div_ceil(TILE_SIZE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (k, p) in sorted.iter().enumerate() {
            let Some(r) = p.contribution_radius() else {
                continue;
            };
            // Pixel centers x + 0.5 within [u - r, u + r].
            let Some((x0, x1)) = pixel_span(p.mean2d[0], r, cam.width) else {
                continue;
            };
            let Some((y0, y1)) = pixel_span(p.mean2d[1], r, cam.height) else {
                continue;
            };
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    tiles[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self { sorted, tiles, tiles_x }
    }

    pub fn tile_pixels(&self, tile: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width);
        let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height);
        ys.flat_map(move |y| xs.clone().map(move |x| (x, y)))
    }
}

fn pixel_span(center: f64, radius: f64, size: usize) -> Option<(usize, usize)> {
    let lo = (center - radius - 0.5).ceil().max(0.0);
    let hi = (center + radius - 0.5).floor().min(size as f64 - 1.0);
    if !(lo <= hi) {
        return None;
    }
    Some((lo as usize, hi as usize))
}

/// One accepted splat on a ray.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Contribution {
    /// Index into the sorted splat list.
    pub sorted_index: u32,
    /// αᵢ·gᵢ.
    pub alpha: f64,
    /// gᵢ.
    pub falloff: f64,
    /// Transmittance before this splat.
    pub transmittance: f64,
}

/// Walks the splats of one pixel front-to-back, applying the skip and
/// early-termination rules. Returns the final transmittance.
#[inline]
pub(crate) fn walk_pixel(
    px: f64,
    py: f64,
    list: &[u32],
    sorted: &[Projected2DGaussian],
    mut visit: impl FnMut(Contribution),
) -> f64 {
    let mut t = 1.0;
    for &k in list {
        let p = &sorted[k as usize];
        let g = p.falloff(px, py);
        let a = p.opacity * g;
        if a < MIN_ALPHA {
            continue;
        }
        visit(Contribution {
            sorted_index: k,
            alpha: a,
            falloff: g,
            transmittance: t,
        });
        t *= 1.0 - a;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    t
}

/// Forward render of the scene from `cam` over a constant `background` color.
pub fn rasterize(scene: &SceneModel, cam: &Camera, background: [f64; 3]) -> Result<RenderOutput> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let (w, h) = (cam.width, cam.height);
    let bins = TileBins::build(scene, cam);
    let tile_results: Vec<Vec<(usize, PixelValue)>> = (0..bins.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &bins.tiles[tile];
            bins.tile_pixels(tile, w, h)
                .map(|(x, y)| {
                    let mut v = PixelValue::default();
                    let t = walk_pixel(x as f64 + 0.5, y as f64 + 0.5, list, &bins.sorted, |c| {
                        let p = &bins.sorted[c.sorted_index as usize];
                        let g = &scene.gaussians[p.source_index];
                        let wgt = c.alpha * c.transmittance;
                        for ch in 0..3 {
                            v.color[ch] += wgt * g.color[ch];
                        }
                        for (acc, f) in v.feature.iter_mut().zip(&g.feature) {
                            *acc += wgt * f;
                        }
                        v.depth += wgt * p.depth;
                    });
                    v.transmittance = t;
                    (y * w + x, v)
                })
                .collect()
        })
        .collect();

    let mut out = RenderOutput::zeros(w, h);
    for (idx, v) in tile_results.into_iter().flatten() {
        let t = v.transmittance;
        out.color[idx] = [
            v.color[0] + t * background[0],
            v.color[1] + t * background[1],
            v.color[2] + t * background[2],
        ];
        out.feature[idx] = v.feature;
        out.alpha[idx] = 1.0 - t;
        out.depth[idx] = v.depth;
    }
    Ok(out)
}

#[derive(Clone, Copy)]
struct PixelValue {
    color: [f64; 3],
    feature: Feature,
    depth: f64,
    transmittance: f64,
}

impl Default for PixelValue {
    fn default() -> Self {
        Self {
            color: [0.0; 3],
            feature: [0.0; FEATURE_DIM],
            depth: 0.0,
            transmittance: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::logit;
    use crate::testutil::{random_camera, random_scene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn axis_camera(size: usize, f: f64) -> Camera {
        Camera::new(
            f,
            f,
            size as f64 / 2.0,
            size as f64 / 2.0,
            Matrix3::identity(),
            Vector3::zeros(),
            size,
            size,
        )
        .unwrap()
    }

    #[test]
    fn axis_point_projects_to_principal_point() {
        let cam = axis_camera(64, 100.0);
        let g = Gaussian::new([0.0, 0.0, 2.0]);
        let p = project(&g, &cam, 0).unwrap();
        assert_eq!(p.mean2d, [32.0, 32.0]);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn behind_camera_and_near_plane_culled() {
        let cam = axis_camera(64, 100.0);
        assert!(project(&Gaussian::new([0.0, 0.0, -1.0]), &cam, 0).is_none());
        assert!(project(&Gaussian::new([0.0, 0.0, 0.01]), &cam, 0).is_none());
    }

    #[test]
    fn offscreen_beyond_three_sigma_culled() {
        let cam = axis_camera(64, 100.0);
        let mut g = Gaussian::new([5.0, 0.0, 2.0]);
        g.log_scale = [(0.01f64).ln(); 3];
        assert!(project(&g, &cam, 0).is_none());
    }

    /// Numeric-Jacobian oracle: propagate Σ through a finite-difference
    /// Jacobian of the full world-to-pixel map.
    #[test]
    fn cov2d_matches_numeric_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cam = random_camera(&mut rng, 48, 40);
            let scene = random_scene(&mut rng, 1);
            let g = &scene.gaussians[0];
            let Some(p) = project(g, &cam, 0) else { continue };
            let pixel = |x: Vector3<f64>| {
                let t = cam.rotation * x + cam.translation;
                [cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy]
            };
            let h = 1e-6;
            let mut jac = Matrix2x3::zeros();
            for k in 0..3 {
                let mut e = Vector3::zeros();
                e[k] = h;
                let a = pixel(g.position_vec() + e);
                let b = pixel(g.position_vec() - e);
                jac[(0, k)] = (a[0] - b[0]) / (2.0 * h);
                jac[(1, k)] = (a[1] - b[1]) / (2.0 * h);
            }
            let expected = jac * g.covariance3d() * jac.transpose();
            let got = [p.cov2d[0] - COV2D_DILATION, p.cov2d[1], p.cov2d[2] - COV2D_DILATION];
            let exp = [expected[(0, 0)], expected[(0, 1)], expected[(1, 1)]];
            let scale = exp[0].abs().max(exp[2].abs());
            for (a, b) in got.iter().zip(&exp) {
                assert!((a - b).abs() <= 1e-6 * scale, "{got:?} vs {exp:?}");
            }
        }
    }

    #[test]
    fn single_centered_gaussian_composites_to_its_opacity() {
        let cam = axis_camera(64, 100.0);
        // Mean exactly on the center of pixel (32, 32).
        let mut g = Gaussian::new([0.5 * 2.0 / 100.0, 0.5 * 2.0 / 100.0, 2.0]);
        g.opacity_logit = logit(0.8);
        g.color = [1.0, 0.0, 0.0];
        g.log_scale = [(0.01f64).ln(); 3];
        let scene = SceneModel::new(vec![g]).unwrap();
        let out = rasterize(&scene, &cam, [0.0; 3]).unwrap();
        let idx = 32 * 64 + 32;
        assert!((out.color[idx][0] - 0.8).abs() < 1e-12);
        assert_eq!(out.color[idx][1], 0.0);
        assert!((out.alpha[idx] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn two_coincident_gaussians_composite_in_depth_order() {
        let cam = axis_camera(32, 100.0);
        let off = 0.5 / 100.0;
        let mut front = Gaussian::new([off * 2.0, off * 2.0, 2.0]);
        front.opacity_logit = 0.0;
        front.color = [1.0, 0.0, 0.0];
        front.log_scale = [(0.001f64).ln(); 3];
        let mut back = front.clone();
        back.position = [off * 3.0, off * 3.0, 3.0];
        back.color = [0.0, 1.0, 0.0];
        // Back listed first: ordering must come from depth, not storage.
        let scene = SceneModel::new(vec![back, front]).unwrap();
        let out = rasterize(&scene, &cam, [0.0; 3]).unwrap();
        let c = out.color[16 * 32 + 16];
        let g1 = (-0.5 * 0.0f64).exp();
        assert!((c[0] - 0.5 * g1).abs() < 1e-12);
        assert!((c[1] - 0.25).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn weights_sum_to_alpha_and_features_share_color_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let cam = random_camera(&mut rng, 40, 36);
            let mut scene = random_scene(&mut rng, 25);
            for g in scene.gaussians.iter_mut() {
                g.feature = [0.0; FEATURE_DIM];
                g.feature[..3].copy_from_slice(&g.color);
            }
            let bg = [0.3, 0.6, 0.9];
            let out = rasterize(&scene, &cam, bg).unwrap();
            let weights = reference::pixel_weights(&scene, &cam);
            for i in 0..cam.pixel_count() {
                let sum: f64 = weights[i].iter().map(|(_, w)| w).sum();
                assert!(weights[i].iter().all(|(_, w)| *w >= 0.0));
                assert!((sum - out.alpha[i]).abs() < 1e-12);
                assert!(out.alpha[i] <= 1.0 && out.alpha[i] >= 0.0);
                for ch in 0..3 {
                    let expect = out.color[i][ch] - (1.0 - out.alpha[i]) * bg[ch];
                    assert!((out.feature[i][ch] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cam = random_camera(&mut rng, 64, 48);
        let scene = random_scene(&mut rng, 60);
        let a = rasterize(&scene, &cam, [0.1; 3]).unwrap();
        let b = rasterize(&scene, &cam, [0.1; 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_depth_ties_break_by_index() {
        let cam = axis_camera(16, 50.0);
        let mut a = Gaussian::new([0.0, 0.0, 2.0]);
        a.opacity_logit = 1.0;
        a.color = [1.0, 0.0, 0.0];
        let mut b = a.clone();
        b.color = [0.0, 0.0, 1.0];
        let ab = rasterize(&SceneModel::new(vec![a.clone(), b.clone()]).unwrap(), &cam, [0.0; 3]).unwrap();
        let ba = rasterize(&SceneModel::new(vec![b, a]).unwrap(), &cam, [0.0; 3]).unwrap();
        // Index 0 is in front in both scenes.
        let i = 8 * 16 + 8;
        assert!(ab.color[i][0] > ab.color[i][2]);
        assert!(ba.color[i][2] > ba.color[i][0]);
    }

    #[test]
    fn empty_scene_rejected() {
        let cam = axis_camera(8, 10.0);
        let scene = SceneModel {
            gaussians: vec![],
            iteration: 0,
        };
        assert!(matches!(rasterize(&scene, &cam, [0.0; 3]), Err(Error::EmptyScene)));
    }
}
