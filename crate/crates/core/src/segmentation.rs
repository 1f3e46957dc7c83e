//! Inference on the feature field: 2D instance masks, prompt matching and
//! 3D object extraction.

use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::hull::ConvexHull;
use crate::image::{BinaryMask, InstanceMask};
use crate::losses::normalize;
use crate::metrics::iou;
use crate::model::{Camera, Feature, SceneModel, FEATURE_DIM};
use crate::rasterizer::{rasterize, RenderOutput};

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentConfig {
    /// Cosine similarity at or above which neighbors share an instance.
    pub threshold: f64,
    /// Pixels with lower alpha are background.
    pub foreground_alpha: f64,
    /// Components with fewer pixels fall back to background.
    pub min_component: usize,
    pub outlier_neighbors: usize,
    /// Outlier cut in standard deviations above the mean kNN distance.
    pub outlier_std: f64,
    /// Hull recovery admits Gaussians with similarity ≥ threshold × this.
    pub recovery_factor: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            foreground_alpha: 0.5,
            min_component: 20,
            outlier_neighbors: 10,
            outlier_std: 2.0,
            recovery_factor: 0.5,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.foreground_alpha) {
            return Err(Error::Config("foreground_alpha must lie in [0, 1]".into()));
        }
        if self.outlier_neighbors == 0 {
            return Err(Error::Config("outlier_neighbors must be positive".into()));
        }
        if !(self.outlier_std >= 0.0) || !(self.recovery_factor >= 0.0) {
            return Err(Error::Config(
                "outlier_std and recovery_factor must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self {
            threshold,
            ..self.clone()
        }
    }
}

/// Unit-length 16-d query vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeaturePrompt(Feature);

impl FeaturePrompt {
    pub fn new(v: Feature) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::InvalidInput(
                "feature prompt must be a finite nonzero vector".into(),
            ));
        }
        Ok(Self(v.map(|x| x / norm)))
    }

    pub fn vector(&self) -> &Feature {
        &self.0
    }

    /// Cosine similarity to an unnormalized feature (0 for a zero feature).
    pub fn similarity(&self, f: &Feature) -> f64 {
        let (u, _) = normalize(f);
        dot(&u, &self.0)
    }
}

fn dot(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("threshold must lie in (0, 1), got {t}")))
    }
}

pub fn render_instance_masks(scene: &SceneModel, cam: &Camera, cfg: &SegmentConfig) -> Result<InstanceMask> {
    check_threshold(cfg.threshold)?;
    let render = rasterize(scene, cam, [0.0; 3])?;
    Ok(instance_masks_from_render(&render, cfg))
}

/// Connected components of the 4-neighbor graph over foreground pixels,
/// with edges where normalized features have cosine ≥ threshold. IDs
/// follow decreasing component size, ties by first pixel in row-major order.
pub fn instance_masks_from_render(render: &RenderOutput, cfg: &SegmentConfig) -> InstanceMask {
    let (w, h) = (render.width, render.height);
    let unit: Vec<Feature> = render.feature.iter().map(|f| normalize(f).0).collect();
    let fg: Vec<bool> = render.alpha.iter().map(|&a| a >= cfg.foreground_alpha).collect();
    let linked = |p: usize, q: usize| fg[q] && dot(&unit[p], &unit[q]) >= cfg.threshold;

    let mut component = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !fg[start] || component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        component[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(p - 1);
            }
            if x + 1 < w {
                neighbors[1] = Some(p + 1);
            }
            if y > 0 {
                neighbors[2] = Some(p - w);
            }
            if y + 1 < h {
                neighbors[3] = Some(p + w);
            }
            for q in neighbors.into_iter().flatten() {
                if component[q] == usize::MAX && linked(p, q) {
                    component[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut rank = vec![0u32; sizes.len()];
    let mut next = 1;
    for c in order {
        if sizes[c] >= cfg.min_component {
            rank[c] = next;
            next += 1;
        }
    }
    InstanceMask {
        width: w,
        height: h,
        ids: component
            .iter()
            .map(|&c| if c == usize::MAX { 0 } else { rank[c] })
            .collect(),
    }
}

/// Instance ID with the highest IoU against the prompt, smaller ID on ties,
/// together with that IoU.
pub fn match_mask_to_instance(prompt: &BinaryMask, instances: &InstanceMask) -> Result<(u32, f64)> {
    instances.same_size(prompt.width, prompt.height)?;
    if prompt.is_empty() {
        return Err(Error::InvalidInput("prompt mask is empty".into()));
    }
    let mut best = None;
    for id in instances.labels() {
        let score = iou(prompt, &instances.binary(id))?;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((id, score));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("instance mask has no instances".into()))
}

pub fn feature_prompt_from_mask(
    scene: &SceneModel,
    cam: &Camera,
    prompt: &BinaryMask,
    cfg: &SegmentConfig,
) -> Result<FeaturePrompt> {
    let render = rasterize(scene, cam, [0.0; 3])?;
    feature_prompt_from_render(&render, prompt, cfg.foreground_alpha)
}

/// Normalized mean of normalized pixel features under the prompt, over
/// foreground pixels only.
pub fn feature_prompt_from_render(
    render: &RenderOutput,
    prompt: &BinaryMask,
    foreground_alpha: f64,
) -> Result<FeaturePrompt> {
    if (prompt.width, prompt.height) != (render.width, render.height) {
        return Err(Error::shape(
            format!("{}x{}", render.width, render.height),
            format!("{}x{}", prompt.width, prompt.height),
        ));
    }
    let mut sum = [0.0; FEATURE_DIM];
    let mut count = 0;
    for (i, _) in prompt.bits.iter().enumerate().filter(|(_, &b)| b) {
        if render.alpha[i] < foreground_alpha {
            continue;
        }
        let (u, _) = normalize(&render.feature[i]);
        for k in 0..FEATURE_DIM {
            sum[k] += u[k];
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoMatch);
    }
    FeaturePrompt::new(sum)
}

/// Index sets of each extraction stage and the final sub-model.
#[derive(Clone, Debug)]
pub struct Extraction {
    /// Stage 1: similarity ≥ threshold.
    pub selected: Vec<usize>,
    /// Stage 2: selected minus spatial outliers.
    pub survivors: Vec<usize>,
    /// Final: survivors plus hull-interior recoveries, ascending.
    pub indices: Vec<usize>,
    pub scene: SceneModel,
}

pub fn select_by_similarity(scene: &SceneModel, prompt: &FeaturePrompt, t: f64) -> Vec<usize> {
    (0..scene.len())
        .filter(|&i| prompt.similarity(&scene.gaussians[i].feature) >= t)
        .collect()
}

pub fn extract_object_3d(scene: &SceneModel, prompt: &FeaturePrompt, cfg: &SegmentConfig) -> Result<Extraction> {
    check_threshold(cfg.threshold)?;
    let t = cfg.threshold;
    let selected = select_by_similarity(scene, prompt, t);
    if selected.is_empty() {
        return Err(Error::NoMatch);
    }
    let positions: Vec<Vector3<f64>> = scene.gaussians.iter().map(|g| g.position_vec()).collect();
    let survivors = remove_outliers(&selected, &positions, cfg.outlier_neighbors, cfg.outlier_std);

    let mut indices = survivors.clone();
    let hull_points: Vec<Vector3<f64>> = survivors.iter().map(|&i| positions[i]).collect();
    if let Some(hull) = ConvexHull::build(&hull_points) {
        let floor = t * cfg.recovery_factor;
        let mut in_set = vec![false; scene.len()];
        survivors.iter().for_each(|&i| in_set[i] = true);
        for i in 0..scene.len() {
            if !in_set[i] && hull.contains(&positions[i]) && prompt.similarity(&scene.gaussians[i].feature) >= floor {
                indices.push(i);
            }
        }
        indices.sort_unstable();
    }
    let sub = scene.clone_subset(&indices)?;
    Ok(Extraction {
        selected,
        survivors,
        indices,
        scene: sub,
    })
}

/// Drops points whose mean distance to their k nearest neighbors within the
/// set exceeds mean + `std_factor` × standard deviation of that statistic.
fn remove_outliers(set: &[usize], positions: &[Vector3<f64>], k: usize, std_factor: f64) -> Vec<usize> {
    let k = k.min(set.len().saturating_sub(1));
    if k == 0 {
        return set.to_vec();
    }
    let mean_dist: Vec<f64> = set
        .iter()
        .map(|&i| {
            let mut d: Vec<f64> = set
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (positions[i] - positions[j]).norm())
                .collect();
            d.select_nth_unstable_by(k - 1, f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sigma = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    // Slack so that equal statistics never split on rounding.
    let cut = mu + std_factor * sigma + 1e-12 * mu;
    set.iter()
        .zip(&mean_dist)
        .filter(|(_, &d)| d <= cut)
        .map(|(&i, _)| i)
        .collect()
}
