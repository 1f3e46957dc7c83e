//! Per-view prototype contrastive loss between rendered features and a 2D
//! instance mask.
//!
//! Labeled pixels are sampled, their features normalized, and each mask ID
//! present among the samples gets a prototype: the normalized mean of its
//! members. Each sample is scored by cross-entropy over cosine/τ logits
//! against all prototypes. The gradient is exact, including the path through
//! the prototypes.

use rand::seq::index;

use super::{normalize, normalize_backward, LossConfig};
use crate::error::{Error, Result};
use crate::image::InstanceMask;
use crate::model::{Feature, FEATURE_DIM};
use crate::rng::stream_rng;

#[derive(Clone, Debug)]
pub struct ContrastiveLoss {
    pub loss: f64,
    /// ∂loss/∂feature image; zero at unsampled pixels.
    pub grad: Vec<Feature>,
    pub samples: usize,
    pub classes: usize,
}

/// Labeled pixel indices chosen for one evaluation, ascending.
pub fn sample_pixels(mask: &InstanceMask, count: usize, seed: u64) -> Vec<usize> {
    let labeled: Vec<usize> = (0..mask.ids.len()).filter(|&i| mask.ids[i] != 0).collect();
    if labeled.len() <= count {
        return labeled;
    }
    let mut rng = stream_rng(seed, 0);
    let mut chosen: Vec<usize> = index::sample(&mut rng, labeled.len(), count)
        .into_iter()
        .map(|k| labeled[k])
        .collect();
    chosen.sort_unstable();
    chosen
}

fn dot(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn contrastive_clustering_loss(
    features: &[Feature],
    mask: &InstanceMask,
    cfg: &LossConfig,
    seed: u64,
) -> Result<ContrastiveLoss> {
    if features.len() != mask.ids.len() {
        return Err(Error::shape(
            format!("{} mask pixels", mask.ids.len()),
            format!("{} feature pixels", features.len()),
        ));
    }
    let mut result = ContrastiveLoss {
        loss: 0.0,
        grad: vec![[0.0; FEATURE_DIM]; features.len()],
        samples: 0,
        classes: 0,
    };
    let pixels = sample_pixels(mask, cfg.samples_per_view, seed);

    // Classes in order of first appearance so the arithmetic never depends
    // on the ID values themselves.
    let mut class_ids: Vec<u32> = Vec::new();
    let labels: Vec<usize> = pixels
        .iter()
        .map(|&p| {
            let id = mask.ids[p];
            match class_ids.iter().position(|&c| c == id) {
                Some(k) => k,
                None => {
                    class_ids.push(id);
                    class_ids.len() - 1
                }
            }
        })
        .collect();
    let k_count = class_ids.len();
    result.samples = pixels.len();
    result.classes = k_count;
    if k_count < 2 {
        return Ok(result);
    }

    let unit: Vec<(Feature, f64)> = pixels.iter().map(|&p| normalize(&features[p])).collect();
    let mut sums = vec![[0.0; FEATURE_DIM]; k_count];
    let mut members = vec![0usize; k_count];
    for ((f, _), &y) in unit.iter().zip(&labels) {
        members[y] += 1;
        for d in 0..FEATURE_DIM {
            sums[y][d] += f[d];
        }
    }
    let means: Vec<Feature> = sums
        .iter()
        .zip(&members)
        .map(|(s, &m)| s.map(|v| v / m as f64))
        .collect();
    let protos: Vec<(Feature, f64)> = means.iter().map(normalize).collect();

    let n = pixels.len() as f64;
    let tau = cfg.temperature;
    let scale = 1.0 / (n * tau);
    let mut loss = 0.0;
    let mut g_unit = vec![[0.0; FEATURE_DIM]; pixels.len()];
    let mut g_proto = vec![[0.0; FEATURE_DIM]; k_count];
    let mut logits = vec![0.0; k_count];
    for (i, ((f, _), &y)) in unit.iter().zip(&labels).enumerate() {
        for (k, (p, _)) in protos.iter().enumerate() {
            logits[k] = dot(f, p) / tau;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        loss += max + z.ln() - logits[y];
        for (k, (p, _)) in protos.iter().enumerate() {
            let coeff = (logits[k] - max).exp() / z - if k == y { 1.0 } else { 0.0 };
            for d in 0..FEATURE_DIM {
                g_unit[i][d] += scale * coeff * p[d];
                g_proto[k][d] += scale * coeff * f[d];
            }
        }
    }
    result.loss = loss / n;

    // Prototype path: p = m/|m|, m = mean of member unit features.
    let g_mean: Vec<Feature> = g_proto
        .iter()
        .zip(&protos)
        .map(|(g, (p, norm))| normalize_backward(p, *norm, g))
        .collect();
    for (i, &y) in labels.iter().enumerate() {
        for d in 0..FEATURE_DIM {
            g_unit[i][d] += g_mean[y][d] / members[y] as f64;
        }
    }
    for ((&p, (f, norm)), g) in pixels.iter().zip(&unit).zip(&g_unit) {
        result.grad[p] = normalize_backward(f, *norm, g);
    }
    Ok(result)
}
