//! Mask overlap metrics with optimal instance matching.

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::image::{BinaryMask, InstanceMask};

/// Band width used for the boundary metric unless configured otherwise.
pub const DEFAULT_BOUNDARY_RADIUS: usize = 3;

/// |a ∩ b| / |a ∪ b|, or 1 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_size(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mask pixels within Chebyshev distance `radius` of a pixel outside the
/// mask. Pixels beyond the image border do not count as outside.
pub fn boundary_band(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let outside: Vec<bool> = mask.bits.iter().map(|&b| !b).collect();
    // Separable square dilation of the complement.
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            rows[y * w + x] = (lo..=hi).any(|xx| outside[y * w + xx]);
        }
    }
    let mut band = BinaryMask::new(w, h);
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            let near = (lo..=hi).any(|yy| rows[yy * w + x]);
            band.bits[y * w + x] = mask.bits[y * w + x] && near;
        }
    }
    band
}

pub fn boundary_iou(a: &BinaryMask, b: &BinaryMask, radius: usize) -> Result<f64> {
    a.check_same_size(b)?;
    if radius == 0 {
        return Err(Error::InvalidInput("boundary radius must be at least 1".into()));
    }
    iou(&boundary_band(a, radius), &boundary_band(b, radius))
}

/// Outcome of matching predicted instances to ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// Per ground-truth ID (ascending): matched prediction and its score.
    pub pairs: Vec<(u32, Option<u32>, f64)>,
    pub mean: f64,
}

/// Optimal one-to-one matching of predicted to ground-truth IDs maximizing
/// total IoU (or boundary IoU when `boundary` is set). Unmatched ground
/// truth scores 0.
pub fn match_instances(pred: &InstanceMask, gt: &InstanceMask, boundary: Option<usize>) -> Result<Matching> {
    pred.same_size(gt.width, gt.height)?;
    let gt_ids = gt.labels();
    if gt_ids.is_empty() {
        return Err(Error::InvalidInput("ground truth has no instances".into()));
    }
    let pred_ids = pred.labels();
    let score = |a: &BinaryMask, b: &BinaryMask| match boundary {
        Some(r) => boundary_iou(a, b, r),
        None => iou(a, b),
    };
    let gt_masks: Vec<BinaryMask> = gt_ids.iter().map(|&i| gt.binary(i)).collect();
    let pred_masks: Vec<BinaryMask> = pred_ids.iter().map(|&i| pred.binary(i)).collect();
    let mut weights = Vec::with_capacity(gt_ids.len());
    for g in &gt_masks {
        weights.push(pred_masks.iter().map(|p| score(g, p)).collect::<Result<Vec<f64>>>()?);
    }
    let assignment = max_weight_assignment(&weights);
    let pairs: Vec<(u32, Option<u32>, f64)> = gt_ids
        .iter()
        .zip(&assignment)
        .enumerate()
        .map(|(r, (&id, a))| match a {
            Some(c) => (id, Some(pred_ids[*c]), weights[r][*c]),
            None => (id, None, 0.0),
        })
        .collect();
    let mean = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(Matching { pairs, mean })
}

pub fn matched_mean_iou(pred: &InstanceMask, gt: &InstanceMask, boundary: Option<usize>) -> Result<f64> {
    Ok(match_instances(pred, gt, boundary)?.mean)
}
