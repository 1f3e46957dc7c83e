//! Spatial-similarity regularization on per-Gaussian features.
//!
//! Near term: each Gaussian's `knn_k` nearest neighbors (by center distance)
//! should share its feature direction, 1 − cos. Far term: `far_m` random
//! partners drawn from beyond three times its k-th neighbor distance should
//! not point the same way, max(0, cos).

use rand::Rng;

use super::{normalize, normalize_backward, LossConfig};
use crate::error::{Error, Result};
use crate::model::{Feature, SceneModel, FEATURE_DIM};
use crate::rng::stream_rng;

#[derive(Clone, Debug)]
pub struct Regularization {
    /// lambda_near·near + lambda_far·far.
    pub loss: f64,
    pub near: f64,
    pub far: f64,
    /// ∂loss/∂feature per Gaussian.
    pub grad: Vec<Feature>,
}

/// Neighbor structure of one scene: k nearest neighbors and far-partner
/// samples per Gaussian.
#[derive(Clone, Debug)]
pub struct NeighborSets {
    pub near: Vec<Vec<usize>>,
    pub far: Vec<Vec<usize>>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

pub fn neighbor_sets(scene: &SceneModel, knn_k: usize, far_m: usize, seed: u64) -> Result<NeighborSets> {
    let n = scene.len();
    if n < knn_k + far_m + 1 {
        return Err(Error::InvalidInput(format!(
            "spatial regularization needs at least {} Gaussians, scene has {n}",
            knn_k + far_m + 1
        )));
    }
    let mut near = Vec::with_capacity(n);
    let mut far = Vec::with_capacity(n);
    let mut rng = stream_rng(seed, 1);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (i, gi) in scene.gaussians.iter().enumerate() {
        dists.clear();
        dists.extend(
            scene
                .gaussians
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, gj)| (dist2(&gi.position, &gj.position), j)),
        );
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let mut knn: Vec<(f64, usize)> = if knn_k < dists.len() {
            let (head, kth, _) = dists.select_nth_unstable_by(knn_k - 1, order);
            let mut v = head.to_vec();
            v.push(*kth);
            v
        } else {
            dists.clone()
        };
        knn.sort_by(order);
        let radius2 = knn.last().map_or(0.0, |d| d.0);
        // (3r)² with r the k-th neighbor distance.
        let cutoff = 9.0 * radius2;
        let candidates: Vec<usize> = dists.iter().filter(|d| d.0 > cutoff).map(|d| d.1).collect();
        let partners = if candidates.is_empty() {
            Vec::new()
        } else {
            (0..far_m)
                .map(|_| candidates[rng.random_range(0..candidates.len())])
                .collect()
        };
        near.push(knn.into_iter().map(|d| d.1).collect());
        far.push(partners);
    }
    Ok(NeighborSets { near, far })
}

fn dot(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates the regularizer on fixed neighbor sets.
pub fn regularization_on(scene: &SceneModel, sets: &NeighborSets, cfg: &LossConfig) -> Regularization {
    let n = scene.len();
    let unit: Vec<(Feature, f64)> = scene.gaussians.iter().map(|g| normalize(&g.feature)).collect();
    let mut g_unit = vec![[0.0; FEATURE_DIM]; n];

    let near_pairs: usize = sets.near.iter().map(Vec::len).sum();
    let mut near = 0.0;
    if near_pairs > 0 {
        let w = cfg.lambda_near / near_pairs as f64;
        for (i, js) in sets.near.iter().enumerate() {
            for &j in js {
                near += 1.0 - dot(&unit[i].0, &unit[j].0);
                for d in 0..FEATURE_DIM {
                    g_unit[i][d] -= w * unit[j].0[d];
                    g_unit[j][d] -= w * unit[i].0[d];
                }
            }
        }
        near /= near_pairs as f64;
    }

    let far_pairs: usize = sets.far.iter().map(Vec::len).sum();
    let mut far = 0.0;
    if far_pairs > 0 {
        let w = cfg.lambda_far / far_pairs as f64;
        for (i, js) in sets.far.iter().enumerate() {
            for &j in js {
                let c = dot(&unit[i].0, &unit[j].0);
                if c > 0.0 {
                    far += c;
                    for d in 0..FEATURE_DIM {
                        g_unit[i][d] += w * unit[j].0[d];
                        g_unit[j][d] += w * unit[i].0[d];
                    }
                }
            }
        }
        far /= far_pairs as f64;
    }

    let grad = unit
        .iter()
        .zip(&g_unit)
        .map(|((f, norm), g)| normalize_backward(f, *norm, g))
        .collect();
    Regularization {
        loss: cfg.lambda_near * near + cfg.lambda_far * far,
        near,
        far,
        grad,
    }
}

pub fn spatial_regularization(scene: &SceneModel, cfg: &LossConfig, seed: u64) -> Result<Regularization> {
    let sets = neighbor_sets(scene, cfg.knn_k, cfg.far_m, seed)?;
    Ok(regularization_on(scene, &sets, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> SceneModel {
        SceneModel::new(
            (0..n)
                .map(|_| {
                    let mut g = Gaussian::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                    g.feature = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    g
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_features_zero_near_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_scene(&mut rng, 30);
        let f = s.gaussians[0].feature;
        s.gaussians.iter_mut().for_each(|g| g.feature = f.map(|v| v * 2.0));
        let r = spatial_regularization(&s, &LossConfig::default(), 3).unwrap();
        assert!(r.near.abs() < 1e-12);
        // Parallel features all count as fully similar in the far term.
        assert!(r.far > 0.99);
    }

    #[test]
    fn orthogonal_pair_contributes_one() {
        // Two well separated pairs; k = 1 pairs each Gaussian with its
        // partner.
        let positions = [[0.0, 0.0, 0.0], [0.01, 0.0, 0.0], [10.0, 0.0, 0.0], [10.02, 0.0, 0.0]];
        let mut gs: Vec<Gaussian> = positions.iter().map(|&p| Gaussian::new(p)).collect();
        gs[0].feature[0] = 1.0;
        gs[1].feature[1] = 1.0;
        gs[2].feature[2] = 1.0;
        gs[3].feature[2] = 3.0;
        let scene = SceneModel::new(gs).unwrap();
        let cfg = LossConfig {
            knn_k: 1,
            far_m: 1,
            ..LossConfig::default()
        };
        let sets = neighbor_sets(&scene, 1, 1, 0).unwrap();
        assert_eq!(sets.near, vec![vec![1], vec![0], vec![3], vec![2]]);
        let r = regularization_on(&scene, &sets, &cfg);
        // Pairs (0,1) and (1,0) are orthogonal, (2,3) and (3,2) parallel.
        assert!((r.near - 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_few_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_scene(&mut rng, 10);
        assert!(spatial_regularization(&s, &LossConfig::default(), 0).is_err());
    }

    #[test]
    fn far_partners_are_far() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_scene(&mut rng, 60);
        let sets = neighbor_sets(&s, 5, 5, 4).unwrap();
        for (i, (near, far)) in sets.near.iter().zip(&sets.far).enumerate() {
            let r = dist2(&s.gaussians[i].position, &s.gaussians[*near.last().unwrap()].position).sqrt();
            for &j in far {
                assert!(dist2(&s.gaussians[i].position, &s.gaussians[j].position).sqrt() > 3.0 * r);
            }
            assert!(!near.contains(&i));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scene(&mut rng, 30);
        let cfg = LossConfig::default();
        let r = spatial_regularization(&s, &cfg, 8).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        for i in 0..s.len() {
            for d in 0..FEATURE_DIM {
                let mut p = s.clone();
                p.gaussians[i].feature[d] += h;
                let mut m = s.clone();
                m.gaussians[i].feature[d] -= h;
                let fd = (spatial_regularization(&p, &cfg, 8).unwrap().loss
                    - spatial_regularization(&m, &cfg, 8).unwrap().loss)
                    / (2.0 * h);
                let an = r.grad[i][d];
                if an.abs() > 1e-6 {
                    checked += 1;
                    assert!((an - fd).abs() / an.abs() < 1e-4, "{i},{d}: {an} vs {fd}");
                }
            }
        }
        assert!(checked > 300);
    }
}
