//! Random scenes and cameras for unit tests.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Camera, Gaussian, SceneModel};

/// Camera on a random sphere of radius 3–5 looking near the origin.
pub fn random_camera(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Camera {
    loop {
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if dir.norm() < 0.2 {
            continue;
        }
        let eye = dir.normalize() * rng.random_range(3.0..5.0);
        let target = Vector3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        );
        let up = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 1.0);
        if (target - eye).normalize().cross(&up).norm() < 0.3 {
            continue;
        }
        let f = width as f64 * rng.random_range(1.0..1.6);
        return Camera::look_at(eye, target, up, f, f * rng.random_range(0.9..1.1), width, height).unwrap();
    }
}

pub fn random_gaussian(rng: &mut ChaCha8Rng) -> Gaussian {
    let mut g = Gaussian::new([
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
    ]);
    for s in g.log_scale.iter_mut() {
        *s = rng.random_range(0.05f64..0.35).ln();
    }
    for q in g.rotation.iter_mut() {
        *q = rng.random_range(-1.0..1.0);
    }
    g.opacity_logit = rng.random_range(-1.0..2.5);
    for c in g.color.iter_mut() {
        *c = rng.random_range(0.0..1.0);
    }
    for f in g.feature.iter_mut() {
        *f = rng.random_range(-1.0..1.0);
    }
    g
}

pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> SceneModel {
    SceneModel::new((0..n).map(|_| random_gaussian(rng)).collect()).unwrap()
}
