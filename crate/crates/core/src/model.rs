//! Scene representation: feature-augmented Gaussians and pinhole cameras.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Dimension of the per-Gaussian segmentation embedding.
pub const FEATURE_DIM: usize = 16;

/// Number of scalar parameters per Gaussian.
pub const PARAM_COUNT: usize = 3 + 3 + 4 + 1 + 3 + FEATURE_DIM;

/// Offsets of each parameter group inside [`Gaussian::params`].
pub mod offsets {
    pub const POSITION: usize = 0;
    pub const LOG_SCALE: usize = 3;
    pub const ROTATION: usize = 6;
    pub const OPACITY: usize = 10;
    pub const COLOR: usize = 11;
    pub const FEATURE: usize = 14;
}

pub type Feature = [f64; FEATURE_DIM];

/// One anisotropic 3D Gaussian with appearance and a segmentation feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub position: [f64; 3],
    /// Log of the per-axis standard deviation.
    pub log_scale: [f64; 3],
    /// Quaternion (w, x, y, z); normalized before use.
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    /// Linear RGB, view independent.
    pub color: [f64; 3],
    /// Unnormalized segmentation embedding.
    pub feature: Feature,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Gaussian {
    pub fn new(position: [f64; 3]) -> Self {
        Self {
            position,
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: 0.0,
            color: [0.5; 3],
            feature: [0.0; FEATURE_DIM],
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vector3<f64> {
        Vector3::new(
            self.log_scale[0].exp(),
            self.log_scale[1].exp(),
            self.log_scale[2].exp(),
        )
    }

    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quaternion_to_matrix(self.rotation)
    }

    /// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)).
    pub fn covariance3d(&self) -> Matrix3<f64> {
        let r = self.rotation_matrix();
        let s = self.scale();
        let l = r * Matrix3::from_diagonal(&s);
        l * l.transpose()
    }

    /// Flat parameter vector, laid out per [`offsets`].
    pub fn params(&self) -> [f64; PARAM_COUNT] {
        let mut p = [0.0; PARAM_COUNT];
        p[0..3].copy_from_slice(&self.position);
        p[3..6].copy_from_slice(&self.log_scale);
        p[6..10].copy_from_slice(&self.rotation);
        p[10] = self.opacity_logit;
        p[11..14].copy_from_slice(&self.color);
        p[14..].copy_from_slice(&self.feature);
        p
    }

    pub fn set_params(&mut self, p: &[f64; PARAM_COUNT]) {
        self.position.copy_from_slice(&p[0..3]);
        self.log_scale.copy_from_slice(&p[3..6]);
        self.rotation.copy_from_slice(&p[6..10]);
        self.opacity_logit = p[10];
        self.color.copy_from_slice(&p[11..14]);
        self.feature.copy_from_slice(&p[14..]);
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|s| s.exp() > 0.0 && s.exp().is_finite())
    }
}

/// Rotation matrix of the normalized quaternion (w, x, y, z).
pub fn quaternion_to_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// The full optimizable collection of Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub gaussians: Vec<Gaussian>,
    pub iteration: usize,
}

impl SceneModel {
    pub fn new(gaussians: Vec<Gaussian>) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::EmptyScene);
        }
        Ok(Self {
            gaussians,
            iteration: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Keeps exactly the selected Gaussians in their original order.
    pub fn clone_subset(&self, indices: &[usize]) -> Result<SceneModel> {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.len(),
            });
        }
        let gaussians: Vec<Gaussian> = sorted.iter().map(|&i| self.gaussians[i].clone()).collect();
        let mut out = SceneModel::new(gaussians)?;
        out.iteration = self.iteration;
        Ok(out)
    }
}

/// Pinhole camera. Camera frame: +x right, +y down, +z forward.
/// Pixel (0, 0) is the top-left pixel; its center is at (0.5, 0.5).
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

pub(crate) const ORTHONORMAL_TOL: f64 = 1e-6;

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput("principal point outside the image".into()));
        }
        let err = orthonormality_error(&self.rotation);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (error {err:e})"
            )));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::InvalidInput("rotation has determinant -1".into()));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("translation is not finite".into()));
        }
        Ok(())
    }

    /// Camera looking from `eye` at `target`; `up` is the world up direction.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            rotation,
            translation,
            width,
            height,
        )
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Max absolute entry of RᵀR − I.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}
