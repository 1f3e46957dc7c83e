//! Photometric loss: (1 − λ)·L1 + λ·(1 − SSIM) with an analytic gradient.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) applied separably with zero
//! padding, per channel, and the map is averaged over all pixels and
//! channels.

use crate::error::Result;
use crate::image::RgbImage;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn kernel() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut k = [0.0; WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Same-size separable Gaussian blur with zero padding. The operator is
/// symmetric, so it is also its own adjoint.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let half = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = x as isize + i as isize - half;
                if sx >= 0 && (sx as usize) < w {
                    acc += kv * src[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = y as isize + i as isize - half;
                if sy >= 0 && (sy as usize) < h {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn channel(img: &RgbImage, c: usize) -> Vec<f64> {
    img.pixels.iter().map(|p| p[c]).collect()
}

/// Mean SSIM of one channel and, if requested, its gradient with respect to `x`
/// (not yet divided by the element count).
fn ssim_channel(x: &[f64], y: &[f64], w: usize, h: usize, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let k = kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = blur(x, w, h, &k);
    let mu_y = blur(y, w, h, &k);
    let e_xx = blur(&xx, w, h, &k);
    let e_yy = blur(&yy, w, h, &k);
    let e_xy = blur(&xy, w, h, &k);

    let n = w * h;
    let mut total = 0.0;
    let (mut d_mu, mut d_xx, mut d_xy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (a, b) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - a * a;
        let var_y = e_yy[i] - b * b;
        let cov = e_xy[i] - a * b;
        let n1 = 2.0 * a * b + C1;
        let n2 = 2.0 * cov + C2;
        let d1 = a * a + b * b + C1;
        let d2 = var_x + var_y + C2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if want_grad {
            let dd = d1 * d2;
            d_mu[i] = (2.0 * b * n2 - 2.0 * b * n1) / dd - s * (2.0 * a / d1 - 2.0 * a / d2);
            d_xx[i] = -s / d2;
            d_xy[i] = 2.0 * n1 / dd;
        }
    }
    if !want_grad {
        return (total / n as f64, None);
    }
    let g_mu = blur(&d_mu, w, h, &k);
    let g_xx = blur(&d_xx, w, h, &k);
    let g_xy = blur(&d_xy, w, h, &k);
    let grad = (0..n)
        .map(|i| g_mu[i] + 2.0 * x[i] * g_xx[i] + y[i] * g_xy[i])
        .collect();
    (total / n as f64, Some(grad))
}

/// Mean SSIM over all channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    a.check_same_size(b)?;
    let mut total = 0.0;
    for c in 0..3 {
        total += ssim_channel(&channel(a, c), &channel(b, c), a.width, a.height, false).0;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Debug)]
pub struct RenderingLoss {
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    /// ∂loss/∂rendered, same layout as the image.
    pub grad: Vec<[f64; 3]>,
}

pub fn rendering_loss(rendered: &RgbImage, gt: &RgbImage, lambda_dssim: f64) -> Result<RenderingLoss> {
    rendered.check_same_size(gt)?;
    let (w, h) = (rendered.width, rendered.height);
    let count = (w * h * 3) as f64;
    let mut grad = vec![[0.0; 3]; w * h];
    let mut l1 = 0.0;
    for (i, (r, g)) in rendered.pixels.iter().zip(&gt.pixels).enumerate() {
        for c in 0..3 {
            let d = r[c] - g[c];
            l1 += d.abs();
            let sign = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[i][c] = (1.0 - lambda_dssim) * sign / count;
        }
    }
    l1 /= count;
    let mut ssim_total = 0.0;
    for c in 0..3 {
        let (s, g) = ssim_channel(&channel(rendered, c), &channel(gt, c), w, h, true);
        ssim_total += s;
        for (i, gv) in g.unwrap().iter().enumerate() {
            // mean over channels: each channel's mean carries weight 1/3
            grad[i][c] -= lambda_dssim * gv / count;
        }
    }
    let ssim = ssim_total / 3.0;
    Ok(RenderingLoss {
        loss: (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - ssim),
        l1,
        ssim,
        grad,
    })
}
