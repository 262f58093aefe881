//! Evaluation metrics: scale-fitted PSNR, SSIM, and the illumination
//! error suite (angular error, RMSE, normalized RMSE, scale-invariant
//! RMSE) on linear-HDR equirectangular maps.

use crate::error::{Error, Result};
use crate::img::Image;

pub const PSNR_CAP: f64 = 99.0;

fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// PSNR after the best per-channel affine map (scale + offset) of the
/// prediction onto the reference; capped at 99 dB.
pub fn metric_psnr(gt: &Image, pred: &Image) -> Result<f64> {
    gt.require_same_shape(pred, "psnr")?;
    let n = gt.w * gt.h;
    let mut total_sq = 0.0;
    for c in 0..gt.channels {
        let g: Vec<f64> = (0..n).map(|i| gt.data[i * gt.channels + c]).collect();
        let p: Vec<f64> = (0..n).map(|i| pred.data[i * gt.channels + c]).collect();
        let mg = g.iter().sum::<f64>() / n as f64;
        let mp = p.iter().sum::<f64>() / n as f64;
        let var: f64 = p.iter().map(|x| (x - mp) * (x - mp)).sum();
        let cov: f64 = p.iter().zip(&g).map(|(x, y)| (x - mp) * (y - mg)).sum();
        let s = if var > 1e-15 { cov / var } else { 0.0 };
        let b = mg - s * mp;
        total_sq += p
            .iter()
            .zip(&g)
            .map(|(x, y)| {
                let e = s * x + b - y;
                e * e
            })
            .sum::<f64>();
    }
    let m = total_sq / gt.data.len() as f64;
    if m <= 1e-12 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn gaussian_kernel_11() -> [f64; 11] {
    let sigma = 1.5;
    let mut k = [0.0; 11];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - 5.0;
        *v = (-x * x / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5, K1 = 0.01,
/// K2 = 0.03), evaluated on the valid interior and averaged over channels.
pub fn metric_ssim(gt: &Image, pred: &Image) -> Result<f64> {
    gt.require_same_shape(pred, "ssim")?;
    if gt.w < 11 || gt.h < 11 {
        return Err(Error::Shape("ssim needs at least 11x11 images".into()));
    }
    let k = gaussian_kernel_11();
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..gt.channels {
        for y in 5..gt.h - 5 {
            for x in 5..gt.w - 5 {
                let mut mu_g = 0.0;
                let mut mu_p = 0.0;
                let mut gg = 0.0;
                let mut pp = 0.0;
                let mut gp = 0.0;
                for dy in 0..11 {
                    for dx in 0..11 {
                        let w = k[dy] * k[dx];
                        let gv = gt.px(x + dx - 5, y + dy - 5)[ch];
                        let pv = pred.px(x + dx - 5, y + dy - 5)[ch];
                        mu_g += w * gv;
                        mu_p += w * pv;
                        gg += w * gv * gv;
                        pp += w * pv * pv;
                        gp += w * gv * pv;
                    }
                }
                let var_g = gg - mu_g * mu_g;
                let var_p = pp - mu_p * mu_p;
                let cov = gp - mu_g * mu_p;
                let ssim = ((2.0 * mu_g * mu_p + c1) * (2.0 * cov + c2))
                    / ((mu_g * mu_g + mu_p * mu_p + c1) * (var_g + var_p + c2));
                total += ssim;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IllumMetrics {
    pub angular_deg: f64,
    pub rmse: f64,
    pub norm_rmse: f64,
    pub si_rmse: f64,
}

/// Illumination metrics between linear-HDR equirectangular maps.
pub fn illum_metrics(gt: &Image, pred: &Image) -> Result<IllumMetrics> {
    gt.require_same_shape(pred, "illum_metrics")?;
    if gt.channels != 3 {
        return Err(Error::Shape("illum_metrics expects RGB maps".into()));
    }

    // angular: per-pixel angle between the RGB vectors, zero pixels skipped
    let mut ang_sum = 0.0;
    let mut ang_count = 0usize;
    for i in (0..gt.data.len()).step_by(3) {
        let g = [gt.data[i], gt.data[i + 1], gt.data[i + 2]];
        let p = [pred.data[i], pred.data[i + 1], pred.data[i + 2]];
        let ng = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if ng < 1e-12 || np < 1e-12 {
            continue;
        }
        let cos = ((g[0] * p[0] + g[1] * p[1] + g[2] * p[2]) / (ng * np)).clamp(-1.0, 1.0);
        ang_sum += cos.acos().to_degrees();
        ang_count += 1;
    }
    let angular_deg = if ang_count == 0 { 0.0 } else { ang_sum / ang_count as f64 };

    let rmse = mse(&gt.data, &pred.data).sqrt();

    // normalized: each map divided by its own mean
    let mg = gt.data.iter().sum::<f64>() / gt.data.len() as f64;
    let mp = pred.data.iter().sum::<f64>() / pred.data.len() as f64;
    let norm_rmse = if mg > 1e-12 && mp > 1e-12 {
        let a: Vec<f64> = gt.data.iter().map(|v| v / mg).collect();
        let b: Vec<f64> = pred.data.iter().map(|v| v / mp).collect();
        mse(&a, &b).sqrt()
    } else {
        rmse
    };

    // scale-invariant: least-squares scalar fit of the prediction
    let dot: f64 = gt.data.iter().zip(&pred.data).map(|(a, b)| a * b).sum();
    let pp: f64 = pred.data.iter().map(|b| b * b).sum();
    let alpha = if pp > 1e-15 { dot / pp } else { 0.0 };
    let scaled: Vec<f64> = pred.data.iter().map(|v| alpha * v).collect();
    let si_rmse = mse(&gt.data, &scaled).sqrt();

    Ok(IllumMetrics {
        angular_deg,
        rmse,
        norm_rmse,
        si_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_image(w: usize, h: usize, c: usize, seed: u64, lo: f64, hi: f64) -> Image {
        let mut img = Image::new(w, h, c);
        let mut rng = crate::rng::stream(seed, "metrics-test", 0);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(lo..hi);
        }
        img
    }

    #[test]
    fn psnr_caps_on_identical_and_scaled_images() {
        let img = random_image(16, 16, 3, 1, 0.0, 0.5);
        assert_eq!(metric_psnr(&img, &img).unwrap(), PSNR_CAP);
        let doubled = img.map(|v| 2.0 * v);
        assert_eq!(metric_psnr(&img, &doubled).unwrap(), PSNR_CAP);
    }

    #[test]
    fn psnr_of_uniform_noise_matches_sigma() {
        let clean = random_image(64, 64, 3, 2, 0.2, 0.8);
        let mut rng = crate::rng::stream(3, "noise", 0);
        let mut noisy = clean.clone();
        // zero-mean uniform noise with std 0.1: half-width 0.1*sqrt(3)
        let hw = 0.1 * 3.0f64.sqrt();
        for v in noisy.data.iter_mut() {
            *v += rng.gen_range(-hw..hw);
        }
        let psnr = metric_psnr(&clean, &noisy).unwrap();
        assert!((psnr - 20.0).abs() <= 0.5, "psnr {psnr}");
    }

    #[test]
    fn ssim_identity_is_one() {
        let img = random_image(32, 32, 3, 4, 0.0, 1.0);
        assert_relative_eq!(metric_ssim(&img, &img).unwrap(), 1.0, epsilon = 1e-9);
        let noisy = img.map(|v| (v + 0.3) % 1.0);
        assert!(metric_ssim(&img, &noisy).unwrap() < 0.9);
    }

    #[test]
    fn illum_identity_is_zero() {
        let img = random_image(32, 16, 3, 5, 0.0, 4.0);
        let m = illum_metrics(&img, &img).unwrap();
        assert_eq!(m.angular_deg, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.norm_rmse, 0.0);
        assert_eq!(m.si_rmse, 0.0);
    }

    #[test]
    fn illum_scale_invariances() {
        let img = random_image(32, 16, 3, 6, 0.1, 4.0);
        let doubled = img.map(|v| 2.0 * v);
        let m = illum_metrics(&img, &doubled).unwrap();
        assert!(m.angular_deg < 1e-9);
        assert!(m.si_rmse < 1e-10);
        assert!(m.rmse > 0.0);
        assert!(m.norm_rmse < 1e-10);

        // si-rmse constant in alpha > 0; norm-rmse invariant to common scale
        let pred = random_image(32, 16, 3, 7, 0.1, 4.0);
        let m1 = illum_metrics(&img, &pred).unwrap();
        let m2 = illum_metrics(&img, &pred.map(|v| 3.7 * v)).unwrap();
        assert!((m1.si_rmse - m2.si_rmse).abs() < 1e-10);
        let m3 = illum_metrics(&img.map(|v| 2.9 * v), &pred.map(|v| 2.9 * v)).unwrap();
        assert!((m1.norm_rmse - m3.norm_rmse).abs() < 1e-10);
    }

    #[test]
    fn angular_error_matches_per_pixel_oracle_under_channel_swap() {
        // red-dominant map with R and B swapped in the prediction
        let mut gt = random_image(16, 8, 3, 8, 0.05, 1.0);
        for i in (0..gt.data.len()).step_by(3) {
            gt.data[i] += 1.0; // boost red
        }
        let mut pred = gt.clone();
        for i in (0..pred.data.len()).step_by(3) {
            pred.data.swap(i, i + 2);
        }
        let m = illum_metrics(&gt, &pred).unwrap();
        // oracle: explicit arccos loop
        let mut sum = 0.0;
        let mut n = 0;
        for i in (0..gt.data.len()).step_by(3) {
            let g = [gt.data[i], gt.data[i + 1], gt.data[i + 2]];
            let p = [g[2], g[1], g[0]];
            let dot = g[0] * p[0] + g[1] * p[1] + g[2] * p[2];
            let ng = (g.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let np = (p.iter().map(|v| v * v).sum::<f64>()).sqrt();
            sum += (dot / (ng * np)).clamp(-1.0, 1.0).acos().to_degrees();
            n += 1;
        }
        assert_relative_eq!(m.angular_deg, sum / n as f64, epsilon = 1e-9);
        assert!(m.angular_deg > 1.0);
    }
}
