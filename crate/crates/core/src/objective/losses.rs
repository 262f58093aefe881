//! Training losses. Every loss is a pixel-mean (resolution-independent
//! weighting), is zero at prediction == target, and has a hand-derived
//! VJP with respect to the prediction.

use crate::error::{Error, Result};
use crate::img::Image;
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberParams {
    pub cutoff: f64,
}

impl Default for HuberParams {
    fn default() -> Self {
        HuberParams { cutoff: 0.1 }
    }
}

fn mask_at(mask: &Image, x: usize, y: usize) -> f64 {
    mask.px(x, y)[0]
}

/// Mean Huber loss of the masked residual: quadratic 0.5 r^2 below the
/// cutoff, linear eps(|r| - eps/2) above. Mean over pixels * channels.
pub fn masked_huber(pred: &Image, gt: &Image, mask: &Image, params: &HuberParams) -> Result<f64> {
    pred.require_same_shape(gt, "masked_huber")?;
    if mask.w != pred.w || mask.h != pred.h {
        return Err(Error::Shape("masked_huber: mask size mismatch".into()));
    }
    let eps = params.cutoff;
    let mut total = 0.0;
    for y in 0..pred.h {
        for x in 0..pred.w {
            let m = mask_at(mask, x, y);
            let p = pred.px(x, y);
            let g = gt.px(x, y);
            for c in 0..pred.channels {
                let r = (m * (p[c] - g[c])).abs();
                total += if r <= eps { 0.5 * r * r } else { eps * (r - 0.5 * eps) };
            }
        }
    }
    Ok(total / pred.data.len() as f64)
}

/// d(masked_huber)/d(pred), accumulated into `cot_pred` scaled by `scale`.
pub fn masked_huber_vjp(
    pred: &Image,
    gt: &Image,
    mask: &Image,
    params: &HuberParams,
    scale: f64,
    cot_pred: &mut Image,
) {
    let eps = params.cutoff;
    let inv_n = scale / pred.data.len() as f64;
    for y in 0..pred.h {
        for x in 0..pred.w {
            let m = mask_at(mask, x, y);
            let p = pred.px(x, y);
            let g = gt.px(x, y);
            let out = cot_pred.idx(x, y);
            for c in 0..pred.channels {
                let r = m * (p[c] - g[c]);
                let drdp = m;
                let d = if r.abs() <= eps { r } else { eps * r.signum() };
                cot_pred.data[out + c] += inv_n * d * drdp;
            }
        }
    }
}

const BCE_EPS: f64 = 1e-6;

/// Mean binary cross-entropy; predictions clamped to [1e-6, 1-1e-6].
pub fn mask_bce(gt: &Image, pred: &Image) -> Result<f64> {
    gt.require_same_shape(pred, "mask_bce")?;
    let mut total = 0.0;
    for (g, p) in gt.data.iter().zip(&pred.data) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total += -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());
    }
    Ok(total / gt.data.len() as f64)
}

pub fn mask_bce_vjp(gt: &Image, pred: &Image, scale: f64, cot_pred: &mut Image) {
    let inv_n = scale / gt.data.len() as f64;
    for i in 0..gt.data.len() {
        let raw = pred.data[i];
        if !(BCE_EPS..=1.0 - BCE_EPS).contains(&raw) {
            continue; // clamped: subgradient zero
        }
        let g = gt.data[i];
        cot_pred.data[i] += inv_n * (-(g / raw) + (1.0 - g) / (1.0 - raw));
    }
}

/// Mean squared error of masked images (mask = None compares full images).
pub fn photometric(gt: &Image, pred: &Image, mask: Option<&Image>) -> Result<f64> {
    gt.require_same_shape(pred, "photometric")?;
    let mut total = 0.0;
    for y in 0..gt.h {
        for x in 0..gt.w {
            let m = mask.map_or(1.0, |mk| mask_at(mk, x, y));
            let g = gt.px(x, y);
            let p = pred.px(x, y);
            for c in 0..gt.channels {
                let r = m * (p[c] - g[c]);
                total += r * r;
            }
        }
    }
    Ok(total / gt.data.len() as f64)
}

pub fn photometric_vjp(
    gt: &Image,
    pred: &Image,
    mask: Option<&Image>,
    scale: f64,
    cot_pred: &mut Image,
) {
    let inv_n = scale / gt.data.len() as f64;
    for y in 0..gt.h {
        for x in 0..gt.w {
            let m = mask.map_or(1.0, |mk| mask_at(mk, x, y));
            let g = gt.px(x, y);
            let p = pred.px(x, y);
            let out = cot_pred.idx(x, y);
            for c in 0..gt.channels {
                cot_pred.data[out + c] += inv_n * 2.0 * m * m * (p[c] - g[c]);
            }
        }
    }
}

/// Mean absolute masked depth error.
pub fn depth_l1(gt: &Image, pred: &Image, mask: &Image) -> Result<f64> {
    gt.require_same_shape(pred, "depth_l1")?;
    let mut total = 0.0;
    for y in 0..gt.h {
        for x in 0..gt.w {
            let m = mask_at(mask, x, y);
            total += (m * (pred.px(x, y)[0] - gt.px(x, y)[0])).abs();
        }
    }
    Ok(total / gt.data.len() as f64)
}

pub fn depth_l1_vjp(gt: &Image, pred: &Image, mask: &Image, scale: f64, cot_pred: &mut Image) {
    let inv_n = scale / gt.data.len() as f64;
    for y in 0..gt.h {
        for x in 0..gt.w {
            let m = mask_at(mask, x, y);
            let r = m * (pred.px(x, y)[0] - gt.px(x, y)[0]);
            if r != 0.0 {
                let i = cot_pred.idx(x, y);
                cot_pred.data[i] += inv_n * r.signum() * m;
            }
        }
    }
}

/// Mean over foreground pixels (mask > 0.5) of 1 - <target, pred>.
/// Unit normals give values in [0, 2]; the target is treated as constant
/// (pseudo-ground-truth), so the VJP touches the prediction only.
pub fn normal_cosine(target: &Image, pred: &Image, mask: &Image) -> Result<f64> {
    target.require_same_shape(pred, "normal_cosine")?;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..target.h {
        for x in 0..target.w {
            if mask_at(mask, x, y) <= 0.5 {
                continue;
            }
            let t = target.px(x, y);
            let p = pred.px(x, y);
            total += 1.0 - (t[0] * p[0] + t[1] * p[1] + t[2] * p[2]);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

pub fn normal_cosine_vjp(target: &Image, mask: &Image, scale: f64, cot_pred: &mut Image) {
    let count = (0..target.h)
        .flat_map(|y| (0..target.w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask_at(mask, x, y) > 0.5)
        .count();
    if count == 0 {
        return;
    }
    let inv = scale / count as f64;
    for y in 0..target.h {
        for x in 0..target.w {
            if mask_at(mask, x, y) <= 0.5 {
                continue;
            }
            let t = target.px(x, y);
            let out = cot_pred.idx(x, y);
            for c in 0..3 {
                cot_pred.data[out + c] += -inv * t[c];
            }
        }
    }
}

/// Anisotropic total variation: mean of |dx| + |dy| (forward differences)
/// over channels * width * height.
pub fn tv(image: &Image) -> Result<f64> {
    if image.w < 2 || image.h < 2 {
        return Err(Error::Shape("tv needs at least a 2x2 image".into()));
    }
    let mut total = 0.0;
    for y in 0..image.h {
        for x in 0..image.w {
            let p = image.px(x, y);
            if x + 1 < image.w {
                let q = image.px(x + 1, y);
                for c in 0..image.channels {
                    total += (q[c] - p[c]).abs();
                }
            }
            if y + 1 < image.h {
                let q = image.px(x, y + 1);
                for c in 0..image.channels {
                    total += (q[c] - p[c]).abs();
                }
            }
        }
    }
    Ok(total / image.data.len() as f64)
}

pub fn tv_vjp(image: &Image, scale: f64, cot: &mut Image) {
    let inv = scale / image.data.len() as f64;
    for y in 0..image.h {
        for x in 0..image.w {
            let i = cot.idx(x, y);
            let p = image.px(x, y);
            if x + 1 < image.w {
                let j = cot.idx(x + 1, y);
                let q = image.px(x + 1, y);
                for c in 0..image.channels {
                    let s = (q[c] - p[c]).signum() * inv;
                    cot.data[j + c] += s;
                    cot.data[i + c] -= s;
                }
            }
            if y + 1 < image.h {
                let j = cot.idx(x, y + 1);
                let q = image.px(x, y + 1);
                for c in 0..image.channels {
                    let s = (q[c] - p[c]).signum() * inv;
                    cot.data[j + c] += s;
                    cot.data[i + c] -= s;
                }
            }
        }
    }
}

/// TV restricted to pixel pairs that are both foreground (mask > 0.5);
/// same normalization as `tv`, so the regularizer smooths the object
/// without fighting the silhouette.
pub fn tv_masked(image: &Image, mask: &Image) -> Result<f64> {
    if image.w < 2 || image.h < 2 {
        return Err(Error::Shape("tv needs at least a 2x2 image".into()));
    }
    let fg = |x: usize, y: usize| mask_at(mask, x, y) > 0.5;
    let mut total = 0.0;
    for y in 0..image.h {
        for x in 0..image.w {
            if !fg(x, y) {
                continue;
            }
            let p = image.px(x, y);
            if x + 1 < image.w && fg(x + 1, y) {
                let q = image.px(x + 1, y);
                for c in 0..image.channels {
                    total += (q[c] - p[c]).abs();
                }
            }
            if y + 1 < image.h && fg(x, y + 1) {
                let q = image.px(x, y + 1);
                for c in 0..image.channels {
                    total += (q[c] - p[c]).abs();
                }
            }
        }
    }
    Ok(total / image.data.len() as f64)
}

pub fn tv_masked_vjp(image: &Image, mask: &Image, scale: f64, cot: &mut Image) {
    let fg = |x: usize, y: usize| mask_at(mask, x, y) > 0.5;
    let inv = scale / image.data.len() as f64;
    for y in 0..image.h {
        for x in 0..image.w {
            if !fg(x, y) {
                continue;
            }
            let i = cot.idx(x, y);
            let p = image.px(x, y);
            if x + 1 < image.w && fg(x + 1, y) {
                let j = cot.idx(x + 1, y);
                let q = image.px(x + 1, y);
                for c in 0..image.channels {
                    let s = (q[c] - p[c]).signum() * inv;
                    cot.data[j + c] += s;
                    cot.data[i + c] -= s;
                }
            }
            if y + 1 < image.h && fg(x, y + 1) {
                let j = cot.idx(x, y + 1);
                let q = image.px(x, y + 1);
                for c in 0..image.channels {
                    let s = (q[c] - p[c]).signum() * inv;
                    cot.data[j + c] += s;
                    cot.data[i + c] -= s;
                }
            }
        }
    }
}

/// MSE between log1p-compressed HDR equirectangular maps.
pub fn env_loss(gt: &Image, pred: &Image) -> Result<f64> {
    gt.require_same_shape(pred, "env_loss")?;
    let mut total = 0.0;
    for (g, p) in gt.data.iter().zip(&pred.data) {
        let r = p.max(0.0).ln_1p() - g.max(0.0).ln_1p();
        total += r * r;
    }
    Ok(total / gt.data.len() as f64)
}

pub fn env_loss_vjp(gt: &Image, pred: &Image, scale: f64, cot_pred: &mut Image) {
    let inv = scale / gt.data.len() as f64;
    for i in 0..gt.data.len() {
        let p = pred.data[i];
        if p < 0.0 {
            continue;
        }
        let r = p.ln_1p() - gt.data[i].max(0.0).ln_1p();
        cot_pred.data[i] += inv * 2.0 * r / (1.0 + p);
    }
}

/// Per-term weights of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub photometric: f64,
    pub synthetic: f64,
    pub mask: f64,
    pub normal: f64,
    pub tv: f64,
    pub depth: f64,
    pub env: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            photometric: 1.0,
            synthetic: 1.0,
            mask: 1.0,
            normal: 0.1,
            tv: 0.1,
            depth: 0.1,
            env: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.photometric,
            self.synthetic,
            self.mask,
            self.normal,
            self.tv,
            self.depth,
            self.env,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synthetic,
    Real,
}

/// Computed per-term values; absent terms contribute nothing.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct LossTerms {
    pub photometric: Option<f64>,
    pub synthetic: Option<f64>,
    pub mask: Option<f64>,
    pub normal: Option<f64>,
    pub tv: Option<f64>,
    pub depth: Option<f64>,
    pub env: Option<f64>,
}

/// Weighted sum with data-kind gating: real data never sees the synthetic
/// (material supervision) or environment terms.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, kind: DataKind) -> Result<f64> {
    weights.validate()?;
    let mut total = 0.0;
    let mut add = |t: Option<f64>, w: f64| {
        if let Some(v) = t {
            total += w * v;
        }
    };
    add(terms.photometric, weights.photometric);
    add(terms.mask, weights.mask);
    add(terms.normal, weights.normal);
    add(terms.tv, weights.tv);
    add(terms.depth, weights.depth);
    if kind == DataKind::Synthetic {
        add(terms.synthetic, weights.synthetic);
        add(terms.env, weights.env);
    }
    Ok(total)
}
