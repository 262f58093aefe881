//! Unbiased Monte-Carlo reference shader for the reflectance integral.
//!
//! Estimates L_o = Int (k_d a/pi + f_s) L_i <w_i, n> dw_i over the upper
//! hemisphere with the same GGX + Smith + Schlick BRDF the split-sum path
//! approximates, using cosine/GGX multiple importance sampling (balance
//! heuristic). Serves as the oracle for `shade_splitsum`.

use super::brdf::{fresnel_f0, SurfacePoint};
use super::cubemap::Cubemap;
use super::lut::{ggx_alpha, ggx_d, sample_cosine, sample_ggx_h, smith_g1};
use crate::math::{onb, Vec3};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    /// Full Disney microfacet BRDF.
    Full,
    /// Lambertian only with Fresnel disabled (k_d = 1): analytic checks.
    DiffuseNoFresnel,
}

pub fn shade_reference_mc(
    sp: &SurfacePoint,
    env: &Cubemap,
    samples: u32,
    seed: u64,
    mode: McMode,
) -> [f64; 3] {
    let n = sp.normal;
    let v = sp.wo;
    let (t, b) = onb(n);
    let mut rng = crate::rng::stream(seed, "mc-shade", 0);

    if mode == McMode::DiffuseNoFresnel {
        // pdf = cos/pi cancels the integrand: mean of albedo * L
        let mut acc = [0.0; 3];
        for _ in 0..samples {
            let local = sample_cosine(rng.gen(), rng.gen());
            let l = t * local.x + b * local.y + n * local.z;
            let radiance = env.sample_fast(l);
            for i in 0..3 {
                acc[i] += sp.albedo[i] * radiance[i];
            }
        }
        return acc.map(|x| x / samples as f64);
    }

    let alpha = ggx_alpha(sp.rough).max(1e-6);
    let f0 = fresnel_f0(sp.albedo, sp.metal);
    let nv = n.dot(&v).max(1e-6);
    let n_cos = samples / 2;
    let n_ggx = samples - n_cos;

    let pdf_cos = |nl: f64| nl.max(0.0) / std::f64::consts::PI;
    let pdf_ggx = |l: Vec3| -> f64 {
        let h = (v + l).normalize();
        let nh = n.dot(&h).max(0.0);
        let vh = v.dot(&h).max(1e-9);
        ggx_d(alpha, nh) * nh / (4.0 * vh)
    };

    let mut acc = [0.0; 3];
    let mut contribute = |l: Vec3, acc: &mut [f64; 3]| {
        let nl = n.dot(&l);
        if nl <= 0.0 {
            return;
        }
        let radiance = env.sample_fast(l);
        let h = (v + l).normalize();
        let nh = n.dot(&h).max(0.0);
        let vh = v.dot(&h).max(1e-9);
        let d = ggx_d(alpha, nh);
        let g = smith_g1(alpha, nv) * smith_g1(alpha, nl);
        let fc = (1.0 - vh).powi(5);
        // balance heuristic over the two strategies
        let denom = n_cos as f64 * pdf_cos(nl) + n_ggx as f64 * pdf_ggx(l);
        if denom <= 1e-12 {
            return;
        }
        for i in 0..3 {
            let fresnel = f0[i] + (1.0 - f0[i]) * fc;
            let kd = (1.0 - sp.metal) * (1.0 - fresnel);
            let brdf =
                kd * sp.albedo[i] / std::f64::consts::PI + d * g * fresnel / (4.0 * nv * nl);
            acc[i] += brdf * radiance[i] * nl / denom;
        }
    };

    for _ in 0..n_cos {
        let local = sample_cosine(rng.gen(), rng.gen());
        let l = t * local.x + b * local.y + n * local.z;
        contribute(l, &mut acc);
    }
    for _ in 0..n_ggx {
        let hl = sample_ggx_h(alpha, rng.gen(), rng.gen());
        let h = t * hl.x + b * hl.y + n * hl.z;
        let l = h * (2.0 * v.dot(&h)) - v;
        contribute(l, &mut acc);
    }
    acc
}
