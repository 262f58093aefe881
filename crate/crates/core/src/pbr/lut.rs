//! GGX microfacet helpers and the split-sum BRDF look-up table.
//!
//! The LUT stores the two scalar integrals (F1, F2) of the specular
//! split-sum over (cos theta, roughness) in [0,1]^2, endpoint-aligned so
//! that the rows at roughness 0/1 and the columns at cos 0/1 are exact
//! grid points. Baking uses the Hammersley sequence, so it is fully
//! deterministic.

use crate::error::{Error, Result};
use crate::img::{self, Image};
use crate::math::Vec3;
use crate::rng::hammersley;
use std::path::Path;

/// Disney remapping: microfacet alpha = roughness^2.
#[inline]
pub fn ggx_alpha(rough: f64) -> f64 {
    rough * rough
}

/// GGX normal distribution, n.h >= 0.
#[inline]
pub fn ggx_d(alpha: f64, nh: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = nh * nh * (a2 - 1.0) + 1.0;
    a2 / (std::f64::consts::PI * d * d)
}

/// Exact Smith GGX monodirectional shadowing.
#[inline]
pub fn smith_g1(alpha: f64, nv: f64) -> f64 {
    let nv = nv.max(1e-9);
    let a2 = alpha * alpha;
    2.0 * nv / (nv + (a2 + (1.0 - a2) * nv * nv).sqrt())
}

/// Importance-sample the GGX half-vector distribution (z-up local frame).
#[inline]
pub fn sample_ggx_h(alpha: f64, u1: f64, u2: f64) -> Vec3 {
    let phi = 2.0 * std::f64::consts::PI * u1;
    let a2 = alpha * alpha;
    let cos2 = (1.0 - u2) / (1.0 + (a2 - 1.0) * u2);
    let cos_t = cos2.sqrt();
    let sin_t = (1.0 - cos2).max(0.0).sqrt();
    Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t)
}

/// Cosine-weighted hemisphere direction (z-up local frame), pdf = cos/pi.
#[inline]
pub fn sample_cosine(u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    let z = (1.0 - u1).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSumLUT {
    pub size: usize,
    pub samples: u32,
    /// (F1, F2) pairs, row-major over [rough][cos].
    pub data: Vec<f64>,
}

/// Single (cos, rough) entry of the split-sum integral.
pub fn integrate_brdf(cos_theta: f64, rough: f64, samples: u32) -> (f64, f64) {
    let alpha = ggx_alpha(rough);
    let nv = cos_theta.max(1e-4);
    let v = Vec3::new((1.0 - nv * nv).max(0.0).sqrt(), 0.0, nv);
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..samples {
        let (u1, u2) = hammersley(i, samples);
        let h = sample_ggx_h(alpha, u1, u2);
        let l = h * (2.0 * v.dot(&h)) - v;
        let nl = l.z;
        if nl <= 0.0 {
            continue;
        }
        let nh = h.z.max(0.0);
        let vh = v.dot(&h).max(1e-9);
        let g = smith_g1(alpha, nv) * smith_g1(alpha, nl);
        // importance-sampled estimator: f_s/F * cos / pdf = G*vh/(nh*nv)
        let g_vis = g * vh / (nh.max(1e-9) * nv);
        let fc = (1.0 - vh).powi(5);
        a += (1.0 - fc) * g_vis;
        b += fc * g_vis;
    }
    let inv = 1.0 / samples as f64;
    (a * inv, b * inv)
}

pub fn bake_lut(size: usize, samples: u32) -> Result<SplitSumLUT> {
    if size < 2 {
        return Err(Error::Config(format!("lut size must be >= 2, got {size}")));
    }
    if samples == 0 {
        return Err(Error::Config("lut needs at least one sample".into()));
    }
    let mut data = vec![0.0; size * size * 2];
    for j in 0..size {
        let rough = j as f64 / (size - 1) as f64;
        for i in 0..size {
            let cos = i as f64 / (size - 1) as f64;
            let (f1, f2) = integrate_brdf(cos, rough, samples);
            data[(j * size + i) * 2] = f1;
            data[(j * size + i) * 2 + 1] = f2;
        }
    }
    Ok(SplitSumLUT {
        size,
        samples,
        data,
    })
}

impl SplitSumLUT {
    /// Bilinear (F1, F2) lookup.
    pub fn lookup(&self, cos_theta: f64, rough: f64) -> (f64, f64) {
        let (v, _) = self.lookup_grad(cos_theta, rough);
        v
    }

    /// Lookup plus partial derivatives d(F1,F2)/d(cos), d(F1,F2)/d(rough).
    pub fn lookup_grad(&self, cos_theta: f64, rough: f64) -> ((f64, f64), [[f64; 2]; 2]) {
        let n = self.size;
        let scale = (n - 1) as f64;
        let fu = (cos_theta.clamp(0.0, 1.0)) * scale;
        let fv = (rough.clamp(0.0, 1.0)) * scale;
        let i0 = (fu.floor() as usize).min(n - 2);
        let j0 = (fv.floor() as usize).min(n - 2);
        let du = fu - i0 as f64;
        let dv = fv - j0 as f64;
        let at = |i: usize, j: usize, k: usize| self.data[(j * n + i) * 2 + k];
        let mut vals = (0.0, 0.0);
        let mut grads = [[0.0; 2]; 2];
        for k in 0..2 {
            let v00 = at(i0, j0, k);
            let v10 = at(i0 + 1, j0, k);
            let v01 = at(i0, j0 + 1, k);
            let v11 = at(i0 + 1, j0 + 1, k);
            let v = (1.0 - du) * (1.0 - dv) * v00
                + du * (1.0 - dv) * v10
                + (1.0 - du) * dv * v01
                + du * dv * v11;
            let dcos_in = if (0.0..1.0).contains(&cos_theta) { scale } else { 0.0 };
            let drough_in = if (0.0..1.0).contains(&rough) { scale } else { 0.0 };
            let d_du = (v10 - v00) * (1.0 - dv) + (v11 - v01) * dv;
            let d_dv = (v01 - v00) * (1.0 - du) + (v11 - v10) * du;
            if k == 0 {
                vals.0 = v;
            } else {
                vals.1 = v;
            }
            grads[k][0] = d_du * dcos_in;
            grads[k][1] = d_dv * drough_in;
        }
        (vals, grads)
    }

    /// Cache as a T x T RGB PFM with channels (F1, F2, 0).
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let mut imgbuf = Image::new(self.size, self.size, 3);
        for j in 0..self.size {
            for i in 0..self.size {
                let p = imgbuf.px_mut(i, j);
                p[0] = self.data[(j * self.size + i) * 2];
                p[1] = self.data[(j * self.size + i) * 2 + 1];
            }
        }
        img::write_pfm(&imgbuf, path)
    }

    pub fn load_pfm(path: &Path) -> Result<SplitSumLUT> {
        let imgbuf = img::read_pfm(path)?;
        if imgbuf.w != imgbuf.h || imgbuf.channels != 3 {
            return Err(Error::Format(format!(
                "{}: expected square RGB lut pfm",
                path.display()
            )));
        }
        let n = imgbuf.w;
        let mut data = vec![0.0; n * n * 2];
        for j in 0..n {
            for i in 0..n {
                data[(j * n + i) * 2] = imgbuf.px(i, j)[0];
                data[(j * n + i) * 2 + 1] = imgbuf.px(i, j)[1];
            }
        }
        Ok(SplitSumLUT {
            size: n,
            samples: 0,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn entries_nonnegative_and_bounded() {
        let lut = bake_lut(16, 256).unwrap();
        for pair in lut.data.chunks(2) {
            assert!(pair[0] >= 0.0 && pair[0] <= 1.5, "F1 out of range: {}", pair[0]);
            assert!(pair[1] >= 0.0 && pair[1] <= 1.5, "F2 out of range: {}", pair[1]);
        }
    }

    #[test]
    fn high_sample_oracle_agreement() {
        // independent high-sample integration as oracle
        let lut = bake_lut(16, 4096).unwrap();
        for &(cos, rough) in &[(0.5, 0.3), (0.9, 0.8), (0.2, 0.6), (1.0, 0.0)] {
            let (o1, o2) = integrate_brdf(cos, rough, 1_000_000);
            let (f1, f2) = lut.lookup(cos, rough);
            assert!((f1 - o1).abs() <= 1e-2, "F1 {f1} vs oracle {o1} at ({cos},{rough})");
            assert!((f2 - o2).abs() <= 1e-2, "F2 {f2} vs oracle {o2} at ({cos},{rough})");
        }
    }

    #[test]
    fn f2_vanishes_for_smooth_surfaces_at_normal_incidence() {
        // mirror lobe at normal incidence has no grazing Fresnel boost
        let (_, f2) = integrate_brdf(0.95, 0.0, 4096);
        assert!(f2 < 1e-3, "F2 {f2} should vanish as rough -> 0, cos -> 1");
        let (f1, _) = integrate_brdf(0.95, 0.0, 4096);
        assert_relative_eq!(f1, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn lookup_gradients_match_finite_differences() {
        let lut = bake_lut(24, 512).unwrap();
        for &(c, r) in &[(0.42, 0.37), (0.8, 0.55), (0.15, 0.9)] {
            let (_, g) = lut.lookup_grad(c, r);
            let eps = 1e-6;
            let f = |c: f64, r: f64| lut.lookup(c, r);
            let (a1, a2) = f(c + eps, r);
            let (b1, b2) = f(c - eps, r);
            assert_relative_eq!(g[0][0], (a1 - b1) / (2.0 * eps), max_relative = 1e-4, epsilon = 1e-7);
            assert_relative_eq!(g[1][0], (a2 - b2) / (2.0 * eps), max_relative = 1e-4, epsilon = 1e-7);
            let (a1, a2) = f(c, r + eps);
            let (b1, b2) = f(c, r - eps);
            assert_relative_eq!(g[0][1], (a1 - b1) / (2.0 * eps), max_relative = 1e-4, epsilon = 1e-7);
            assert_relative_eq!(g[1][1], (a2 - b2) / (2.0 * eps), max_relative = 1e-4, epsilon = 1e-7);
        }
    }

    #[test]
    fn pfm_cache_round_trip() {
        let lut = bake_lut(8, 128).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lut.pfm");
        lut.save_pfm(&p).unwrap();
        let back = SplitSumLUT::load_pfm(&p).unwrap();
        assert_eq!(back.size, 8);
        for (a, b) in lut.data.iter().zip(&back.data) {
            assert_relative_eq!(*a as f32 as f64, *b, epsilon = 1e-9);
        }
    }
}
