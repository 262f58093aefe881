//! Split-sum image-based-lighting shader (Disney GGX microfacet model).
//!
//! Outgoing radiance splits into a diffuse lookup and a specular lookup:
//!
//!   L = k_d * a * D(n)  +  (F0 * F1 + F2) * S(reflect(wo, n), rough)
//!
//! where D is the cosine-integrated irradiance map (1/pi folded in),
//! S is the roughness-indexed specular mip chain, (F1, F2) come from the
//! precomputed BRDF table, and
//!
//!   F0  = 0.04 (1 - m) + m a
//!   F_r = clamp(F0 + (1 - rough - F0) (1 - <n,wo>)^5, 0, 1)
//!   k_d = (1 - m)(1 - F_r)
//!
//! F2 already integrates the grazing Schlick boost, so the base reflectance
//! F0 multiplies F1; at rough = 0 the combination F0*F1 + F2 reduces to the
//! Schlick Fresnel F_r exactly (the mirror limit). The roughness-adjusted
//! F_r drives only the diffuse energy split k_d, which keeps the white
//! furnace bounded.
//!
//! Every output is differentiable (a.e.) in albedo, metalness, roughness,
//! normal, and the prefiltered environment texels; `shade_splitsum_vjp`
//! provides the hand-derived adjoint.

use super::lut::SplitSumLUT;
use super::prefilter::PrefilteredEnvironment;
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub albedo: [f64; 3],
    pub metal: f64,
    pub rough: f64,
    /// Unit surface normal.
    pub normal: Vec3,
    /// Unit direction toward the viewer.
    pub wo: Vec3,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ShadeParts {
    pub diffuse: [f64; 3],
    pub specular: [f64; 3],
}

impl ShadeParts {
    pub fn total(&self) -> [f64; 3] {
        [
            self.diffuse[0] + self.specular[0],
            self.diffuse[1] + self.specular[1],
            self.diffuse[2] + self.specular[2],
        ]
    }
}

/// Cotangents of the shading inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurfaceCot {
    pub albedo: [f64; 3],
    pub metal: f64,
    pub rough: f64,
    pub normal: Vec3,
}

/// F0 = 0.04 (1-m) + m a, componentwise.
pub fn fresnel_f0(albedo: [f64; 3], metal: f64) -> [f64; 3] {
    let mut f0 = [0.0; 3];
    for i in 0..3 {
        f0[i] = 0.04 * (1.0 - metal) + metal * albedo[i];
    }
    f0
}

/// Roughness-adjusted Schlick Fresnel, clamped to [0,1] componentwise.
pub fn fresnel(f0: [f64; 3], rough: f64, cos_theta: f64) -> [f64; 3] {
    let fc = (1.0 - cos_theta.clamp(0.0, 1.0)).powi(5);
    let mut fr = [0.0; 3];
    for i in 0..3 {
        fr[i] = (f0[i] + (1.0 - rough - f0[i]) * fc).clamp(0.0, 1.0);
    }
    fr
}

/// k_d = (1-m)(1-F_r), componentwise.
pub fn diffuse_weight(metal: f64, fr: [f64; 3]) -> [f64; 3] {
    let mut kd = [0.0; 3];
    for i in 0..3 {
        kd[i] = (1.0 - metal) * (1.0 - fr[i]);
    }
    kd
}

fn check_unit(v: Vec3, what: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("{what} must be a unit vector, |v| = {}", v.norm())));
    }
    Ok(())
}

struct ShadeCtx {
    cos_raw: f64,
    c: f64,
    fc: f64,
    f0: [f64; 3],
    pre: [f64; 3],
    fr: [f64; 3],
    kd: [f64; 3],
    diff: [f64; 3],
    f1: f64,
    f2: f64,
    lut_grads: [[f64; 2]; 2],
    r: Vec3,
    j0: usize,
    frac: f64,
    s0: [f64; 3],
    s1: [f64; 3],
    s: [f64; 3],
}

fn shade_ctx(sp: &SurfacePoint, env: &PrefilteredEnvironment, lut: &SplitSumLUT) -> ShadeCtx {
    let cos_raw = sp.normal.dot(&sp.wo);
    let c = cos_raw.clamp(0.0, 1.0);
    let fc = (1.0 - c).powi(5);
    let f0 = fresnel_f0(sp.albedo, sp.metal);
    let mut pre = [0.0; 3];
    let mut fr = [0.0; 3];
    for i in 0..3 {
        pre[i] = f0[i] + (1.0 - sp.rough - f0[i]) * fc;
        fr[i] = pre[i].clamp(0.0, 1.0);
    }
    let kd = diffuse_weight(sp.metal, fr);
    let diff = env.diffuse.sample_fast(sp.normal);
    let ((f1, f2), lut_grads) = lut.lookup_grad(c, sp.rough);

    let r = sp.normal * (2.0 * cos_raw) - sp.wo;
    let mips = env.mips();
    let level = (sp.rough.clamp(0.0, 1.0)) * mips as f64;
    let j0 = (level.floor() as usize).min(mips.saturating_sub(1));
    let frac = level - j0 as f64;
    let s0 = env.spec[j0].sample_fast(r);
    let s1 = env.spec[j0 + 1].sample_fast(r);
    let mut s = [0.0; 3];
    for i in 0..3 {
        s[i] = (1.0 - frac) * s0[i] + frac * s1[i];
    }
    ShadeCtx {
        cos_raw,
        c,
        fc,
        f0,
        pre,
        fr,
        kd,
        diff,
        f1,
        f2,
        lut_grads,
        r,
        j0,
        frac,
        s0,
        s1,
        s,
    }
}

/// Split-sum shade returning the diffuse/specular parts separately.
pub fn shade_splitsum_parts(
    sp: &SurfacePoint,
    env: &PrefilteredEnvironment,
    lut: &SplitSumLUT,
) -> Result<ShadeParts> {
    check_unit(sp.normal, "normal")?;
    check_unit(sp.wo, "view direction")?;
    let ctx = shade_ctx(sp, env, lut);
    let mut parts = ShadeParts::default();
    for i in 0..3 {
        parts.diffuse[i] = ctx.kd[i] * sp.albedo[i] * ctx.diff[i];
        parts.specular[i] = (ctx.f0[i] * ctx.f1 + ctx.f2) * ctx.s[i];
    }
    Ok(parts)
}

/// Split-sum shade, total radiance.
pub fn shade_splitsum(
    sp: &SurfacePoint,
    env: &PrefilteredEnvironment,
    lut: &SplitSumLUT,
) -> Result<[f64; 3]> {
    Ok(shade_splitsum_parts(sp, env, lut)?.total())
}

/// Unchecked shade for interior hot paths (inputs normalized by callers).
pub fn shade_splitsum_fast(
    sp: &SurfacePoint,
    env: &PrefilteredEnvironment,
    lut: &SplitSumLUT,
) -> [f64; 3] {
    let ctx = shade_ctx(sp, env, lut);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = ctx.kd[i] * sp.albedo[i] * ctx.diff[i] + (ctx.f0[i] * ctx.f1 + ctx.f2) * ctx.s[i];
    }
    out
}

/// Adjoint of `shade_splitsum`: accumulates material/normal cotangents into
/// `cot_sp` and prefiltered-environment texel cotangents into `cot_env`.
pub fn shade_splitsum_vjp(
    sp: &SurfacePoint,
    env: &PrefilteredEnvironment,
    lut: &SplitSumLUT,
    cot_out: [f64; 3],
    cot_sp: &mut SurfaceCot,
    cot_env: &mut PrefilteredEnvironment,
) {
    let ctx = shade_ctx(sp, env, lut);
    let m = sp.metal;

    let mut d_c = 0.0; // cotangent of the clamped cosine
    let mut d_f1 = 0.0;
    let mut d_f2 = 0.0;
    let mut d_rough = 0.0;
    let mut d_metal = 0.0;
    let mut cot_diff = [0.0; 3]; // w.r.t. the diffuse map sample
    let mut cot_s = [0.0; 3]; // w.r.t. the blended specular sample
    let dfc_dc = -5.0 * (1.0 - ctx.c).powi(4);

    for i in 0..3 {
        let g = cot_out[i];
        // diffuse branch: kd_i * a_i * D_i
        cot_sp.albedo[i] += g * ctx.kd[i] * ctx.diff[i];
        cot_diff[i] = g * ctx.kd[i] * sp.albedo[i];
        d_metal += g * -(1.0 - ctx.fr[i]) * sp.albedo[i] * ctx.diff[i];

        // specular branch: (f0_i F1 + F2) s_i
        d_f1 += g * ctx.f0[i] * ctx.s[i];
        d_f2 += g * ctx.s[i];
        cot_s[i] = g * (ctx.f0[i] * ctx.f1 + ctx.f2);
        let mut d_f0 = g * ctx.f1 * ctx.s[i];

        // roughness-adjusted Fresnel feeds the diffuse weight only
        let d_fr = g * -(1.0 - m) * sp.albedo[i] * ctx.diff[i];
        if ctx.pre[i] > 0.0 && ctx.pre[i] < 1.0 {
            // pre = f0 (1 - fc) + (1 - rough) fc
            d_f0 += d_fr * (1.0 - ctx.fc);
            d_rough += d_fr * -ctx.fc;
            d_c += d_fr * (1.0 - sp.rough - ctx.f0[i]) * dfc_dc;
        }
        // f0 = 0.04 (1 - m) + m a
        cot_sp.albedo[i] += d_f0 * m;
        d_metal += d_f0 * (sp.albedo[i] - 0.04);
    }

    // LUT dependence on (c, rough)
    d_c += d_f1 * ctx.lut_grads[0][0] + d_f2 * ctx.lut_grads[1][0];
    d_rough += d_f1 * ctx.lut_grads[0][1] + d_f2 * ctx.lut_grads[1][1];

    // specular mip blend: s = (1-frac) s0 + frac s1, frac = rough*M - j0
    let mips = env.mips() as f64;
    for i in 0..3 {
        d_rough += cot_s[i] * (ctx.s1[i] - ctx.s0[i]) * mips;
    }

    // scatter into the prefiltered maps and collect direction cotangents
    let mut cot_r = Vec3::zeros();
    let mut cot_n_dir = Vec3::zeros();
    let cot_s0 = [
        cot_s[0] * (1.0 - ctx.frac),
        cot_s[1] * (1.0 - ctx.frac),
        cot_s[2] * (1.0 - ctx.frac),
    ];
    let cot_s1 = [cot_s[0] * ctx.frac, cot_s[1] * ctx.frac, cot_s[2] * ctx.frac];
    env.spec[ctx.j0].sample_adjoint(ctx.r, cot_s0, Some(&mut cot_env.spec[ctx.j0]), Some(&mut cot_r));
    env.spec[ctx.j0 + 1].sample_adjoint(
        ctx.r,
        cot_s1,
        Some(&mut cot_env.spec[ctx.j0 + 1]),
        Some(&mut cot_r),
    );
    env.diffuse
        .sample_adjoint(sp.normal, cot_diff, Some(&mut cot_env.diffuse), Some(&mut cot_n_dir));

    // r = 2 (n.wo) n - wo:  cot_n += 2 (n.cot_r) wo + 2 (n.wo) cot_r
    cot_sp.normal += cot_n_dir;
    cot_sp.normal += sp.wo * (2.0 * sp.normal.dot(&cot_r)) + cot_r * (2.0 * ctx.cos_raw);
    // c = clamp(n.wo, 0, 1)
    if ctx.cos_raw > 0.0 && ctx.cos_raw < 1.0 {
        cot_sp.normal += sp.wo * d_c;
    }
    cot_sp.metal += d_metal;
    cot_sp.rough += d_rough;
}
