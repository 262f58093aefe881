//! Per-view rendering: G-buffer accumulation, deferred split-sum shading,
//! background compositing, pseudo-normals, and the hand-derived backward
//! pass for the whole chain.
//!
//! Buffer semantics: material channels are alpha-normalized (divide by
//! max(alpha, 1e-6)), the normal buffer is renormalized after
//! accumulation, depth is the weight-averaged ray parameter, mask is the
//! accumulated opacity. Shading runs once per pixel on the accumulated
//! buffers (deferred), with the view ray reversed as omega_o.

use super::camera::Camera;
use super::march::{march_ray, march_ray_backward, MarchConfig, MarchTape, RayAccum, SceneField};
use crate::error::Result;
use crate::field::VolumeField;
use crate::img::{self, Image};
use crate::math::Vec3;
use crate::pbr::brdf::{shade_splitsum_fast, shade_splitsum_vjp, SurfaceCot, SurfacePoint};
use crate::pbr::cubemap::Cubemap;
use crate::pbr::lut::SplitSumLUT;
use crate::pbr::prefilter::PrefilteredEnvironment;
use crate::pbr::tonemap::{tonemap_srgb, tonemap_srgb_deriv};
use rayon::prelude::*;
use std::path::Path;

/// Guard for alpha-normalization of accumulated channels.
pub const ALPHA_EPS: f64 = 1e-6;
/// Pixels with less opacity than this are not shaded.
pub const SHADE_ALPHA_MIN: f64 = 1e-4;
/// Minimum accumulated-normal length to define a surface orientation.
pub const NORMAL_EPS: f64 = 1e-9;

/// How the tone-mapped composite is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompositeOrder {
    /// tonemap(mask * shaded + (1-mask) * background): physically linear
    /// blending, the default.
    #[default]
    LinearThenTonemap,
    /// mask * tonemap(shaded) + (1-mask) * tonemap(background): blends
    /// display-space values instead.
    TonemapThenBlend,
}

#[derive(Debug, Clone)]
pub struct RenderBuffers {
    pub width: usize,
    pub height: usize,
    /// Alpha-normalized material channels.
    pub albedo: Image,
    pub metal: Image,
    pub rough: Image,
    /// Renormalized unit normals (zero vector on background).
    pub normal: Image,
    /// Raw weighted normal accumulation (pre-normalization).
    pub normal_accum: Image,
    /// Weight-averaged ray parameter.
    pub depth: Image,
    /// Accumulated opacity in [0,1].
    pub mask: Image,
    /// Linear shaded radiance (zero until `shade_buffers`).
    pub shaded: Image,
    /// Linear background radiance per pixel ray.
    pub background: Image,
    /// Tone-mapped composite.
    pub composite: Image,
}

impl RenderBuffers {
    pub fn new(width: usize, height: usize) -> Self {
        RenderBuffers {
            width,
            height,
            albedo: Image::new(width, height, 3),
            metal: Image::new(width, height, 1),
            rough: Image::new(width, height, 1),
            normal: Image::new(width, height, 3),
            normal_accum: Image::new(width, height, 3),
            depth: Image::new(width, height, 1),
            mask: Image::new(width, height, 1),
            shaded: Image::new(width, height, 3),
            background: Image::new(width, height, 3),
            composite: Image::new(width, height, 3),
        }
    }
}

fn pixel_key(cam: &Camera, ix: usize, iy: usize) -> u64 {
    (iy * cam.width + ix) as u64
}

/// March every pixel ray and fill the geometry/material buffers.
pub fn render_view<F: SceneField>(field: &F, cam: &Camera, cfg: &MarchConfig) -> Result<RenderBuffers> {
    cam.validate()?;
    cfg.validate()?;
    let mut bufs = RenderBuffers::new(cam.width, cam.height);

    let rows: Vec<Vec<RayAccum>> = (0..cam.height)
        .into_par_iter()
        .map(|iy| {
            let mut ctx = field.make_ctx();
            (0..cam.width)
                .map(|ix| {
                    let (o, d) = cam.ray_through_pixel(ix, iy);
                    march_ray(field, o, d, cfg, pixel_key(cam, ix, iy), &mut ctx)
                })
                .collect()
        })
        .collect();

    for (iy, row) in rows.iter().enumerate() {
        for (ix, acc) in row.iter().enumerate() {
            let inv = 1.0 / acc.alpha.max(ALPHA_EPS);
            for c in 0..3 {
                bufs.albedo.px_mut(ix, iy)[c] = acc.albedo[c] * inv;
            }
            bufs.metal.px_mut(ix, iy)[0] = acc.metal * inv;
            bufs.rough.px_mut(ix, iy)[0] = acc.rough * inv;
            bufs.depth.px_mut(ix, iy)[0] = acc.t_sum * inv;
            bufs.mask.px_mut(ix, iy)[0] = acc.alpha;
            let v = acc.normal;
            bufs.normal_accum.px_mut(ix, iy).copy_from_slice(&[v.x, v.y, v.z]);
            let norm = v.norm();
            if norm > NORMAL_EPS {
                let n = v / norm;
                bufs.normal.px_mut(ix, iy).copy_from_slice(&[n.x, n.y, n.z]);
            }
        }
    }
    Ok(bufs)
}

/// Pseudo-ground-truth normals: unproject each foreground pixel to the
/// expected termination depth and take the normalized negative density
/// gradient there (density decreases outward). Background pixels and
/// points outside the bounds yield the zero vector.
pub fn pseudo_normals<F: SceneField>(
    field: &F,
    cam: &Camera,
    depth: &Image,
    mask: &Image,
) -> Image {
    let mut out = Image::new(cam.width, cam.height, 3);
    let b = *field.bounds();
    let mut ctx = field.make_ctx();
    for iy in 0..cam.height {
        for ix in 0..cam.width {
            if mask.px(ix, iy)[0] <= 0.5 {
                continue;
            }
            let p = cam.unproject(ix, iy, depth.px(ix, iy)[0]);
            let inside = (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]);
            if !inside {
                continue;
            }
            let g = field.sigma_gradient(p, &mut ctx);
            let norm = g.norm();
            if norm > 1e-12 {
                let n = -g / norm;
                out.px_mut(ix, iy).copy_from_slice(&[n.x, n.y, n.z]);
            }
        }
    }
    out
}

fn surface_point_at(bufs: &RenderBuffers, ix: usize, iy: usize, wo: Vec3) -> Option<SurfacePoint> {
    if bufs.mask.px(ix, iy)[0] <= SHADE_ALPHA_MIN {
        return None;
    }
    let n = bufs.normal.px(ix, iy);
    let n = Vec3::new(n[0], n[1], n[2]);
    if n.norm_squared() < 0.25 {
        return None; // zero normal: no defined surface orientation
    }
    let a = bufs.albedo.px(ix, iy);
    Some(SurfacePoint {
        albedo: [a[0], a[1], a[2]],
        metal: bufs.metal.px(ix, iy)[0],
        rough: bufs.rough.px(ix, iy)[0],
        normal: n,
        wo,
    })
}

/// Deferred shading of the accumulated buffers.
pub fn shade_buffers(
    bufs: &mut RenderBuffers,
    env: &PrefilteredEnvironment,
    lut: &SplitSumLUT,
    cam: &Camera,
) {
    for iy in 0..cam.height {
        for ix in 0..cam.width {
            let (_, d) = cam.ray_through_pixel(ix, iy);
            if let Some(sp) = surface_point_at(bufs, ix, iy, -d) {
                let rgb = shade_splitsum_fast(&sp, env, lut);
                bufs.shaded.px_mut(ix, iy).copy_from_slice(&rgb);
            } else {
                bufs.shaded.px_mut(ix, iy).copy_from_slice(&[0.0; 3]);
            }
        }
    }
}

/// Background lookup plus tone-mapped compositing.
pub fn composite_background(
    bufs: &mut RenderBuffers,
    cam: &Camera,
    env_source: &Cubemap,
    order: CompositeOrder,
) {
    for iy in 0..cam.height {
        for ix in 0..cam.width {
            let (_, d) = cam.ray_through_pixel(ix, iy);
            let bg = env_source.sample_fast(d);
            bufs.background.px_mut(ix, iy).copy_from_slice(&bg);
            let m = bufs.mask.px(ix, iy)[0];
            let sh = bufs.shaded.px(ix, iy);
            let mut comp = [0.0; 3];
            match order {
                CompositeOrder::LinearThenTonemap => {
                    for c in 0..3 {
                        comp[c] = tonemap_srgb(m * sh[c] + (1.0 - m) * bg[c]);
                    }
                }
                CompositeOrder::TonemapThenBlend => {
                    for c in 0..3 {
                        comp[c] = m * tonemap_srgb(sh[c]) + (1.0 - m) * tonemap_srgb(bg[c]);
                    }
                }
            }
            bufs.composite.px_mut(ix, iy).copy_from_slice(&comp);
        }
    }
}

/// Everything the shading stages need, bundled.
pub struct ShadingContext<'a> {
    pub env_source: &'a Cubemap,
    pub prefiltered: &'a PrefilteredEnvironment,
    pub lut: &'a SplitSumLUT,
    pub order: CompositeOrder,
}

/// Full forward pipeline: march, shade, composite.
pub fn render_full<F: SceneField>(
    field: &F,
    cam: &Camera,
    cfg: &MarchConfig,
    shading: &ShadingContext,
) -> Result<RenderBuffers> {
    let mut bufs = render_view(field, cam, cfg)?;
    shade_buffers(&mut bufs, shading.prefiltered, shading.lut, cam);
    composite_background(&mut bufs, cam, shading.env_source, shading.order);
    Ok(bufs)
}

/// Cotangents on the public buffers; `None` images contribute nothing.
#[derive(Default)]
pub struct BufferCots<'a> {
    pub albedo: Option<&'a Image>,
    pub metal: Option<&'a Image>,
    pub rough: Option<&'a Image>,
    /// Cotangent of the renormalized normal buffer.
    pub normal: Option<&'a Image>,
    pub depth: Option<&'a Image>,
    pub mask: Option<&'a Image>,
    /// Cotangent of the linear shaded image.
    pub shaded: Option<&'a Image>,
    /// Cotangent of the tone-mapped composite.
    pub composite: Option<&'a Image>,
}

/// Gradient sinks of the view backward pass.
pub struct ViewGrads {
    /// Same layout as `VolumeField::params`.
    pub field: Vec<f64>,
    /// Cotangent on the prefiltered maps (route through the prefilter
    /// operator's adjoint to reach source texels).
    pub prefiltered: PrefilteredEnvironment,
    /// Cotangent on the raw environment texels from the direct background
    /// lookups.
    pub env_source: Cubemap,
}

impl ViewGrads {
    pub fn zeros(field: &VolumeField, pre: &PrefilteredEnvironment, env: &Cubemap) -> Self {
        ViewGrads {
            field: vec![0.0; field.param_len()],
            prefiltered: pre.zeros_like(),
            env_source: Cubemap::new(env.size),
        }
    }

    pub fn add_assign(&mut self, other: &ViewGrads) {
        for (a, b) in self.field.iter_mut().zip(&other.field) {
            *a += b;
        }
        for (a, b) in self
            .prefiltered
            .diffuse
            .data
            .iter_mut()
            .zip(&other.prefiltered.diffuse.data)
        {
            *a += b;
        }
        for (ma, mb) in self.prefiltered.spec.iter_mut().zip(&other.prefiltered.spec) {
            for (a, b) in ma.data.iter_mut().zip(&mb.data) {
                *a += b;
            }
        }
        for (a, b) in self.env_source.data.iter_mut().zip(&other.env_source.data) {
            *a += b;
        }
    }
}

/// Backward through composite -> shade -> buffer normalization -> march.
/// `bufs` must be the output of `render_full` with the same inputs.
/// Chunked deterministically: results are independent of thread count.
pub fn render_full_backward(
    field: &VolumeField,
    cam: &Camera,
    cfg: &MarchConfig,
    shading: &ShadingContext,
    bufs: &RenderBuffers,
    cots: &BufferCots,
    grads: &mut ViewGrads,
) {
    const CHUNKS: usize = 8;
    let rows_per = cam.height.div_ceil(CHUNKS);
    let chunk_results: Vec<ViewGrads> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut local = ViewGrads::zeros(field, shading.prefiltered, shading.env_source);
            let mut ctx = SceneField::make_ctx(field);
            let mut tape = MarchTape::default();
            let y0 = chunk * rows_per;
            let y1 = ((chunk + 1) * rows_per).min(cam.height);
            for iy in y0..y1 {
                for ix in 0..cam.width {
                    backward_pixel(
                        field, cam, cfg, shading, bufs, cots, ix, iy, &mut local, &mut ctx,
                        &mut tape,
                    );
                }
            }
            local
        })
        .collect();
    for c in &chunk_results {
        grads.add_assign(c);
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel(
    field: &VolumeField,
    cam: &Camera,
    cfg: &MarchConfig,
    shading: &ShadingContext,
    bufs: &RenderBuffers,
    cots: &BufferCots,
    ix: usize,
    iy: usize,
    grads: &mut ViewGrads,
    ctx: &mut crate::field::DecodeScratch,
    tape: &mut MarchTape,
) {
    let (o, d) = cam.ray_through_pixel(ix, iy);
    let m = bufs.mask.px(ix, iy)[0];
    let sh = bufs.shaded.px(ix, iy);
    let bg = bufs.background.px(ix, iy);

    let mut cot_shaded = [0.0f64; 3];
    if let Some(img) = cots.shaded {
        let p = img.px(ix, iy);
        cot_shaded = [p[0], p[1], p[2]];
    }
    let mut cot_mask = cots.mask.map_or(0.0, |img| img.px(ix, iy)[0]);

    // composite stage
    if let Some(img) = cots.composite {
        let cc = img.px(ix, iy);
        match shading.order {
            CompositeOrder::LinearThenTonemap => {
                let mut cot_bg = [0.0; 3];
                for c in 0..3 {
                    let lin = m * sh[c] + (1.0 - m) * bg[c];
                    let dlin = cc[c] * tonemap_srgb_deriv(lin);
                    cot_shaded[c] += m * dlin;
                    cot_bg[c] = (1.0 - m) * dlin;
                    cot_mask += dlin * (sh[c] - bg[c]);
                }
                shading
                    .env_source
                    .sample_adjoint(d, cot_bg, Some(&mut grads.env_source), None);
            }
            CompositeOrder::TonemapThenBlend => {
                let mut cot_bg = [0.0; 3];
                for c in 0..3 {
                    cot_shaded[c] += cc[c] * m * tonemap_srgb_deriv(sh[c]);
                    cot_bg[c] = cc[c] * (1.0 - m) * tonemap_srgb_deriv(bg[c]);
                    cot_mask += cc[c] * (tonemap_srgb(sh[c]) - tonemap_srgb(bg[c]));
                }
                shading
                    .env_source
                    .sample_adjoint(d, cot_bg, Some(&mut grads.env_source), None);
            }
        }
    }

    // shading stage
    let mut cot_albedo = [0.0f64; 3];
    let mut cot_metal = 0.0;
    let mut cot_rough = 0.0;
    let mut cot_normal_unit = Vec3::zeros();
    if cot_shaded != [0.0; 3] {
        if let Some(sp) = surface_point_at(bufs, ix, iy, -d) {
            let mut sc = SurfaceCot::default();
            shade_splitsum_vjp(
                &sp,
                shading.prefiltered,
                shading.lut,
                cot_shaded,
                &mut sc,
                &mut grads.prefiltered,
            );
            cot_albedo = sc.albedo;
            cot_metal = sc.metal;
            cot_rough = sc.rough;
            cot_normal_unit = sc.normal;
        }
    }

    // external buffer cotangents
    if let Some(img) = cots.albedo {
        let p = img.px(ix, iy);
        for c in 0..3 {
            cot_albedo[c] += p[c];
        }
    }
    if let Some(img) = cots.metal {
        cot_metal += img.px(ix, iy)[0];
    }
    if let Some(img) = cots.rough {
        cot_rough += img.px(ix, iy)[0];
    }
    if let Some(img) = cots.normal {
        let p = img.px(ix, iy);
        cot_normal_unit += Vec3::new(p[0], p[1], p[2]);
    }
    let cot_depth = cots.depth.map_or(0.0, |img| img.px(ix, iy)[0]);

    // buffer -> raw accumulation chain
    let a_guard = m.max(ALPHA_EPS);
    let inv = 1.0 / a_guard;
    let in_guard = m > ALPHA_EPS;
    let mut cot_alpha = cot_mask;

    let mut acc_cot = crate::render::march::RayAccumCot::zero();
    for c in 0..3 {
        acc_cot.albedo[c] = cot_albedo[c] * inv;
        if in_guard {
            cot_alpha -= cot_albedo[c] * bufs.albedo.px(ix, iy)[c] * inv;
        }
    }
    acc_cot.metal = cot_metal * inv;
    acc_cot.rough = cot_rough * inv;
    acc_cot.t_sum = cot_depth * inv;
    if in_guard {
        cot_alpha -= cot_metal * bufs.metal.px(ix, iy)[0] * inv;
        cot_alpha -= cot_rough * bufs.rough.px(ix, iy)[0] * inv;
        cot_alpha -= cot_depth * bufs.depth.px(ix, iy)[0] * inv;
    }
    acc_cot.alpha = cot_alpha;

    // renormalization adjoint
    let va = bufs.normal_accum.px(ix, iy);
    let v = Vec3::new(va[0], va[1], va[2]);
    let norm = v.norm();
    if norm > NORMAL_EPS {
        let n = v / norm;
        acc_cot.normal = (cot_normal_unit - n * n.dot(&cot_normal_unit)) / norm;
    }

    let nonzero = acc_cot.alpha != 0.0
        || acc_cot.t_sum != 0.0
        || acc_cot.metal != 0.0
        || acc_cot.rough != 0.0
        || acc_cot.albedo != [0.0; 3]
        || acc_cot.normal != Vec3::zeros();
    if nonzero {
        march_ray_backward(
            field,
            o,
            d,
            cfg,
            pixel_key(cam, ix, iy),
            &acc_cot,
            &mut grads.field,
            ctx,
            tape,
        );
    }
}

/// Write the standard buffer set:
/// `<view>_{shaded,albedo,metal,rough,normal,depth,mask,composite}`.
/// LDR images (mask, composite) as PNG, everything else as PFM.
pub fn write_buffer_set(bufs: &RenderBuffers, dir: &Path, view: &str) -> Result<()> {
    img::write_pfm(&bufs.shaded, &dir.join(format!("{view}_shaded.pfm")))?;
    img::write_pfm(&bufs.albedo, &dir.join(format!("{view}_albedo.pfm")))?;
    img::write_pfm(&bufs.metal, &dir.join(format!("{view}_metal.pfm")))?;
    img::write_pfm(&bufs.rough, &dir.join(format!("{view}_rough.pfm")))?;
    img::write_pfm(&bufs.normal, &dir.join(format!("{view}_normal.pfm")))?;
    img::write_pfm(&bufs.depth, &dir.join(format!("{view}_depth.pfm")))?;
    img::write_png(&bufs.mask, &dir.join(format!("{view}_mask.png")))?;
    img::write_png(&bufs.composite, &dir.join(format!("{view}_composite.png")))?;
    Ok(())
}
