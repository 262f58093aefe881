//! Volumetric feature fields over the unit cube.
//!
//! Three interchangeable parameterizations (dense voxel grid, triplane,
//! tricolumn) produce a raw feature vector at any point; a fixed channel
//! layout decodes it into density, albedo, metalness, roughness, and a unit
//! normal. All decode paths expose hand-derived vector-Jacobian products
//! with respect to every parameter.

pub mod checkpoint;
pub mod grid;
pub mod mixing;
pub mod triplane;
pub mod tricolumn;

pub use grid::{Bounds, VoxelGrid};
pub use mixing::{MixingHead, MixingMode};
pub use triplane::TriplaneField;
pub use tricolumn::TricolumnField;

use crate::error::{Error, Result};
use crate::math::{sigmoid, sigmoid_deriv, softplus, softplus_deriv, Vec3};

/// Offsets of the semantic channel groups inside the decoded raw vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldChannels {
    pub sigma: usize,
    pub albedo: usize,
    pub metal: usize,
    pub rough: usize,
    pub normal: usize,
    pub total: usize,
}

impl Default for FieldChannels {
    fn default() -> Self {
        // [sigma | albedo rgb | metal | rough | normal xyz]
        FieldChannels {
            sigma: 0,
            albedo: 1,
            metal: 4,
            rough: 5,
            normal: 6,
            total: 9,
        }
    }
}

impl FieldChannels {
    pub fn validate(&self) -> Result<()> {
        let mut covered = vec![false; self.total];
        let mut mark = |lo: usize, n: usize| -> Result<()> {
            for i in lo..lo + n {
                if i >= covered.len() || covered[i] {
                    return Err(Error::Config("channel ranges must be disjoint and in range".into()));
                }
                covered[i] = true;
            }
            Ok(())
        };
        mark(self.sigma, 1)?;
        mark(self.albedo, 3)?;
        mark(self.metal, 1)?;
        mark(self.rough, 1)?;
        mark(self.normal, 3)?;
        if covered.iter().any(|c| !c) {
            return Err(Error::Config("channel ranges must cover all decoded channels".into()));
        }
        Ok(())
    }
}

/// Fixed per-group input scales applied before the activations. A gain g
/// makes an optimizer step of size dr move the activation input by g*dr,
/// which matches bounded-step optimizers to the useful activation range.
/// All gains default to 1 (the plain representation contract).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains {
    pub sigma: f64,
    pub albedo: f64,
    pub metal: f64,
    pub rough: f64,
    pub normal: f64,
}

impl Default for ChannelGains {
    fn default() -> Self {
        ChannelGains {
            sigma: 1.0,
            albedo: 1.0,
            metal: 1.0,
            rough: 1.0,
            normal: 1.0,
        }
    }
}

/// Activated field values at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSample {
    pub sigma: f64,
    pub albedo: [f64; 3],
    pub metal: f64,
    pub rough: f64,
    pub normal: Vec3,
}

impl PointSample {
    pub const ZERO: PointSample = PointSample {
        sigma: 0.0,
        albedo: [0.0; 3],
        metal: 0.0,
        rough: 0.0,
        normal: Vec3::new(0.0, 0.0, 1.0),
    };
}

/// Cotangent of a `PointSample`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointCot {
    pub sigma: f64,
    pub albedo: [f64; 3],
    pub metal: f64,
    pub rough: f64,
    pub normal: Vec3,
}

impl PointCot {
    pub fn zero() -> Self {
        PointCot {
            normal: Vec3::zeros(),
            ..Default::default()
        }
    }
}

/// sigma = softplus, albedo/metal/rough = sigmoid, normal = L2-normalize
/// (zero raw vector falls back to +z).
pub fn decode_channels(raw: &[f64], layout: &FieldChannels, gains: &ChannelGains) -> PointSample {
    debug_assert_eq!(raw.len(), layout.total);
    let nx = gains.normal * raw[layout.normal];
    let ny = gains.normal * raw[layout.normal + 1];
    let nz = gains.normal * raw[layout.normal + 2];
    let norm = (nx * nx + ny * ny + nz * nz).sqrt();
    let normal = if norm < 1e-12 {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        Vec3::new(nx / norm, ny / norm, nz / norm)
    };
    PointSample {
        sigma: softplus(gains.sigma * raw[layout.sigma]),
        albedo: [
            sigmoid(gains.albedo * raw[layout.albedo]),
            sigmoid(gains.albedo * raw[layout.albedo + 1]),
            sigmoid(gains.albedo * raw[layout.albedo + 2]),
        ],
        metal: sigmoid(gains.metal * raw[layout.metal]),
        rough: sigmoid(gains.rough * raw[layout.rough]),
        normal,
    }
}

/// Adjoint of `decode_channels`: accumulates into `cot_raw`.
pub fn decode_channels_vjp(
    raw: &[f64],
    layout: &FieldChannels,
    gains: &ChannelGains,
    cot: &PointCot,
    cot_raw: &mut [f64],
) {
    cot_raw[layout.sigma] +=
        cot.sigma * softplus_deriv(gains.sigma * raw[layout.sigma]) * gains.sigma;
    for i in 0..3 {
        cot_raw[layout.albedo + i] += cot.albedo[i]
            * sigmoid_deriv(gains.albedo * raw[layout.albedo + i])
            * gains.albedo;
    }
    cot_raw[layout.metal] +=
        cot.metal * sigmoid_deriv(gains.metal * raw[layout.metal]) * gains.metal;
    cot_raw[layout.rough] +=
        cot.rough * sigmoid_deriv(gains.rough * raw[layout.rough]) * gains.rough;

    let v = Vec3::new(
        gains.normal * raw[layout.normal],
        gains.normal * raw[layout.normal + 1],
        gains.normal * raw[layout.normal + 2],
    );
    let norm = v.norm();
    if norm >= 1e-12 {
        // d(v/|v|)/dv = (I - n n^T) / |v|
        let n = v / norm;
        let proj = cot.normal - n * n.dot(&cot.normal);
        let g = proj * (gains.normal / norm);
        cot_raw[layout.normal] += g.x;
        cot_raw[layout.normal + 1] += g.y;
        cot_raw[layout.normal + 2] += g.z;
    }
}

/// A parameterized volumetric field: representation + channel semantics.
#[derive(Debug, Clone, PartialEq)]
pub enum Rep {
    Voxel(VoxelGrid),
    Triplane(TriplaneField),
    Tricolumn(TricolumnField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeField {
    pub rep: Rep,
    pub layout: FieldChannels,
    pub gains: ChannelGains,
}

/// Reusable decode scratch; one per worker thread.
#[derive(Debug, Default, Clone)]
pub struct DecodeScratch {
    pub features: Vec<f64>,
    pub raw: Vec<f64>,
    pub mix: Vec<f64>,
    pub cot_s: Vec<f64>,
}

impl DecodeScratch {
    pub fn for_field(field: &VolumeField) -> Self {
        DecodeScratch {
            features: vec![0.0; field.feature_width()],
            raw: vec![0.0; field.layout.total],
            mix: vec![0.0; field.mixing().map_or(0, |m| m.scratch_len())],
            cot_s: vec![0.0; field.feature_width()],
        }
    }
}

impl VolumeField {
    pub fn new(rep: Rep, layout: FieldChannels, gains: ChannelGains) -> Result<Self> {
        layout.validate()?;
        let f = VolumeField { rep, layout, gains };
        if f.decoded_width() != f.layout.total {
            return Err(Error::Config(format!(
                "field decodes {} channels but layout expects {}",
                f.decoded_width(),
                f.layout.total
            )));
        }
        Ok(f)
    }

    pub fn bounds(&self) -> &Bounds {
        match &self.rep {
            Rep::Voxel(g) => &g.bounds,
            Rep::Triplane(t) => &t.bounds,
            Rep::Tricolumn(t) => &t.bounds,
        }
    }

    /// Pre-mixing feature width.
    pub fn feature_width(&self) -> usize {
        match &self.rep {
            Rep::Voxel(g) => g.channels,
            Rep::Triplane(t) => t.channels,
            Rep::Tricolumn(t) => t.cells,
        }
    }

    /// Decoded (post-mixing) channel count.
    pub fn decoded_width(&self) -> usize {
        match &self.rep {
            Rep::Voxel(g) => g.channels,
            Rep::Triplane(t) => t.mixing.output,
            Rep::Tricolumn(t) => t.mixing.output,
        }
    }

    pub fn mixing(&self) -> Option<&MixingHead> {
        match &self.rep {
            Rep::Voxel(_) => None,
            Rep::Triplane(t) => Some(&t.mixing),
            Rep::Tricolumn(t) => Some(&t.mixing),
        }
    }

    pub fn params(&self) -> &[f64] {
        match &self.rep {
            Rep::Voxel(g) => &g.data,
            Rep::Triplane(t) => &t.data,
            Rep::Tricolumn(t) => &t.data,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match &mut self.rep {
            Rep::Voxel(g) => &mut g.data,
            Rep::Triplane(t) => &mut t.data,
            Rep::Tricolumn(t) => &mut t.data,
        }
    }

    pub fn param_len(&self) -> usize {
        self.params().len()
    }

    fn mixing_offset(&self) -> usize {
        match &self.rep {
            Rep::Voxel(g) => g.data.len(),
            Rep::Triplane(t) => t.mixing_offset(),
            Rep::Tricolumn(t) => t.mixing_offset(),
        }
    }

    fn features(&self, p: Vec3, s: &mut [f64]) {
        match &self.rep {
            Rep::Voxel(g) => {
                s.fill(0.0);
                grid::gather(&g.data, g.channels, &g.stamp(p), 1.0, s);
            }
            Rep::Triplane(t) => t.features(p, s),
            Rep::Tricolumn(t) => t.features(p, s),
        }
    }

    fn features_vjp(&self, p: Vec3, cot_s: &[f64], grads: &mut [f64]) {
        match &self.rep {
            Rep::Voxel(g) => grid::scatter(grads, g.channels, &g.stamp(p), 1.0, cot_s),
            Rep::Triplane(t) => t.features_vjp(p, cot_s, grads),
            Rep::Tricolumn(t) => t.features_vjp(p, cot_s, grads),
        }
    }

    fn features_spatial(&self, p: Vec3, jac: &mut [[f64; 3]]) {
        match &self.rep {
            Rep::Voxel(g) => grid::gather_spatial(&g.data, g.channels, &g.stamp(p), 1.0, jac),
            Rep::Triplane(t) => t.features_spatial(p, jac),
            Rep::Tricolumn(t) => t.features_spatial(p, jac),
        }
    }

    /// Raw (pre-activation) decode into `scratch.raw`.
    pub fn decode_raw<'a>(&self, p: Vec3, scratch: &'a mut DecodeScratch) -> &'a [f64] {
        // split borrows: features and raw are distinct buffers
        let DecodeScratch {
            features, raw, mix, ..
        } = scratch;
        self.features(p, features);
        match self.mixing() {
            None => raw.copy_from_slice(features),
            Some(head) => head.forward(
                &self.params()[self.mixing_offset()..],
                features,
                raw,
                mix,
            ),
        }
        raw
    }

    /// Activated sample at `p` (clamp-to-edge outside the bounds).
    pub fn sample_point(&self, p: Vec3, scratch: &mut DecodeScratch) -> PointSample {
        self.decode_raw(p, scratch);
        decode_channels(&scratch.raw, &self.layout, &self.gains)
    }

    /// VJP of the raw decode: accumulates parameter gradients for the planes
    /// (or voxels) and the mixing head into `grads` (same layout as params).
    pub fn vjp_raw(&self, p: Vec3, cot_raw: &[f64], grads: &mut [f64], scratch: &mut DecodeScratch) {
        if cot_raw.len() != self.layout.total {
            // cheap guard; hot paths pass correctly-sized slices
            debug_assert_eq!(cot_raw.len(), self.layout.total);
        }
        let DecodeScratch {
            features,
            mix,
            cot_s,
            ..
        } = scratch;
        self.features(p, features);
        cot_s.fill(0.0);
        match self.mixing() {
            None => cot_s.copy_from_slice(cot_raw),
            Some(head) => {
                let off = self.mixing_offset();
                let (plane_grads, mix_grads) = grads.split_at_mut(off);
                let _ = plane_grads;
                head.backward(
                    &self.params()[off..],
                    features,
                    cot_raw,
                    cot_s,
                    mix_grads,
                    mix,
                );
            }
        }
        self.features_vjp(p, cot_s, grads);
    }

    /// VJP of the activated sample.
    pub fn vjp_point(&self, p: Vec3, cot: &PointCot, grads: &mut [f64], scratch: &mut DecodeScratch) {
        self.decode_raw(p, scratch);
        let mut cot_raw = [0.0f64; 16];
        debug_assert!(self.layout.total <= 16);
        let cot_raw = &mut cot_raw[..self.layout.total];
        decode_channels_vjp(&scratch.raw, &self.layout, &self.gains, cot, cot_raw);
        self.vjp_raw(p, cot_raw, grads, scratch);
    }

    /// Activated density at `p`.
    pub fn sigma(&self, p: Vec3, scratch: &mut DecodeScratch) -> f64 {
        self.decode_raw(p, scratch);
        softplus(self.gains.sigma * scratch.raw[self.layout.sigma])
    }

    /// Analytic spatial gradient of the activated density. The trilinear
    /// interpolation makes this piecewise smooth; cell boundaries use the
    /// right-continuous cell.
    pub fn sigma_gradient(&self, p: Vec3, scratch: &mut DecodeScratch) -> Vec3 {
        let raw_sigma = {
            self.decode_raw(p, scratch);
            scratch.raw[self.layout.sigma]
        };
        // chain: sigma = softplus(g * raw); raw = mix(features)[sigma_ch]
        let outer = softplus_deriv(self.gains.sigma * raw_sigma) * self.gains.sigma;

        let width = self.feature_width();
        let mut jac = vec![[0.0f64; 3]; width];
        self.features_spatial(p, &mut jac);

        let DecodeScratch {
            features,
            mix,
            cot_s,
            ..
        } = scratch;
        cot_s.fill(0.0);
        match self.mixing() {
            None => cot_s[self.layout.sigma] = 1.0,
            Some(head) => {
                let mut e = vec![0.0; self.layout.total];
                e[self.layout.sigma] = 1.0;
                head.input_vjp(&self.params()[self.mixing_offset()..], features, &e, cot_s, mix);
            }
        }
        let mut g = Vec3::zeros();
        for (c, j) in jac.iter().enumerate() {
            let w = cot_s[c] * outer;
            g.x += w * j[0];
            g.y += w * j[1];
            g.z += w * j[2];
        }
        g
    }

    /// Public strict-domain version of `sigma_gradient`.
    pub fn spatial_gradient_sigma(&self, p: Vec3) -> Result<Vec3> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::NonFinite(format!("gradient point {p:?}")));
        }
        let b = self.bounds();
        let inside = (0..3).all(|a| p[a] > b.min[a] && p[a] < b.max[a]);
        if !inside {
            return Err(Error::Domain(format!(
                "gradient point {p:?} must lie strictly inside the bounds"
            )));
        }
        let mut scratch = DecodeScratch::for_field(self);
        Ok(self.sigma_gradient(p, &mut scratch))
    }

    /// Token accounting for the sequence-model view of each representation.
    pub fn token_count(&self) -> usize {
        match &self.rep {
            Rep::Voxel(g) => g.dims[0] * g.dims[1] * g.dims[2],
            Rep::Triplane(t) => t.token_count(),
            Rep::Tricolumn(t) => t.token_count(),
        }
    }
}
