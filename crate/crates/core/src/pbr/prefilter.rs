//! Environment prefiltering as a precomputed sparse linear operator.
//!
//! GGX importance directions depend only on the output texel direction and
//! the mip roughness, never on the radiance values, so the whole
//! prefiltering (specular mip pyramid + cosine-weighted diffuse irradiance)
//! is a fixed linear map of the source texels. We bake that map once into
//! tap lists; applying it is differentiable by construction and its adjoint
//! routes shading gradients back onto the source texels.
//!
//! Rougher mips gather from box-downsampled copies of the source, which
//! bounds the tap count; the downsample chain is itself linear.

use super::cubemap::Cubemap;
use super::lut::{ggx_alpha, sample_cosine, sample_ggx_h};
use crate::error::{Error, Result};
use crate::math::{onb, Vec3};
use crate::rng::hammersley;
use std::collections::BTreeMap;

/// Specular mip pyramid plus diffuse irradiance. `spec[j]` is prefiltered
/// at roughness j/M (mip 0 is the source); `diffuse` stores the cosine
/// integral including the 1/pi, so the shader's diffuse term is
/// k_d * albedo * diffuse.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefilteredEnvironment {
    pub diffuse: Cubemap,
    pub spec: Vec<Cubemap>,
}

impl PrefilteredEnvironment {
    pub fn mips(&self) -> usize {
        self.spec.len() - 1
    }

    /// Zeroed buffers of the same shape, used as cotangent accumulators.
    pub fn zeros_like(&self) -> Self {
        PrefilteredEnvironment {
            diffuse: Cubemap::new(self.diffuse.size),
            spec: self.spec.iter().map(|c| Cubemap::new(c.size)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct GatherLevel {
    out_size: usize,
    /// Index into the downsample chain this level reads from.
    src_level: usize,
    /// Prefix offsets (texel_count + 1) into `taps`.
    offsets: Vec<u32>,
    taps: Vec<(u32, f64)>,
}

impl GatherLevel {
    fn apply(&self, src: &Cubemap, out: &mut Cubemap) {
        debug_assert_eq!(out.size, self.out_size);
        for t in 0..out.texel_count() {
            let lo = self.offsets[t] as usize;
            let hi = self.offsets[t + 1] as usize;
            let mut acc = [0.0f64; 3];
            for &(idx, w) in &self.taps[lo..hi] {
                let i = idx as usize * 3;
                acc[0] += w * src.data[i];
                acc[1] += w * src.data[i + 1];
                acc[2] += w * src.data[i + 2];
            }
            out.data[t * 3..t * 3 + 3].copy_from_slice(&acc);
        }
    }

    fn adjoint(&self, cot_out: &Cubemap, cot_src: &mut Cubemap) {
        for t in 0..cot_out.texel_count() {
            let lo = self.offsets[t] as usize;
            let hi = self.offsets[t + 1] as usize;
            let co = &cot_out.data[t * 3..t * 3 + 3];
            for &(idx, w) in &self.taps[lo..hi] {
                let i = idx as usize * 3;
                cot_src.data[i] += w * co[0];
                cot_src.data[i + 1] += w * co[1];
                cot_src.data[i + 2] += w * co[2];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrefilterOperator {
    pub src_size: usize,
    pub mips: usize,
    pub samples: u32,
    down_sizes: Vec<usize>,
    spec_levels: Vec<GatherLevel>,
    diffuse_level: GatherLevel,
}

fn level_size(src: usize, level: usize) -> usize {
    (src >> level).max(2)
}

/// 2x2 box filter per face (identity when the size is already minimal).
fn downsample(src: &Cubemap) -> Cubemap {
    if src.size <= 2 {
        return src.clone();
    }
    let out_size = src.size / 2;
    let mut out = Cubemap::new(out_size);
    for face in 0..6 {
        for row in 0..out_size {
            for col in 0..out_size {
                let mut acc = [0.0; 3];
                for dr in 0..2 {
                    for dc in 0..2 {
                        let i = src.texel_index(face, col * 2 + dc, row * 2 + dr) * 3;
                        acc[0] += src.data[i];
                        acc[1] += src.data[i + 1];
                        acc[2] += src.data[i + 2];
                    }
                }
                let t = out.texel_mut(face, col, row);
                for ch in 0..3 {
                    t[ch] = acc[ch] * 0.25;
                }
            }
        }
    }
    out
}

fn downsample_adjoint(cot_out: &Cubemap, cot_src: &mut Cubemap) {
    if cot_src.size == cot_out.size {
        for (s, o) in cot_src.data.iter_mut().zip(&cot_out.data) {
            *s += o;
        }
        return;
    }
    debug_assert_eq!(cot_src.size, cot_out.size * 2);
    for face in 0..6 {
        for row in 0..cot_out.size {
            for col in 0..cot_out.size {
                let o = cot_out.texel(cot_out.texel_index(face, col, row));
                for dr in 0..2 {
                    for dc in 0..2 {
                        let i = cot_src.texel_index(face, col * 2 + dc, row * 2 + dr) * 3;
                        cot_src.data[i] += o[0] * 0.25;
                        cot_src.data[i + 1] += o[1] * 0.25;
                        cot_src.data[i + 2] += o[2] * 0.25;
                    }
                }
            }
        }
    }
}

fn build_gather(
    out_size: usize,
    src_size: usize,
    src_level: usize,
    samples: u32,
    mut dirs: impl FnMut(Vec3, u32) -> (Vec3, f64),
) -> GatherLevel {
    let probe = Cubemap::new(out_size);
    let src_probe = Cubemap::new(src_size);
    let texels = 6 * out_size * out_size;
    let mut offsets = Vec::with_capacity(texels + 1);
    let mut taps = Vec::new();
    offsets.push(0u32);
    for face in 0..6 {
        for row in 0..out_size {
            for col in 0..out_size {
                let n = probe.texel_direction(face, col, row);
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                let mut wsum = 0.0;
                for k in 0..samples {
                    let (l, w) = dirs(n, k);
                    if w <= 0.0 {
                        continue;
                    }
                    wsum += w;
                    for tap in src_probe.taps(l) {
                        *acc.entry(tap.texel).or_insert(0.0) += w * tap.weight;
                    }
                }
                let inv = if wsum > 0.0 { 1.0 / wsum } else { 0.0 };
                for (idx, w) in acc {
                    taps.push((idx, w * inv));
                }
                offsets.push(taps.len() as u32);
            }
        }
    }
    GatherLevel {
        out_size,
        src_level,
        offsets,
        taps,
    }
}

impl PrefilterOperator {
    /// Bake the operator for a source resolution. `mips` specular levels
    /// above the identity mip 0 (level j filtered at roughness j/mips),
    /// `samples` GGX directions per texel at the roughest level
    /// (proportionally fewer on smoother levels, floor 64).
    pub fn build(src_size: usize, mips: usize, samples: u32) -> Result<Self> {
        if mips < 1 {
            return Err(Error::Config("prefilter needs at least one mip".into()));
        }
        if samples < 64 {
            return Err(Error::Config(format!("prefilter samples must be >= 64, got {samples}")));
        }
        if src_size < 2 {
            return Err(Error::Config("cubemap faces must be at least 2x2".into()));
        }

        // downsample chain sizes (index 0 = source)
        let max_level = (1..=mips).map(|l| l - 1).max().unwrap_or(0);
        let mut down_sizes = Vec::new();
        for l in 0..=max_level {
            down_sizes.push(level_size(src_size, l));
        }

        let mut spec_levels = Vec::new();
        for j in 1..=mips {
            let rough = j as f64 / mips as f64;
            let alpha = ggx_alpha(rough);
            let out_size = level_size(src_size, j);
            let src_level = j - 1;
            let n_samples = ((samples as u64 * j as u64 / mips as u64) as u32).max(64);
            let gather = build_gather(
                out_size,
                down_sizes[src_level],
                src_level,
                n_samples,
                |n, k| {
                    let (u1, u2) = hammersley(k, n_samples);
                    let h_local = sample_ggx_h(alpha, u1, u2);
                    let (t, b) = onb(n);
                    let h = t * h_local.x + b * h_local.y + n * h_local.z;
                    let l = h * (2.0 * n.dot(&h)) - n;
                    (l, n.dot(&l).max(0.0))
                },
            );
            spec_levels.push(gather);
        }

        // diffuse irradiance: cosine-weighted mean (the 1/pi cancels the pdf)
        let diff_out = src_size.min(16);
        let diff_src_level = down_sizes
            .iter()
            .position(|&s| s <= src_size.min(32))
            .unwrap_or(down_sizes.len() - 1);
        let diff_samples = samples.max(256);
        let inv = 1.0 / diff_samples as f64;
        let diffuse_level = build_gather(
            diff_out,
            down_sizes[diff_src_level],
            diff_src_level,
            diff_samples,
            |n, k| {
                let (u1, u2) = hammersley(k, diff_samples);
                let local = sample_cosine(u1, u2);
                let (t, b) = onb(n);
                (t * local.x + b * local.y + n * local.z, inv)
            },
        );

        Ok(PrefilterOperator {
            src_size,
            mips,
            samples,
            down_sizes,
            spec_levels,
            diffuse_level,
        })
    }

    fn down_chain(&self, src: &Cubemap) -> Vec<Cubemap> {
        let mut chain = Vec::with_capacity(self.down_sizes.len());
        chain.push(src.clone());
        for level in 1..self.down_sizes.len() {
            let next = downsample(chain.last().unwrap());
            debug_assert_eq!(next.size, self.down_sizes[level]);
            chain.push(next);
        }
        chain
    }

    pub fn apply(&self, src: &Cubemap) -> Result<PrefilteredEnvironment> {
        if src.size != self.src_size {
            return Err(Error::Shape(format!(
                "operator built for face size {}, got {}",
                self.src_size, src.size
            )));
        }
        let chain = self.down_chain(src);
        let mut spec = Vec::with_capacity(self.mips + 1);
        spec.push(src.clone());
        for g in &self.spec_levels {
            let mut out = Cubemap::new(g.out_size);
            g.apply(&chain[g.src_level], &mut out);
            spec.push(out);
        }
        let mut diffuse = Cubemap::new(self.diffuse_level.out_size);
        self.diffuse_level.apply(&chain[self.diffuse_level.src_level], &mut diffuse);
        Ok(PrefilteredEnvironment { diffuse, spec })
    }

    /// Adjoint of `apply`: accumulates the source-texel cotangent.
    pub fn adjoint(&self, cot: &PrefilteredEnvironment, cot_src: &mut Cubemap) {
        let mut cot_down: Vec<Cubemap> =
            self.down_sizes.iter().map(|&s| Cubemap::new(s)).collect();
        // mip 0 is the identity
        for (s, o) in cot_down[0].data.iter_mut().zip(&cot.spec[0].data) {
            *s += o;
        }
        for (g, cot_spec) in self.spec_levels.iter().zip(cot.spec.iter().skip(1)) {
            g.adjoint(cot_spec, &mut cot_down[g.src_level]);
        }
        self.diffuse_level
            .adjoint(&cot.diffuse, &mut cot_down[self.diffuse_level.src_level]);
        // walk the downsample chain backwards
        for level in (1..self.down_sizes.len()).rev() {
            let (head, tail) = cot_down.split_at_mut(level);
            downsample_adjoint(&tail[0], &mut head[level - 1]);
        }
        for (s, o) in cot_src.data.iter_mut().zip(&cot_down[0].data) {
            *s += o;
        }
    }
}

/// One-shot convenience: build the operator and prefilter `c`.
pub fn prefilter_environment(c: &Cubemap, mips: usize, samples: u32) -> Result<PrefilteredEnvironment> {
    PrefilterOperator::build(c.size, mips, samples)?.apply(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_env(size: usize, seed: u64) -> Cubemap {
        let mut c = Cubemap::new(size);
        let mut rng = crate::rng::stream(seed, "prefilter-test", 0);
        for v in c.data.iter_mut() {
            *v = rng.gen_range(0.0..2.0);
        }
        c
    }

    #[test]
    fn constant_env_stays_constant() {
        let c = Cubemap::constant(16, [0.7, 0.4, 1.1]);
        let env = prefilter_environment(&c, 3, 64).unwrap();
        for mip in &env.spec {
            for t in 0..mip.texel_count() {
                let v = mip.texel(t);
                assert_relative_eq!(v[0], 0.7, epsilon = 1e-9);
                assert_relative_eq!(v[1], 0.4, epsilon = 1e-9);
            }
        }
        for t in 0..env.diffuse.texel_count() {
            let v = env.diffuse.texel(t);
            assert_relative_eq!(v[2], 1.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn mip_zero_is_the_source() {
        let c = random_env(8, 1);
        let env = prefilter_environment(&c, 2, 64).unwrap();
        assert_eq!(env.spec[0], c);
    }

    #[test]
    fn diffuse_brighter_toward_a_bright_texel() {
        let mut c = Cubemap::new(16);
        // one bright texel in the middle of +X
        *c.texel_mut(0, 8, 8) = [50.0, 50.0, 50.0];
        let env = prefilter_environment(&c, 2, 512).unwrap();
        let toward = env.diffuse.sample_fast(Vec3::new(1.0, 0.0, 0.0));
        let away = env.diffuse.sample_fast(Vec3::new(-1.0, 0.0, 0.0));
        assert!(
            toward[0] > away[0] + 1e-6,
            "facing texel {toward:?} must exceed opposite {away:?}"
        );

        // Monte-Carlo irradiance oracle at the facing direction
        let n = Vec3::new(1.0, 0.0, 0.0);
        let (t, b) = onb(n);
        let mut rng = crate::rng::stream(12, "irradiance-oracle", 0);
        let mut acc = 0.0;
        let ns = 40_000;
        for _ in 0..ns {
            let local = sample_cosine(rng.gen(), rng.gen());
            let l = t * local.x + b * local.y + n * local.z;
            acc += c.sample_fast(l)[0];
        }
        let oracle = acc / ns as f64;
        assert_relative_eq!(toward[0], oracle, max_relative = 0.25);
    }

    #[test]
    fn operator_is_exactly_linear() {
        let op = PrefilterOperator::build(8, 2, 64).unwrap();
        let c1 = random_env(8, 2);
        let c2 = random_env(8, 3);
        let (a, b) = (0.7, -0.3);
        let mut mix = Cubemap::new(8);
        for i in 0..mix.data.len() {
            mix.data[i] = a * c1.data[i] + b * c2.data[i];
        }
        let e1 = op.apply(&c1).unwrap();
        let e2 = op.apply(&c2).unwrap();
        let em = op.apply(&mix).unwrap();
        for (j, mip) in em.spec.iter().enumerate() {
            for i in 0..mip.data.len() {
                let expect = a * e1.spec[j].data[i] + b * e2.spec[j].data[i];
                assert_relative_eq!(mip.data[i], expect, epsilon = 1e-12, max_relative = 1e-12);
            }
        }
        for i in 0..em.diffuse.data.len() {
            let expect = a * e1.diffuse.data[i] + b * e2.diffuse.data[i];
            assert_relative_eq!(em.diffuse.data[i], expect, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn adjoint_consistent_with_apply() {
        // <A x, y> == <x, A^T y> for random x, y
        let op = PrefilterOperator::build(8, 2, 64).unwrap();
        let x = random_env(8, 4);
        let ax = op.apply(&x).unwrap();
        let mut rng = crate::rng::stream(5, "adjoint-test", 0);
        let mut y = ax.zeros_like();
        for m in y.spec.iter_mut() {
            for v in m.data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        for v in y.diffuse.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let lhs: f64 = y
            .spec
            .iter()
            .zip(&ax.spec)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data))
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + y.diffuse.data.iter().zip(&ax.diffuse.data).map(|(a, b)| a * b).sum::<f64>();
        let mut aty = Cubemap::new(8);
        op.adjoint(&y, &mut aty);
        let rhs: f64 = aty.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
    }
}
