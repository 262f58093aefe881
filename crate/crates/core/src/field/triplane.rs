//! Triplane parameterization: three axis-aligned 2D feature planes whose
//! bilinear samples are summed and mixed point-wise. Each plane only sees
//! two of the three coordinates.

use super::grid::Bounds;
use super::mixing::MixingHead;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// (col axis, row axis) world-coordinate indices per plane, cyclic:
/// xy, yz, zx.
pub const PLANE_AXES_2D: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Debug, Clone, Copy)]
pub struct Stamp2 {
    pub i0: [usize; 2],
    pub frac: [f64; 2],
    /// d(frac)/d(world coordinate) per axis; zero when clamped.
    pub dfd: [f64; 2],
    pub n: usize,
}

impl Stamp2 {
    fn new(n: usize, ranges: [(f64, f64); 2], u: f64, v: f64) -> Stamp2 {
        let axis = |x: f64, (lo, hi): (f64, f64)| {
            let scale = n as f64 / (hi - lo);
            let g = (x - lo) * scale - 0.5;
            let gc = g.clamp(0.0, (n - 1) as f64);
            let mut i0 = gc.floor() as usize;
            if i0 > n - 2 {
                i0 = n - 2;
            }
            let dfd = if g > 0.0 && g < (n - 1) as f64 { scale } else { 0.0 };
            (i0, gc - i0 as f64, dfd)
        };
        let (ic, fc, dc) = axis(u, ranges[0]);
        let (ir, fr, dr) = axis(v, ranges[1]);
        Stamp2 {
            i0: [ic, ir],
            frac: [fc, fr],
            dfd: [dc, dr],
            n,
        }
    }

    #[inline]
    pub fn corners(&self) -> [(usize, f64); 4] {
        let wc = [1.0 - self.frac[0], self.frac[0]];
        let wr = [1.0 - self.frac[1], self.frac[1]];
        let base = self.i0[1] * self.n + self.i0[0];
        [
            (base, wr[0] * wc[0]),
            (base + 1, wr[0] * wc[1]),
            (base + self.n, wr[1] * wc[0]),
            (base + self.n + 1, wr[1] * wc[1]),
        ]
    }

    /// Per-corner weight gradients w.r.t. the two plane coordinates.
    #[inline]
    pub fn corner_weight_grads(&self) -> [(usize, [f64; 2]); 4] {
        let wc = [1.0 - self.frac[0], self.frac[0]];
        let wr = [1.0 - self.frac[1], self.frac[1]];
        let sc = [-self.dfd[0], self.dfd[0]];
        let sr = [-self.dfd[1], self.dfd[1]];
        let base = self.i0[1] * self.n + self.i0[0];
        [
            (base, [sc[0] * wr[0], wc[0] * sr[0]]),
            (base + 1, [sc[1] * wr[0], wc[1] * sr[0]]),
            (base + self.n, [sc[0] * wr[1], wc[0] * sr[1]]),
            (base + self.n + 1, [sc[1] * wr[1], wc[1] * sr[1]]),
        ]
    }
}

/// Three K x R x R planes plus a mixing head; weights for the mixing head
/// sit at the tail of `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriplaneField {
    /// Per-plane feature channels K.
    pub channels: usize,
    /// Square plane resolution.
    pub res: usize,
    pub bounds: Bounds,
    pub mixing: MixingHead,
    pub data: Vec<f64>,
}

impl TriplaneField {
    pub fn new(channels: usize, res: usize, mixing: MixingHead, bounds: Bounds) -> Result<Self> {
        if res < 2 {
            return Err(Error::Config(format!("triplane resolution must be >= 2, got {res}")));
        }
        if mixing.input != channels {
            return Err(Error::Config(format!(
                "mixing input width {} != plane channels {}",
                mixing.input, channels
            )));
        }
        mixing.validate()?;
        let n = 3 * channels * res * res + mixing.param_len();
        Ok(TriplaneField {
            channels,
            res,
            bounds,
            mixing,
            data: vec![0.0; n],
        })
    }

    pub fn plane_len(&self) -> usize {
        self.channels * self.res * self.res
    }

    pub fn plane(&self, i: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn plane_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn mixing_offset(&self) -> usize {
        3 * self.plane_len()
    }

    pub fn mixing_params(&self) -> &[f64] {
        &self.data[self.mixing_offset()..]
    }

    /// Tokens seen by a sequence model: 3 R^2 feature vectors of length K.
    pub fn token_count(&self) -> usize {
        3 * self.res * self.res
    }

    pub fn token_len(&self) -> usize {
        self.channels
    }

    fn stamp_for_plane(&self, plane: usize, p: Vec3) -> Stamp2 {
        let [ac, ar] = PLANE_AXES_2D[plane];
        Stamp2::new(
            self.res,
            [
                (self.bounds.min[ac], self.bounds.max[ac]),
                (self.bounds.min[ar], self.bounds.max[ar]),
            ],
            p[ac],
            p[ar],
        )
    }

    /// Sum of the three bilinear plane samples (pre-mixing feature vector).
    pub fn features(&self, p: Vec3, s: &mut [f64]) {
        s.fill(0.0);
        let cell = self.res * self.res;
        for plane in 0..3 {
            let stamp = self.stamp_for_plane(plane, p);
            let corners = stamp.corners();
            let data = self.plane(plane);
            for (c, sv) in s.iter_mut().enumerate().take(self.channels) {
                let base = c * cell;
                let mut acc = 0.0;
                for (off, w) in corners {
                    acc += w * data[base + off];
                }
                *sv += acc;
            }
        }
    }

    pub fn features_vjp(&self, p: Vec3, cot_s: &[f64], grads: &mut [f64]) {
        let cell = self.res * self.res;
        let plane_len = self.plane_len();
        for plane in 0..3 {
            let stamp = self.stamp_for_plane(plane, p);
            let corners = stamp.corners();
            let g = &mut grads[plane * plane_len..(plane + 1) * plane_len];
            for (c, &cv) in cot_s.iter().enumerate().take(self.channels) {
                let base = c * cell;
                for (off, w) in corners {
                    g[base + off] += cv * w;
                }
            }
        }
    }

    /// d(features)/d(world point), accumulated into `jac`.
    pub fn features_spatial(&self, p: Vec3, jac: &mut [[f64; 3]]) {
        let cell = self.res * self.res;
        for plane in 0..3 {
            let [ac, ar] = PLANE_AXES_2D[plane];
            let stamp = self.stamp_for_plane(plane, p);
            let wg = stamp.corner_weight_grads();
            let data = self.plane(plane);
            for (c, j) in jac.iter_mut().enumerate().take(self.channels) {
                let base = c * cell;
                for (off, g) in wg {
                    let v = data[base + off];
                    j[ac] += g[0] * v;
                    j[ar] += g[1] * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_plane_field(c1: f64, c2: f64, c3: f64) -> TriplaneField {
        let mut f = TriplaneField::new(2, 4, MixingHead::identity(2), Bounds::unit()).unwrap();
        for (i, v) in [c1, c2, c3].into_iter().enumerate() {
            f.plane_mut(i).fill(v);
        }
        f
    }

    #[test]
    fn zero_planes_decode_to_zero() {
        let f = TriplaneField::new(3, 4, MixingHead::identity(3), Bounds::unit()).unwrap();
        let mut s = vec![1.0; 3];
        f.features(Vec3::new(0.3, -0.2, 0.9), &mut s);
        assert_eq!(s, vec![0.0; 3]);
    }

    #[test]
    fn constant_planes_sum() {
        let f = constant_plane_field(1.5, -0.25, 4.0);
        for p in [Vec3::zeros(), Vec3::new(0.7, 0.7, -0.9)] {
            let mut s = vec![0.0; 2];
            f.features(p, &mut s);
            assert_relative_eq!(s[0], 1.5 - 0.25 + 4.0, epsilon = 1e-12);
            assert_relative_eq!(s[1], 1.5 - 0.25 + 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn xy_plane_is_constant_along_z() {
        let mut f = TriplaneField::new(1, 8, MixingHead::identity(1), Bounds::unit()).unwrap();
        let mut rng = crate::rng::stream(11, "triplane-test", 0);
        use rand::Rng;
        for v in f.plane_mut(0).iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut first = vec![0.0; 1];
        f.features(Vec3::new(0.21, -0.43, -0.9), &mut first);
        for k in 0..10 {
            let z = -0.9 + 0.18 * k as f64;
            let mut s = vec![0.0; 1];
            f.features(Vec3::new(0.21, -0.43, z), &mut s);
            assert_relative_eq!(s[0], first[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        assert!(TriplaneField::new(3, 4, MixingHead::identity(2), Bounds::unit()).is_err());
    }
}
