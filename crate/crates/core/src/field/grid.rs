//! Trilinear sampling over channel-major 3D grids and the dense voxel field.
//!
//! Grid layout is `data[((c*d + z)*h + y)*w + x]` with x mapped to width,
//! y to height, z to depth. Sampling uses voxel-center alignment with
//! clamp-to-edge: world coordinate u maps to continuous grid coordinate
//! `g = (u - min)/(max - min) * n - 0.5`, cell centers sit at integers.

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Axis-aligned sampling domain, default `[-1,1]^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min: Vec3::new(-1.0, -1.0, -1.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        }
    }
}

impl Bounds {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Entry/exit parameters of ray `o + t*d` against the box, if any.
    pub fn ray_range(&self, o: Vec3, d: Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if d[a].abs() < 1e-15 {
                if p_outside(o[a], self.min[a], self.max[a]) {
                    return None;
                }
            } else {
                let inv = 1.0 / d[a];
                let (mut ta, mut tb) = ((self.min[a] - o[a]) * inv, (self.max[a] - o[a]) * inv);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

fn p_outside(v: f64, lo: f64, hi: f64) -> bool {
    v < lo || v > hi
}

/// One axis of a trilinear stamp.
#[derive(Debug, Clone, Copy)]
pub struct AxisStamp {
    pub i0: usize,
    pub frac: f64,
    /// d(frac)/d(world coordinate); zero in the clamped region.
    pub dfd: f64,
}

fn axis_stamp(n: usize, lo: f64, hi: f64, u: f64) -> AxisStamp {
    debug_assert!(n >= 2);
    let scale = n as f64 / (hi - lo);
    let g = (u - lo) * scale - 0.5;
    let gc = g.clamp(0.0, (n - 1) as f64);
    let mut i0 = gc.floor() as usize;
    if i0 > n - 2 {
        i0 = n - 2;
    }
    let frac = gc - i0 as f64;
    let dfd = if g > 0.0 && g < (n - 1) as f64 { scale } else { 0.0 };
    AxisStamp { i0, frac, dfd }
}

/// Precomputed interpolation footprint of a point in a w*h*d grid.
#[derive(Debug, Clone, Copy)]
pub struct Stamp {
    pub x: AxisStamp,
    pub y: AxisStamp,
    pub z: AxisStamp,
    pub w: usize,
    pub h: usize,
    pub d: usize,
}

impl Stamp {
    pub fn new(dims: [usize; 3], bounds: &Bounds, p: Vec3) -> Stamp {
        let [w, h, d] = dims;
        Stamp {
            x: axis_stamp(w, bounds.min.x, bounds.max.x, p.x),
            y: axis_stamp(h, bounds.min.y, bounds.max.y, p.y),
            z: axis_stamp(d, bounds.min.z, bounds.max.z, p.z),
            w,
            h,
            d,
        }
    }

    /// The 8 corner flat offsets (within one channel slab) and weights.
    /// Weight order of multiplications is fixed so alternative code paths
    /// that share a stamp produce bitwise-identical results.
    #[inline]
    pub fn corners(&self) -> [(usize, f64); 8] {
        let (fx, fy, fz) = (self.x.frac, self.y.frac, self.z.frac);
        let wx = [1.0 - fx, fx];
        let wy = [1.0 - fy, fy];
        let wz = [1.0 - fz, fz];
        let mut out = [(0usize, 0.0f64); 8];
        let mut k = 0;
        for (dz, wz) in wz.iter().enumerate() {
            let z = self.z.i0 + dz;
            for (dy, wy) in wy.iter().enumerate() {
                let y = self.y.i0 + dy;
                let row = (z * self.h + y) * self.w + self.x.i0;
                for (dx, wx) in wx.iter().enumerate() {
                    out[k] = (row + dx, (wz * wy) * wx);
                    k += 1;
                }
            }
        }
        out
    }

    /// Per-corner weight gradients with respect to the world point.
    #[inline]
    pub fn corner_weight_grads(&self) -> [(usize, [f64; 3]); 8] {
        let (fx, fy, fz) = (self.x.frac, self.y.frac, self.z.frac);
        let wx = [1.0 - fx, fx];
        let wy = [1.0 - fy, fy];
        let wz = [1.0 - fz, fz];
        let sx = [-self.x.dfd, self.x.dfd];
        let sy = [-self.y.dfd, self.y.dfd];
        let sz = [-self.z.dfd, self.z.dfd];
        let mut out = [(0usize, [0.0f64; 3]); 8];
        let mut k = 0;
        for dz in 0..2 {
            let z = self.z.i0 + dz;
            for dy in 0..2 {
                let y = self.y.i0 + dy;
                let row = (z * self.h + y) * self.w + self.x.i0;
                for dx in 0..2 {
                    out[k] = (
                        row + dx,
                        [
                            sx[dx] * wy[dy] * wz[dz],
                            wx[dx] * sy[dy] * wz[dz],
                            wx[dx] * wy[dy] * sz[dz],
                        ],
                    );
                    k += 1;
                }
            }
        }
        out
    }

    #[inline]
    pub fn slab(&self) -> usize {
        self.w * self.h * self.d
    }
}

/// out[c] += scale * trilinear(data[c], stamp)
#[inline]
pub fn gather(data: &[f64], channels: usize, stamp: &Stamp, scale: f64, out: &mut [f64]) {
    let slab = stamp.slab();
    let corners = stamp.corners();
    for (c, o) in out.iter_mut().enumerate().take(channels) {
        let base = c * slab;
        let mut acc = 0.0;
        for (off, w) in corners {
            acc += w * data[base + off];
        }
        *o += scale * acc;
    }
}

/// grads[c-slab corners] += cot[c] * weight — adjoint of `gather`.
#[inline]
pub fn scatter(grads: &mut [f64], channels: usize, stamp: &Stamp, scale: f64, cot: &[f64]) {
    let slab = stamp.slab();
    let corners = stamp.corners();
    for (c, &g) in cot.iter().enumerate().take(channels) {
        let base = c * slab;
        let gs = scale * g;
        for (off, w) in corners {
            grads[base + off] += gs * w;
        }
    }
}

/// jac[c] += scale * d(trilinear(data[c]))/d(world point)
#[inline]
pub fn gather_spatial(
    data: &[f64],
    channels: usize,
    stamp: &Stamp,
    scale: f64,
    jac: &mut [[f64; 3]],
) {
    let slab = stamp.slab();
    let wg = stamp.corner_weight_grads();
    for (c, j) in jac.iter_mut().enumerate().take(channels) {
        let base = c * slab;
        for (off, g) in wg {
            let v = data[base + off];
            j[0] += scale * g[0] * v;
            j[1] += scale * g[1] * v;
            j[2] += scale * g[2] * v;
        }
    }
}

/// Dense voxel parameterization: `values` has shape C x D x H x W.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub channels: usize,
    /// [w, h, d] = cells along x, y, z.
    pub dims: [usize; 3],
    pub bounds: Bounds,
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(channels: usize, dims: [usize; 3], bounds: Bounds) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::Config(format!("voxel dims must be >= 2, got {dims:?}")));
        }
        if channels == 0 {
            return Err(Error::Config("voxel grid needs at least one channel".into()));
        }
        Ok(VoxelGrid {
            channels,
            dims,
            bounds,
            data: vec![0.0; channels * dims[0] * dims[1] * dims[2]],
        })
    }

    #[inline]
    pub fn cell_index(&self, c: usize, x: usize, y: usize, z: usize) -> usize {
        ((c * self.dims[2] + z) * self.dims[1] + y) * self.dims[0] + x
    }

    /// World position of the center of cell (x,y,z).
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            self.bounds.min.x + (x as f64 + 0.5) / self.dims[0] as f64 * e.x,
            self.bounds.min.y + (y as f64 + 0.5) / self.dims[1] as f64 * e.y,
            self.bounds.min.z + (z as f64 + 0.5) / self.dims[2] as f64 * e.z,
        )
    }

    pub fn stamp(&self, p: Vec3) -> Stamp {
        Stamp::new(self.dims, &self.bounds, p)
    }

    /// Trilinear interpolation of all channels at `p`.
    ///
    /// Errors on non-finite points and, with a distinct code, on points
    /// outside the bounds; interior fast paths skip these checks.
    pub fn sample(&self, p: Vec3) -> Result<Vec<f64>> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::NonFinite(format!("sample point {p:?}")));
        }
        if !self.bounds.contains(p) {
            return Err(Error::Domain(format!("sample point {p:?} outside bounds")));
        }
        let mut out = vec![0.0; self.channels];
        gather(&self.data, self.channels, &self.stamp(p), 1.0, &mut out);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid_2x2x2_corners() -> VoxelGrid {
        // value at corner (x,y,z) = x + 2y + 4z, matching binary order 0..7
        let mut g = VoxelGrid::new(1, [2, 2, 2], Bounds::unit()).unwrap();
        for z in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let i = g.cell_index(0, x, y, z);
                    g.data[i] = (x + 2 * y + 4 * z) as f64;
                }
            }
        }
        g
    }

    #[test]
    fn constant_grid_everywhere() {
        let mut g = VoxelGrid::new(2, [3, 4, 5], Bounds::unit()).unwrap();
        g.data.fill(2.5);
        for p in [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(-1.0, 1.0, 0.3),
            Vec3::new(0.99, -0.99, 0.17),
        ] {
            let v = g.sample(p).unwrap();
            assert_relative_eq!(v[0], 2.5, epsilon = 1e-12);
            assert_relative_eq!(v[1], 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn cell_center_reproduces_cell_value() {
        let mut g = VoxelGrid::new(1, [4, 3, 5], Bounds::unit()).unwrap();
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = i as f64 * 0.13 - 1.0;
        }
        for z in 0..5 {
            for y in 0..3 {
                for x in 0..4 {
                    let p = g.cell_center(x, y, z);
                    let v = g.sample(p).unwrap()[0];
                    assert_relative_eq!(v, g.data[g.cell_index(0, x, y, z)], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn box_center_is_corner_average() {
        let g = grid_2x2x2_corners();
        // (0+1+...+7)/8 = 3.5
        let v = g.sample(Vec3::new(0.0, 0.0, 0.0)).unwrap()[0];
        assert_relative_eq!(v, 3.5, epsilon = 1e-12);
    }

    #[test]
    fn error_codes_distinguish_nonfinite_and_outside() {
        let g = grid_2x2x2_corners();
        match g.sample(Vec3::new(f64::NAN, 0.0, 0.0)) {
            Err(Error::NonFinite(_)) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
        match g.sample(Vec3::new(2.0, 0.0, 0.0)) {
            Err(Error::Domain(_)) => {}
            other => panic!("expected Domain, got {other:?}"),
        }
    }

    #[test]
    fn ray_range_hits_and_misses() {
        let b = Bounds::unit();
        let (t0, t1) = b
            .ray_range(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_relative_eq!(t0, 2.0, epsilon = 1e-12);
        assert_relative_eq!(t1, 4.0, epsilon = 1e-12);
        assert!(b
            .ray_range(Vec3::new(0.0, 5.0, -3.0), Vec3::new(0.0, 0.0, 1.0))
            .is_none());
    }

    proptest! {
        #[test]
        fn weights_partition_of_unity(
            px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0,
            w in 2usize..6, h in 2usize..6, d in 2usize..6,
        ) {
            let stamp = Stamp::new([w, h, d], &Bounds::unit(), Vec3::new(px, py, pz));
            let total: f64 = stamp.corners().iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn clamp_matches_edge_value(px in 1.0f64..3.0) {
            let g = grid_2x2x2_corners();
            // outside the +x boundary the clamped sample equals the boundary sample
            let edge = {
                let mut out = vec![0.0];
                gather(&g.data, 1, &g.stamp(Vec3::new(1.0, 0.2, -0.3)), 1.0, &mut out);
                out[0]
            };
            let mut out = vec![0.0];
            gather(&g.data, 1, &g.stamp(Vec3::new(px, 0.2, -0.3)), 1.0, &mut out);
            prop_assert!((out[0] - edge).abs() < 1e-12);
        }
    }
}
