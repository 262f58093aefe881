//! Tricolumn parameterization: three planes of (C*R)-long feature columns.
//!
//! Each plane unfolds into a full C x R x R x R voxel grid (the feature
//! dimension carries the third axis), is sampled trilinearly in 3D, and the
//! three per-plane C-vectors are summed before mixing. Unlike a triplane,
//! every term depends on all three coordinates, yet the token count stays
//! 3 R^2.

use super::grid::{self, Bounds, Stamp, VoxelGrid};
use super::mixing::MixingHead;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// (col axis, row axis, fold axis) per plane: xy;z, yz;x, zx;y.
pub const PLANE_AXES_3D: [[usize; 3]; 3] = [[0, 1, 2], [1, 2, 0], [2, 0, 1]];

#[derive(Debug, Clone, PartialEq)]
pub struct TricolumnField {
    /// Channels per voxel cell C.
    pub cells: usize,
    /// Cubic lattice resolution R.
    pub res: usize,
    pub bounds: Bounds,
    pub mixing: MixingHead,
    /// Three unfolded plane grids (each C*R^3) followed by mixing weights.
    pub data: Vec<f64>,
}

impl TricolumnField {
    pub fn new(cells: usize, res: usize, mixing: MixingHead, bounds: Bounds) -> Result<Self> {
        if res < 2 {
            return Err(Error::Config(format!("tricolumn resolution must be >= 2, got {res}")));
        }
        if cells == 0 {
            return Err(Error::Config("tricolumn needs at least one cell channel".into()));
        }
        if mixing.input != cells {
            return Err(Error::Config(format!(
                "mixing input width {} != cell channels {}",
                mixing.input, cells
            )));
        }
        mixing.validate()?;
        let n = 3 * cells * res * res * res + mixing.param_len();
        Ok(TricolumnField {
            cells,
            res,
            bounds,
            mixing,
            data: vec![0.0; n],
        })
    }

    /// Reshape check: a plane stores (C*R) x R x R features; the unfold to
    /// C x R x R x R is the identity on memory, so a voxel grid embeds
    /// losslessly into the xy-plane.
    pub fn from_voxel_grid(grid: &VoxelGrid, mixing: MixingHead) -> Result<Self> {
        let [w, h, d] = grid.dims;
        if w != h || h != d {
            return Err(Error::Config(format!(
                "tricolumn embedding requires a cubic grid, got {:?}",
                grid.dims
            )));
        }
        let mut f = TricolumnField::new(grid.channels, w, mixing, grid.bounds)?;
        let n = f.plane_len();
        f.data[..n].copy_from_slice(&grid.data);
        Ok(f)
    }

    pub fn plane_len(&self) -> usize {
        self.cells * self.res * self.res * self.res
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

    /// Tokens seen by a sequence model: 3 R^2 columns of length C*R
    /// (versus R^3 tokens for the dense voxel grid).
    pub fn token_count(&self) -> usize {
        3 * self.res * self.res
    }

    pub fn token_len(&self) -> usize {
        self.cells * self.res
    }

    fn plane_stamp(&self, plane: usize, p: Vec3) -> Stamp {
        let [ac, ar, af] = PLANE_AXES_3D[plane];
        let perm_p = Vec3::new(p[ac], p[ar], p[af]);
        let perm_bounds = Bounds {
            min: Vec3::new(self.bounds.min[ac], self.bounds.min[ar], self.bounds.min[af]),
            max: Vec3::new(self.bounds.max[ac], self.bounds.max[ar], self.bounds.max[af]),
        };
        Stamp::new([self.res, self.res, self.res], &perm_bounds, perm_p)
    }

    /// Sum of the three unfolded trilinear samples (pre-mixing features).
    pub fn features(&self, p: Vec3, s: &mut [f64]) {
        s.fill(0.0);
        for plane in 0..3 {
            let stamp = self.plane_stamp(plane, p);
            grid::gather(self.plane(plane), self.cells, &stamp, 1.0, s);
        }
    }

    pub fn features_vjp(&self, p: Vec3, cot_s: &[f64], grads: &mut [f64]) {
        let n = self.plane_len();
        for plane in 0..3 {
            let stamp = self.plane_stamp(plane, p);
            grid::scatter(&mut grads[plane * n..(plane + 1) * n], self.cells, &stamp, 1.0, cot_s);
        }
    }

    /// d(features)/d(world point), accumulated into `jac`.
    pub fn features_spatial(&self, p: Vec3, jac: &mut [[f64; 3]]) {
        for plane in 0..3 {
            let [ac, ar, af] = PLANE_AXES_3D[plane];
            let stamp = self.plane_stamp(plane, p);
            let mut local = vec![[0.0f64; 3]; self.cells];
            grid::gather_spatial(self.plane(plane), self.cells, &stamp, 1.0, &mut local);
            // un-permute the derivative axes back to world order
            for (j, l) in jac.iter_mut().zip(&local) {
                j[ac] += l[0];
                j[ar] += l[1];
                j[af] += l[2];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_grid(channels: usize, r: usize, seed: u64) -> VoxelGrid {
        let mut g = VoxelGrid::new(channels, [r, r, r], Bounds::unit()).unwrap();
        let mut rng = crate::rng::stream(seed, "tricolumn-test", 0);
        for v in g.data.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        g
    }

    #[test]
    fn embedded_voxel_grid_decodes_identically() {
        let g = random_grid(3, 5, 1);
        let f = TricolumnField::from_voxel_grid(&g, MixingHead::identity(3)).unwrap();
        let mut rng = crate::rng::stream(2, "tricolumn-test-points", 0);
        for _ in 0..200 {
            let p = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let expect = g.sample(p).unwrap();
            let mut s = vec![0.0; 3];
            f.features(p, &mut s);
            // bitwise equality: both paths share the same stamp + gather code
            assert_eq!(s, expect);
        }
    }

    #[test]
    fn zero_field_decodes_to_zero() {
        let f = TricolumnField::new(2, 4, MixingHead::identity(2), Bounds::unit()).unwrap();
        let mut s = vec![9.0; 2];
        f.features(Vec3::new(0.1, 0.4, -0.6), &mut s);
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn token_accounting() {
        let f = TricolumnField::new(2, 4, MixingHead::identity(2), Bounds::unit()).unwrap();
        assert_eq!(f.token_count(), 48); // 3 R^2
        assert_eq!(f.token_len(), 8); // C*R
        // versus 4^3 = 64 dense voxel tokens
        assert!(f.token_count() < 64);
    }

    #[test]
    fn xy_plane_contribution_varies_along_fold_axis() {
        // the defining difference from a triplane: the xy-plane term depends
        // on z through the folded feature dimension
        let mut f = TricolumnField::new(1, 6, MixingHead::identity(1), Bounds::unit()).unwrap();
        let mut rng = crate::rng::stream(5, "tricolumn-fold", 0);
        for v in f.plane_mut(0).iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut values = Vec::new();
        for k in 0..8 {
            let z = -0.8 + 0.2 * k as f64;
            let mut s = vec![0.0; 1];
            f.features(Vec3::new(0.3, -0.1, z), &mut s);
            values.push(s[0]);
        }
        let spread = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 1e-3, "tricolumn must vary along the folded axis, spread={spread}");
    }

    #[test]
    fn spatial_jacobian_matches_finite_differences() {
        let g = random_grid(2, 5, 9);
        let f = TricolumnField::from_voxel_grid(&g, MixingHead::identity(2)).unwrap();
        let p = Vec3::new(0.13, -0.27, 0.41);
        let mut jac = vec![[0.0f64; 3]; 2];
        f.features_spatial(p, &mut jac);
        let eps = 1e-6;
        for axis in 0..3 {
            let mut dp = Vec3::zeros();
            dp[axis] = eps;
            let (mut sp, mut sm) = (vec![0.0; 2], vec![0.0; 2]);
            f.features(p + dp, &mut sp);
            f.features(p - dp, &mut sm);
            for c in 0..2 {
                let fd = (sp[c] - sm[c]) / (2.0 * eps);
                assert_relative_eq!(jac[c][axis], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }
}
