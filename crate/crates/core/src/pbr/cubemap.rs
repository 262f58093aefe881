//! Six-face HDR cubemap with bilinear sampling differentiable in both the
//! texel values and the query direction.
//!
//! Face order: +X, -X, +Y, -Y, +Z, -Z. Face-local coordinates (s,t) span
//! [-1,1]^2 with s growing rightward along the face and t upward; texel
//! (col,row) = (0,0) is the top-left corner. Per-face direction formulas:
//!
//!   +X: (  1,  t, -s)      -X: ( -1,  t,  s)
//!   +Y: (  s,  1, -t)      -Y: (  s, -1,  t)
//!   +Z: (  s,  t,  1)      -Z: ( -s,  t, -1)

use crate::error::{Error, Result};
use crate::img::{self, Image};
use crate::math::Vec3;
use std::path::Path;

pub const FACE_SUFFIX: [&str; 6] = ["px", "nx", "py", "ny", "pz", "nz"];

#[derive(Debug, Clone, PartialEq)]
pub struct Cubemap {
    /// Face edge length in texels.
    pub size: usize,
    /// data[((face*size + row)*size + col)*3 + ch]
    pub data: Vec<f64>,
}

/// Flattened texel tap: linear index into one channel plane and weight.
#[derive(Debug, Clone, Copy)]
pub struct Tap {
    pub texel: u32,
    pub weight: f64,
}

impl Cubemap {
    pub fn new(size: usize) -> Self {
        Cubemap {
            size,
            data: vec![0.0; 6 * size * size * 3],
        }
    }

    pub fn constant(size: usize, rgb: [f64; 3]) -> Self {
        let mut c = Cubemap::new(size);
        for t in 0..6 * size * size {
            c.data[t * 3..t * 3 + 3].copy_from_slice(&rgb);
        }
        c
    }

    /// Number of texels over all faces.
    pub fn texel_count(&self) -> usize {
        6 * self.size * self.size
    }

    #[inline]
    pub fn texel_index(&self, face: usize, col: usize, row: usize) -> usize {
        (face * self.size + row) * self.size + col
    }

    #[inline]
    pub fn texel(&self, idx: usize) -> [f64; 3] {
        let i = idx * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn texel_mut(&mut self, face: usize, col: usize, row: usize) -> &mut [f64; 3] {
        let i = self.texel_index(face, col, row) * 3;
        (&mut self.data[i..i + 3]).try_into().unwrap()
    }

    /// Outward unit direction through the center of a texel.
    pub fn texel_direction(&self, face: usize, col: usize, row: usize) -> Vec3 {
        let s = (col as f64 + 0.5) / self.size as f64 * 2.0 - 1.0;
        let t = 1.0 - (row as f64 + 0.5) / self.size as f64 * 2.0;
        face_direction(face, s, t).normalize()
    }

    /// Face and face-local (s,t) of a direction (not necessarily unit).
    pub fn project(dir: Vec3) -> (usize, f64, f64) {
        let (ax, ay, az) = (dir.x.abs(), dir.y.abs(), dir.z.abs());
        if ax >= ay && ax >= az {
            if dir.x > 0.0 {
                (0, -dir.z / ax, dir.y / ax)
            } else {
                (1, dir.z / ax, dir.y / ax)
            }
        } else if ay >= az {
            if dir.y > 0.0 {
                (2, dir.x / ay, -dir.z / ay)
            } else {
                (3, dir.x / ay, dir.z / ay)
            }
        } else if dir.z > 0.0 {
            (4, dir.x / az, dir.y / az)
        } else {
            (5, -dir.x / az, dir.y / az)
        }
    }

    /// The four bilinear taps (clamp-to-edge) for a direction.
    pub fn taps(&self, dir: Vec3) -> [Tap; 4] {
        let (face, s, t) = Self::project(dir);
        let n = self.size;
        let fu = ((s + 1.0) * 0.5 * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let fv = ((1.0 - t) * 0.5 * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let mut c0 = fu.floor() as usize;
        let mut r0 = fv.floor() as usize;
        c0 = c0.min(n - 2);
        r0 = r0.min(n - 2);
        let du = fu - c0 as f64;
        let dv = fv - r0 as f64;
        let base = (face * n + r0) * n + c0;
        [
            Tap { texel: base as u32, weight: (1.0 - du) * (1.0 - dv) },
            Tap { texel: (base + 1) as u32, weight: du * (1.0 - dv) },
            Tap { texel: (base + n) as u32, weight: (1.0 - du) * dv },
            Tap { texel: (base + n + 1) as u32, weight: du * dv },
        ]
    }

    /// Bilinear sample; face chosen by the dominant axis. Errors on a zero
    /// or non-finite direction.
    pub fn sample(&self, dir: Vec3) -> Result<[f64; 3]> {
        if !(dir.x.is_finite() && dir.y.is_finite() && dir.z.is_finite()) {
            return Err(Error::NonFinite(format!("cubemap direction {dir:?}")));
        }
        if dir.norm_squared() == 0.0 {
            return Err(Error::Domain("cubemap sample of zero direction".into()));
        }
        Ok(self.sample_fast(dir))
    }

    #[inline]
    pub fn sample_fast(&self, dir: Vec3) -> [f64; 3] {
        let taps = self.taps(dir);
        let mut out = [0.0; 3];
        for t in taps {
            let i = t.texel as usize * 3;
            out[0] += t.weight * self.data[i];
            out[1] += t.weight * self.data[i + 1];
            out[2] += t.weight * self.data[i + 2];
        }
        out
    }

    /// Adjoint of sampling: scatters `cot_rgb` into a cotangent map and
    /// accumulates the direction cotangent. Smooth within a face; face
    /// seams are measure zero.
    pub fn sample_adjoint(&self, dir: Vec3, cot_rgb: [f64; 3], cot_map: Option<&mut Cubemap>, cot_dir: Option<&mut Vec3>) {
        let taps = self.taps(dir);
        if let Some(map) = cot_map {
            for t in taps {
                let i = t.texel as usize * 3;
                map.data[i] += t.weight * cot_rgb[0];
                map.data[i + 1] += t.weight * cot_rgb[1];
                map.data[i + 2] += t.weight * cot_rgb[2];
            }
        }
        if let Some(cd) = cot_dir {
            let g = self.dir_jacobian_vjp(dir, cot_rgb);
            *cd += g;
        }
    }

    /// (d sample / d dir)^T cot: gradient of the bilinear lookup with
    /// respect to the (unnormalized) direction vector.
    fn dir_jacobian_vjp(&self, dir: Vec3, cot_rgb: [f64; 3]) -> Vec3 {
        let (face, s, t) = Self::project(dir);
        let n = self.size;
        let half = 0.5 * n as f64;

        let fu = (s + 1.0) * half - 0.5;
        let fv = (1.0 - t) * half - 0.5;
        let fu_c = fu.clamp(0.0, (n - 1) as f64);
        let fv_c = fv.clamp(0.0, (n - 1) as f64);
        let mut c0 = (fu_c.floor() as usize).min(n - 2);
        let mut r0 = (fv_c.floor() as usize).min(n - 2);
        c0 = c0.min(n - 2);
        r0 = r0.min(n - 2);
        let du = fu_c - c0 as f64;
        let dv = fv_c - r0 as f64;

        // d(sample)/d(du), d(sample)/d(dv) from bilinear corners
        let v = |dc: usize, dr: usize| -> f64 {
            let i = ((face * n + r0 + dr) * n + c0 + dc) * 3;
            cot_rgb[0] * self.data[i] + cot_rgb[1] * self.data[i + 1] + cot_rgb[2] * self.data[i + 2]
        };
        let (v00, v10, v01, v11) = (v(0, 0), v(1, 0), v(0, 1), v(1, 1));
        let d_du = (v10 - v00) * (1.0 - dv) + (v11 - v01) * dv;
        let d_dv = (v01 - v00) * (1.0 - du) + (v11 - v10) * du;

        // chain through the clamped [0,n-1] range
        let d_du = if (0.0..=((n - 1) as f64)).contains(&fu) { d_du } else { 0.0 };
        let d_dv = if (0.0..=((n - 1) as f64)).contains(&fv) { d_dv } else { 0.0 };

        // d(fu)/d(s) = half; d(fv)/d(t) = -half
        let d_s = d_du * half;
        let d_t = -d_dv * half;

        // d(s,t)/d(dir) per face: s = qs/m, t = qt/m with axis signs
        // (qs_axis, qs_sign, qt_axis, qt_sign, major_axis, major_sign)
        let (qs_a, qs_s, qt_a, qt_s, m_a, m_s): (usize, f64, usize, f64, usize, f64) = match face {
            0 => (2, -1.0, 1, 1.0, 0, 1.0),
            1 => (2, 1.0, 1, 1.0, 0, -1.0),
            2 => (0, 1.0, 2, -1.0, 1, 1.0),
            3 => (0, 1.0, 2, 1.0, 1, -1.0),
            4 => (0, 1.0, 1, 1.0, 2, 1.0),
            _ => (0, -1.0, 1, 1.0, 2, -1.0),
        };
        let m = m_s * dir[m_a];
        let qs = qs_s * dir[qs_a];
        let qt = qt_s * dir[qt_a];
        let inv_m = 1.0 / m;
        let mut g = Vec3::zeros();
        // d(q/m)/d(dir_k) = (dq/ddir_k)/m - q*(dm/ddir_k)/m^2
        g[qs_a] += d_s * qs_s * inv_m;
        g[m_a] -= d_s * qs * m_s * inv_m * inv_m;
        g[qt_a] += d_t * qt_s * inv_m;
        g[m_a] -= d_t * qt * m_s * inv_m * inv_m;
        g
    }
}

/// Direction (unnormalized) of face-local coordinates.
pub fn face_direction(face: usize, s: f64, t: f64) -> Vec3 {
    match face {
        0 => Vec3::new(1.0, t, -s),
        1 => Vec3::new(-1.0, t, s),
        2 => Vec3::new(s, 1.0, -t),
        3 => Vec3::new(s, -1.0, t),
        4 => Vec3::new(s, t, 1.0),
        5 => Vec3::new(-s, t, -1.0),
        _ => unreachable!("face index {face}"),
    }
}

/// Write as a single horizontal 6S x S PFM strip, face order +X -X +Y -Y +Z -Z.
pub fn write_strip(c: &Cubemap, path: &Path) -> Result<()> {
    let s = c.size;
    let mut img = Image::new(6 * s, s, 3);
    for face in 0..6 {
        for row in 0..s {
            for col in 0..s {
                let v = c.texel(c.texel_index(face, col, row));
                img.px_mut(face * s + col, row).copy_from_slice(&v);
            }
        }
    }
    img::write_pfm(&img, path)
}

pub fn read_strip(path: &Path) -> Result<Cubemap> {
    let img = img::read_pfm(path)?;
    if img.channels != 3 || img.w != 6 * img.h {
        return Err(Error::Format(format!(
            "{}: expected a 6SxS RGB cubemap strip, got {}x{}x{}",
            path.display(),
            img.w,
            img.h,
            img.channels
        )));
    }
    let s = img.h;
    let mut c = Cubemap::new(s);
    for face in 0..6 {
        for row in 0..s {
            for col in 0..s {
                let v = img.px(face * s + col, row);
                c.texel_mut(face, col, row).copy_from_slice(v);
            }
        }
    }
    Ok(c)
}

/// Write six per-face PFM files `<stem>_px.pfm` ... `<stem>_nz.pfm`.
pub fn write_faces(c: &Cubemap, dir: &Path, stem: &str) -> Result<()> {
    let s = c.size;
    for (face, suffix) in FACE_SUFFIX.iter().enumerate() {
        let mut img = Image::new(s, s, 3);
        for row in 0..s {
            for col in 0..s {
                let v = c.texel(c.texel_index(face, col, row));
                img.px_mut(col, row).copy_from_slice(&v);
            }
        }
        img::write_pfm(&img, &dir.join(format!("{stem}_{suffix}.pfm")))?;
    }
    Ok(())
}
