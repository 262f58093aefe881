//! Cubemap <-> equirectangular (latitude/longitude) projections.
//!
//! Pixel (u,v) of a W x H map (W = 2H) covers longitude
//! 2*pi*(u+0.5)/W - pi and latitude pi/2 - pi*(v+0.5)/H, so row 0 looks
//! straight up (+y) and the center column looks along +z.

use super::cubemap::Cubemap;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::math::Vec3;

/// Direction of an equirect pixel center.
pub fn pixel_direction(w: usize, h: usize, u: f64, v: f64) -> Vec3 {
    let lon = 2.0 * std::f64::consts::PI * (u + 0.5) / w as f64 - std::f64::consts::PI;
    let lat = std::f64::consts::FRAC_PI_2 - std::f64::consts::PI * (v + 0.5) / h as f64;
    Vec3::new(lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos())
}

pub fn cubemap_to_equirect(c: &Cubemap, width: usize, height: usize) -> Result<Image> {
    if width != 2 * height || height == 0 {
        return Err(Error::Config(format!(
            "equirect aspect must be 2:1, got {width}x{height}"
        )));
    }
    let mut img = Image::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let d = pixel_direction(width, height, x as f64, y as f64);
            let v = c.sample_fast(d);
            img.px_mut(x, y).copy_from_slice(&v);
        }
    }
    Ok(img)
}

/// Adjoint of `cubemap_to_equirect`: scatters an equirect cotangent image
/// back onto the cubemap texels.
pub fn cubemap_to_equirect_adjoint(c: &Cubemap, cot_img: &Image, cot_map: &mut Cubemap) {
    for y in 0..cot_img.h {
        for x in 0..cot_img.w {
            let d = pixel_direction(cot_img.w, cot_img.h, x as f64, y as f64);
            let p = cot_img.px(x, y);
            c.sample_adjoint(d, [p[0], p[1], p[2]], Some(cot_map), None);
        }
    }
}

/// Bilinear equirect lookup with longitude wrap and latitude clamp.
pub fn sample_equirect(img: &Image, dir: Vec3) -> [f64; 3] {
    let d = dir.normalize();
    let lon = d.x.atan2(d.z);
    let lat = d.y.clamp(-1.0, 1.0).asin();
    let fu = (lon + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * img.w as f64 - 0.5;
    let fv = (std::f64::consts::FRAC_PI_2 - lat) / std::f64::consts::PI * img.h as f64 - 0.5;
    let fv = fv.clamp(0.0, (img.h - 1) as f64);
    let u0 = fu.floor();
    let v0 = (fv.floor() as usize).min(img.h.saturating_sub(2));
    let du = fu - u0;
    let dv = fv - v0 as f64;
    let wrap = |i: i64| -> usize { i.rem_euclid(img.w as i64) as usize };
    let (c0, c1) = (wrap(u0 as i64), wrap(u0 as i64 + 1));
    let mut out = [0.0; 3];
    for ch in 0..img.channels.min(3) {
        let v00 = img.px(c0, v0)[ch];
        let v10 = img.px(c1, v0)[ch];
        let v01 = img.px(c0, v0 + 1)[ch];
        let v11 = img.px(c1, v0 + 1)[ch];
        out[ch] = (1.0 - du) * (1.0 - dv) * v00
            + du * (1.0 - dv) * v10
            + (1.0 - du) * dv * v01
            + du * dv * v11;
    }
    out
}

/// Rasterize an equirect image onto a cubemap, `ss`-times supersampled.
pub fn equirect_to_cubemap(img: &Image, size: usize, ss: usize) -> Cubemap {
    let mut c = Cubemap::new(size);
    let ss = ss.max(1);
    for face in 0..6 {
        for row in 0..size {
            for col in 0..size {
                let mut acc = [0.0; 3];
                for sy in 0..ss {
                    for sx in 0..ss {
                        let s = ((col as f64 + (sx as f64 + 0.5) / ss as f64) / size as f64) * 2.0
                            - 1.0;
                        let t = 1.0
                            - ((row as f64 + (sy as f64 + 0.5) / ss as f64) / size as f64) * 2.0;
                        let d = super::cubemap::face_direction(face, s, t);
                        let v = sample_equirect(img, d);
                        for ch in 0..3 {
                            acc[ch] += v[ch];
                        }
                    }
                }
                let inv = 1.0 / (ss * ss) as f64;
                let tx = c.texel_mut(face, col, row);
                for ch in 0..3 {
                    tx[ch] = acc[ch] * inv;
                }
            }
        }
    }
    c
}
