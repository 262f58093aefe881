//! Planar f64 image buffer plus PFM / PNG readers and writers.
//!
//! PFM layout: `PF\n<w> <h>\n-1.0\n` followed by little-endian float32
//! scanlines stored bottom-up (`Pf` header for single-channel maps).

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Interleaved image: `data[(y*w + x)*channels + c]`, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub w: usize,
    pub h: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(w: usize, h: usize, channels: usize) -> Self {
        Image {
            w,
            h,
            channels,
            data: vec![0.0; w * h * channels],
        }
    }

    pub fn constant(w: usize, h: usize, channels: usize, v: f64) -> Self {
        Image {
            w,
            h,
            channels,
            data: vec![v; w * h * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        (y * self.w + x) * self.channels
    }

    #[inline]
    pub fn px(&self, x: usize, y: usize) -> &[f64] {
        let i = self.idx(x, y);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn px_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.idx(x, y);
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.w == other.w && self.h == other.h && self.channels == other.channels
    }

    pub fn require_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.w, self.h, self.channels, other.w, other.h, other.channels
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            w: self.w,
            h: self.h,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Mean absolute difference against another image of the same shape.
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other));
        if self.data.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        s / self.data.len() as f64
    }
}

pub fn write_pfm(img: &Image, path: &Path) -> Result<()> {
    if img.channels != 1 && img.channels != 3 {
        return Err(Error::Shape(format!(
            "pfm supports 1 or 3 channels, got {}",
            img.channels
        )));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    write!(w, "{}\n{} {}\n-1.0\n", magic, img.w, img.h).map_err(|e| Error::io(path, e))?;
    // bottom-up scanlines
    for y in (0..img.h).rev() {
        for x in 0..img.w {
            for c in 0..img.channels {
                let v = img.px(x, y)[c] as f32;
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;

    // Header: three whitespace-delimited tokens after the magic.
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("{}: truncated pfm header", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(&bytes)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(Error::Format(format!("{}: bad pfm magic {m:?}", path.display()))),
    };
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad pfm width", path.display())))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad pfm height", path.display())))?;
    let scale: f64 = token(&bytes)?
        .parse()
        .map_err(|_| Error::Format(format!("{}: bad pfm scale", path.display())))?;
    pos += 1; // single whitespace after scale line

    let n = w * h * channels;
    if bytes.len() < pos + n * 4 {
        return Err(Error::Format(format!("{}: pfm payload too short", path.display())));
    }
    let little_endian = scale < 0.0;
    let mut img = Image::new(w, h, channels);
    let mut off = pos;
    for y in (0..h).rev() {
        for x in 0..w {
            for c in 0..channels {
                let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                img.px_mut(x, y)[c] = v as f64;
                off += 4;
            }
        }
    }
    Ok(img)
}

/// Write an LDR image as 8-bit PNG. Values are expected in [0,1] already
/// (tone-mapped); they are clamped and quantized.
pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let as_io = |e: image::ImageError| Error::Format(format!("{}: {e}", path.display()));
    match img.channels {
        1 => {
            let mut buf = image::GrayImage::new(img.w as u32, img.h as u32);
            for y in 0..img.h {
                for x in 0..img.w {
                    buf.put_pixel(x as u32, y as u32, image::Luma([quant(img.px(x, y)[0])]));
                }
            }
            buf.save(path).map_err(as_io)
        }
        3 => {
            let mut buf = image::RgbImage::new(img.w as u32, img.h as u32);
            for y in 0..img.h {
                for x in 0..img.w {
                    let p = img.px(x, y);
                    buf.put_pixel(
                        x as u32,
                        y as u32,
                        image::Rgb([quant(p[0]), quant(p[1]), quant(p[2])]),
                    );
                }
            }
            buf.save(path).map_err(as_io)
        }
        c => Err(Error::Shape(format!("png supports 1 or 3 channels, got {c}"))),
    }
}

/// Read an 8-bit PNG back into [0,1] floats.
pub fn read_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            let mut img = Image::new(w, h, 1);
            for y in 0..h {
                for x in 0..w {
                    img.px_mut(x, y)[0] = g.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0;
                }
            }
            Ok(img)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            let mut img = Image::new(w, h, 3);
            for y in 0..h {
                for x in 0..w {
                    let p = rgb.get_pixel(x as u32, y as u32).0;
                    let q = img.px_mut(x, y);
                    q[0] = p[0] as f64 / 255.0;
                    q[1] = p[1] as f64 / 255.0;
                    q[2] = p[2] as f64 / 255.0;
                }
            }
            Ok(img)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(5, 3, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37 - 2.0) as f32 as f64; // representable in f32
        }
        let p = dir.path().join("t.pfm");
        write_pfm(&img, &p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_grayscale_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(4, 4, 1);
        img.px_mut(2, 1)[0] = 7.5;
        let p = dir.path().join("g.pfm");
        write_pfm(&img, &p).unwrap();
        let back = read_pfm(&p).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pfm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, b"P6\n1 1\n255\n").unwrap();
        assert!(read_pfm(&p).is_err());
    }

    #[test]
    fn png_round_trip_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(3, 2, 3);
        img.px_mut(1, 1).copy_from_slice(&[0.25, 0.5, 1.0]);
        let p = dir.path().join("t.png");
        write_png(&img, &p).unwrap();
        let back = read_png(&p).unwrap();
        assert!(img.mean_abs_diff(&back) < 1.0 / 255.0);
    }
}
