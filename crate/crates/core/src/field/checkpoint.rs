//! Field checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic  b"TWNF"
//!   version u32 (currently 1)
//!   kind    u8: 0 voxel, 1 triplane, 2 tricolumn
//!   res     u32 (cubic lattice / plane resolution R)
//!   channels u32 (voxel channels / plane channels K / cell channels C)
//!   mixing descriptor: mode u8 (0 identity-sum, 1 affine, 2 mlp),
//!                      output u32, hidden u32 (0 unless mlp)
//!   gains   5 x f32 (sigma, albedo, metal, rough, normal)
//!   payload param f32 values in declared order (planes, then mixing)

use super::{
    Bounds, ChannelGains, FieldChannels, MixingHead, MixingMode, Rep, TriplaneField,
    TricolumnField, VolumeField, VoxelGrid,
};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TWNF";
const VERSION: u32 = 1;

pub fn save(field: &VolumeField, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e: std::io::Error| Error::io(path, e);

    let (kind, res, channels): (u8, u32, u32) = match &field.rep {
        Rep::Voxel(g) => {
            let [wd, h, d] = g.dims;
            if wd != h || h != d {
                return Err(Error::Format(format!(
                    "only cubic voxel grids are serializable, got {:?}",
                    g.dims
                )));
            }
            (0, wd as u32, g.channels as u32)
        }
        Rep::Triplane(t) => (1, t.res as u32, t.channels as u32),
        Rep::Tricolumn(t) => (2, t.res as u32, t.cells as u32),
    };

    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&[kind]).map_err(io)?;
    w.write_all(&res.to_le_bytes()).map_err(io)?;
    w.write_all(&channels.to_le_bytes()).map_err(io)?;

    let (mode, out, hidden): (u8, u32, u32) = match field.mixing() {
        None => (0, channels, 0),
        Some(m) => match m.mode {
            MixingMode::IdentitySum => (0, m.output as u32, 0),
            MixingMode::Affine => (1, m.output as u32, 0),
            MixingMode::Mlp { hidden } => (2, m.output as u32, hidden as u32),
        },
    };
    w.write_all(&[mode]).map_err(io)?;
    w.write_all(&out.to_le_bytes()).map_err(io)?;
    w.write_all(&hidden.to_le_bytes()).map_err(io)?;

    let g = &field.gains;
    for v in [g.sigma, g.albedo, g.metal, g.rough, g.normal] {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    for &v in field.params() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<VolumeField> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let io = |e: std::io::Error| Error::io(path, e);
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(io)?;
    let kind = b[0];
    let res = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    r.read_exact(&mut b).map_err(io)?;
    let mix_mode = b[0];
    let out = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;

    let read_f32 = |r: &mut BufReader<File>| -> Result<f64> {
        let mut fb = [0u8; 4];
        r.read_exact(&mut fb).map_err(|e| Error::io(path, e))?;
        Ok(f32::from_le_bytes(fb) as f64)
    };
    let gains = ChannelGains {
        sigma: read_f32(&mut r)?,
        albedo: read_f32(&mut r)?,
        metal: read_f32(&mut r)?,
        rough: read_f32(&mut r)?,
        normal: read_f32(&mut r)?,
    };

    if res < 2 || channels == 0 {
        return Err(bad(&format!("bad dims res={res} channels={channels}")));
    }

    let mixing = match mix_mode {
        0 => MixingHead::identity(channels),
        1 => MixingHead::affine(channels, out),
        2 => MixingHead::mlp(channels, hidden, out),
        m => return Err(bad(&format!("bad mixing mode {m}"))),
    };

    let rep = match kind {
        0 => Rep::Voxel(VoxelGrid::new(channels, [res, res, res], Bounds::unit())?),
        1 => Rep::Triplane(TriplaneField::new(channels, res, mixing, Bounds::unit())?),
        2 => Rep::Tricolumn(TricolumnField::new(channels, res, mixing, Bounds::unit())?),
        k => return Err(bad(&format!("bad field kind {k}"))),
    };

    let layout = FieldChannels::default();
    let mut field = VolumeField { rep, layout, gains };
    if field.decoded_width() != layout.total {
        return Err(bad(&format!(
            "decoded width {} incompatible with the standard 9-channel layout",
            field.decoded_width()
        )));
    }

    let n = field.param_len();
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload).map_err(io)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(io)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    for (i, p) in field.params_mut().iter_mut().enumerate() {
        let raw: [u8; 4] = payload[i * 4..i * 4 + 4].try_into().unwrap();
        let v = f32::from_le_bytes(raw) as f64;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: parameter {i} is not finite",
                path.display()
            )));
        }
        *p = v;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn roundtrip(field: &VolumeField) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.twnf");
        save(field, &p).unwrap();
        let back = load(&p).unwrap();
        assert_eq!(field.params().len(), back.params().len());
        for (a, b) in field.params().iter().zip(back.params()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(*a, *b); // exact since inputs are f32-representable
        }
        assert_eq!(field.gains, back.gains);
        assert_eq!(field.mixing().map(|m| m.mode), back.mixing().map(|m| m.mode));
    }

    #[test]
    fn round_trips_all_kinds() {
        let layout = FieldChannels::default();
        let mut rng = crate::rng::stream(4, "ckpt-test", 0);
        let mut fill = |data: &mut [f64]| {
            for v in data.iter_mut() {
                *v = (rng.gen_range(-2.0f64..2.0) as f32) as f64;
            }
        };

        let mut g = VoxelGrid::new(layout.total, [3, 3, 3], Bounds::unit()).unwrap();
        fill(&mut g.data);
        roundtrip(&VolumeField::new(Rep::Voxel(g), layout, ChannelGains::default()).unwrap());

        let mut t =
            TriplaneField::new(4, 5, MixingHead::affine(4, layout.total), Bounds::unit()).unwrap();
        fill(&mut t.data);
        roundtrip(&VolumeField::new(Rep::Triplane(t), layout, ChannelGains::default()).unwrap());

        let mut tc =
            TricolumnField::new(6, 4, MixingHead::mlp(6, 8, layout.total), Bounds::unit()).unwrap();
        fill(&mut tc.data);
        let gains = ChannelGains {
            sigma: 400.0,
            albedo: 40.0,
            metal: 40.0,
            rough: 40.0,
            normal: 1.0,
        };
        roundtrip(&VolumeField::new(Rep::Tricolumn(tc), layout, gains).unwrap());
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.twnf");
        std::fs::write(&p, b"NOPE0000000000000000000000").unwrap();
        assert!(load(&p).is_err());
    }
}
