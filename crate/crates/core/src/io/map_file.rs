//! Lossless binary map sidecar: every Gaussian parameter plus the camera
//! intrinsics the map was built with.
//!
//! Layout (little-endian): magic `GMAP`, u32 version, intrinsics as four f64
//! and two u32, u64 count, then per Gaussian eight f64 (center, radius,
//! opacity, color) and a u32 creation frame.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::IoError;
use crate::gaussian_map::{Gaussian, GaussianMap};
use crate::geometry::Intrinsics;

pub const MAP_MAGIC: &[u8; 4] = b"GMAP";
const VERSION: u32 = 1;

pub fn encode_map(map: &GaussianMap, k: &Intrinsics) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + map.len() * 68);
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [k.fx, k.fy, k.cx, k.cy] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(k.width as u32).to_le_bytes());
    out.extend_from_slice(&(k.height as u32).to_le_bytes());
    out.extend_from_slice(&(map.len() as u64).to_le_bytes());
    for (g, c) in map.gaussians().iter().zip(map.created()) {
        for v in [
            g.center.x, g.center.y, g.center.z, g.radius, g.opacity, g.color[0], g.color[1], g.color[2],
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], IoError> {
        let end = self.pos + N;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| IoError::format(self.path, "truncated map file"))?;
        self.pos = end;
        Ok(s.try_into().expect("slice length"))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        self.take::<4>().map(u32::from_le_bytes)
    }
}

pub fn decode_map(bytes: &[u8], path: &Path) -> Result<(GaussianMap, Intrinsics), IoError> {
    let mut r = Reader { bytes, pos: 0, path };
    if &r.take::<4>()? != MAP_MAGIC {
        return Err(IoError::format(path, "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(IoError::format(path, format!("unsupported version {version}")));
    }
    let (fx, fy, cx, cy) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let (w, h) = (r.u32()? as usize, r.u32()? as usize);
    let k = Intrinsics::new(fx, fy, cx, cy, w, h).map_err(|e| IoError::format(path, e.to_string()))?;
    let n = u64::from_le_bytes(r.take::<8>()?) as usize;
    if bytes.len() - r.pos != n * 68 {
        return Err(IoError::format(path, format!("size does not match {n} gaussians")));
    }
    let mut gaussians = Vec::with_capacity(n);
    let mut created = Vec::with_capacity(n);
    for _ in 0..n {
        let v: [f64; 8] = [r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        gaussians.push(Gaussian {
            center: Vector3::new(v[0], v[1], v[2]),
            radius: v[3],
            opacity: v[4],
            color: [v[5], v[6], v[7]],
        });
        created.push(r.u32()?);
    }
    Ok((GaussianMap::from_parts(gaussians, created), k))
}

pub fn save_map(map: &GaussianMap, k: &Intrinsics, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, encode_map(map, k)).map_err(|e| IoError::io(path, e))
}

pub fn load_map(path: &Path) -> Result<(GaussianMap, Intrinsics), IoError> {
    if !path.exists() {
        return Err(IoError::Missing(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_map(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synthetic::desk_intrinsics;

    fn sample() -> GaussianMap {
        let gs = (0..5)
            .map(|i| Gaussian {
                center: Vector3::new(i as f64 * 0.1, -0.3, 2.0 + 1.0 / 3.0),
                radius: 0.01 * (i + 1) as f64,
                opacity: 0.7,
                color: [0.1, 0.2, std::f64::consts::PI / 4.0],
            })
            .collect();
        GaussianMap::from_parts(gs, vec![0, 0, 1, 2, 3])
    }

    #[test]
    fn bit_exact_roundtrip() {
        let k = desk_intrinsics();
        let bytes = encode_map(&sample(), &k);
        let (map, k2) = decode_map(&bytes, Path::new("m")).unwrap();
        assert_eq!(map, sample());
        assert_eq!(k2, k);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.gmap");
        save_map(&map, &k, &p).unwrap();
        assert_eq!(load_map(&p).unwrap().0, sample());
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = encode_map(&sample(), &desk_intrinsics());
        assert!(decode_map(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_map(&bad, Path::new("m")).is_err());
        assert!(decode_map(&[], Path::new("m")).is_err());
    }
}
