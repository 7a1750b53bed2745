//! ASCII PLY point clouds with 8-bit vertex colors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::IoError;
use crate::gaussian_map::GaussianMap;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Vector3<f64>, c: [f64; 3]) {
        self.points.push(p);
        self.colors.push(c);
    }

    /// Gaussian centers with their colors.
    pub fn from_map(map: &GaussianMap) -> Self {
        Self {
            points: map.gaussians().iter().map(|g| g.center).collect(),
            colors: map.gaussians().iter().map(|g| g.color).collect(),
        }
    }
}

pub fn color_to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn format_ply(cloud: &PointCloud) -> String {
    let mut s = String::new();
    write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .expect("string write");
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        writeln!(
            s,
            "{:.6} {:.6} {:.6} {} {} {}",
            p.x,
            p.y,
            p.z,
            color_to_u8(c[0]),
            color_to_u8(c[1]),
            color_to_u8(c[2])
        )
        .expect("string write");
    }
    s
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, format_ply(cloud)).map_err(|e| IoError::io(path, e))
}

/// Reads the ASCII layout written by [`write_ply`].
pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud, IoError> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut header_ok = false;
    for (i, line) in lines.by_ref() {
        let line = line.trim();
        if i == 0 && line != "ply" {
            return Err(IoError::parse(path, 1, "missing ply magic"));
        }
        if line.starts_with("format") && line != "format ascii 1.0" {
            return Err(IoError::parse(path, i + 1, "only ascii 1.0 is supported"));
        }
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|_| IoError::parse(path, i + 1, "bad vertex count"))?);
        }
        if line == "end_header" {
            header_ok = true;
            break;
        }
    }
    let count = match (header_ok, count) {
        (true, Some(n)) => n,
        _ => return Err(IoError::format(path, "incomplete header")),
    };
    let mut cloud = PointCloud::default();
    for (i, line) in lines {
        if cloud.len() == count {
            break;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || IoError::parse(path, i + 1, format!("bad vertex line {line:?}"));
        if f.len() != 6 {
            return Err(bad());
        }
        let xyz: Vec<f64> = f[..3].iter().map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let rgb: Vec<u8> = f[3..].iter().map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
        cloud.push(
            Vector3::new(xyz[0], xyz[1], xyz[2]),
            [rgb[0] as f64 / 255.0, rgb[1] as f64 / 255.0, rgb[2] as f64 / 255.0],
        );
    }
    if cloud.len() != count {
        return Err(IoError::format(path, format!("expected {count} vertices, found {}", cloud.len())));
    }
    Ok(cloud)
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_ply(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_fixture() {
        let mut c = PointCloud::default();
        c.push(Vector3::new(0.0, 0.0, 2.0), [1.0, 0.5, 0.0]);
        c.push(Vector3::new(-1.25, 0.5, 3.0), [0.2, 1.5, -0.1]);
        let golden = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
                      property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n\
                      0.000000 0.000000 2.000000 255 128 0\n\
                      -1.250000 0.500000 3.000000 51 255 0\n";
        assert_eq!(format_ply(&c), golden);
    }

    #[test]
    fn roundtrip_and_errors() {
        let mut c = PointCloud::default();
        for i in 0..20 {
            let v = i as f64 * 0.1;
            c.push(Vector3::new(v, -v, 1.0 + v), [i as f64 / 19.0, 0.0, 1.0]);
        }
        let back = parse_ply(&format_ply(&c), Path::new("p")).unwrap();
        assert_eq!(back.len(), 20);
        for i in 0..20 {
            assert!((back.points[i] - c.points[i]).norm() < 1e-6);
            for k in 0..3 {
                assert!((back.colors[i][k] - c.colors[i][k]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
        let empty = format_ply(&PointCloud::default());
        assert!(parse_ply(&empty, Path::new("p")).unwrap().is_empty());
        assert!(parse_ply("plx\n", Path::new("p")).is_err());
        let truncated = format_ply(&c).lines().take(15).collect::<Vec<_>>().join("\n");
        assert!(parse_ply(&truncated, Path::new("p")).is_err());
    }
}
