//! TUM RGB-D directory layout: `rgb.txt`, `depth.txt`, `groundtruth.txt`
//! and the image folders they reference.

use std::path::{Path, PathBuf};

use crate::error::IoError;
use crate::eval::{Trajectory, ASSOCIATION_TOLERANCE};
use crate::geometry::{Intrinsics, Pose};
use crate::image::{load_depth_png, load_rgb_png, DepthMap, RgbImage};
use crate::io::trajectory::parse_tum_line;

/// Optional per-sequence calibration: one line `fx fy cx cy width height`.
pub const CALIBRATION_FILE: &str = "calibration.txt";

/// Freiburg 1 defaults used when no calibration file is present.
pub fn freiburg1_intrinsics() -> Intrinsics {
    Intrinsics::new(517.3, 516.5, 318.6, 255.3, 640, 480).expect("valid intrinsics")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TumFrame {
    pub timestamp: f64,
    pub rgb: PathBuf,
    pub depth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TumSequence {
    pub dir: PathBuf,
    pub frames: Vec<TumFrame>,
    pub groundtruth: Option<Trajectory>,
    pub intrinsics: Intrinsics,
}

fn read_text(path: &Path) -> Result<String, IoError> {
    if !path.exists() {
        return Err(IoError::Missing(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses `timestamp path` lines.
pub fn parse_file_list(text: &str, path: &Path) -> Result<Vec<(f64, String)>, IoError> {
    let mut out: Vec<(f64, String)> = Vec::new();
    for (line, l) in content_lines(text) {
        let mut parts = l.split_whitespace();
        let (Some(ts), Some(file), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(IoError::parse(path, line, format!("expected 'timestamp path': {l:?}")));
        };
        let t: f64 = ts
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| IoError::parse(path, line, format!("bad timestamp {ts:?}")))?;
        if out.last().is_some_and(|(prev, _)| t <= *prev) {
            return Err(IoError::parse(path, line, "timestamps must increase"));
        }
        out.push((t, file.to_string()));
    }
    Ok(out)
}

fn parse_groundtruth(text: &str, path: &Path) -> Result<Trajectory, IoError> {
    let mut entries: Vec<(f64, Pose)> = Vec::new();
    for (line, l) in content_lines(text) {
        let e = parse_tum_line(l).ok_or_else(|| IoError::parse(path, line, format!("bad pose line {l:?}")))?;
        if entries.last().is_some_and(|(prev, _)| e.0 <= *prev) {
            return Err(IoError::parse(path, line, "timestamps must increase"));
        }
        entries.push(e);
    }
    Trajectory::new(entries).map_err(|e| IoError::format(path, e.to_string()))
}

fn parse_calibration(text: &str, path: &Path) -> Result<Intrinsics, IoError> {
    let (line, l) = content_lines(text)
        .next()
        .ok_or_else(|| IoError::format(path, "empty calibration"))?;
    let v: Vec<f64> = l
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| IoError::parse(path, line, "non-numeric calibration"))?;
    if v.len() != 6 || v[4] < 1.0 || v[5] < 1.0 || v[4].fract() != 0.0 || v[5].fract() != 0.0 {
        return Err(IoError::parse(path, line, "expected 'fx fy cx cy width height'"));
    }
    Intrinsics::new(v[0], v[1], v[2], v[3], v[4] as usize, v[5] as usize)
        .map_err(|e| IoError::parse(path, line, e.to_string()))
}

/// For each entry of `a`, the index of the nearest entry of `b` within the
/// tolerance, each `b` entry used at most once.
fn nearest(a: &[(f64, String)], b: &[(f64, String)], tolerance: f64) -> Vec<Option<usize>> {
    let mut used = vec![false; b.len()];
    a.iter()
        .map(|(t, _)| {
            let idx = b.partition_point(|(tb, _)| tb < t);
            let best = [idx.wrapping_sub(1), idx]
                .into_iter()
                .filter(|&j| j < b.len() && !used[j] && (b[j].0 - t).abs() <= tolerance)
                .min_by(|&i, &j| (b[i].0 - t).abs().total_cmp(&(b[j].0 - t).abs()));
            if let Some(j) = best {
                used[j] = true;
            }
            best
        })
        .collect()
}

/// Loads a TUM-layout directory. `rgb.txt` is required; without `depth.txt`
/// frames carry no depth path, and RGB frames without a depth partner within
/// the association tolerance are dropped.
pub fn load_tum(dir: &Path) -> Result<TumSequence, IoError> {
    if !dir.is_dir() {
        return Err(IoError::Missing(dir.to_path_buf()));
    }
    let rgb_path = dir.join("rgb.txt");
    let rgb = parse_file_list(&read_text(&rgb_path)?, &rgb_path)?;
    let depth_path = dir.join("depth.txt");
    let frames = if depth_path.exists() {
        let depth = parse_file_list(&read_text(&depth_path)?, &depth_path)?;
        nearest(&rgb, &depth, ASSOCIATION_TOLERANCE)
            .into_iter()
            .zip(&rgb)
            .filter_map(|(j, (t, f))| {
                j.map(|j| TumFrame {
                    timestamp: *t,
                    rgb: dir.join(f),
                    depth: Some(dir.join(&depth[j].1)),
                })
            })
            .collect()
    } else {
        rgb.iter()
            .map(|(t, f)| TumFrame {
                timestamp: *t,
                rgb: dir.join(f),
                depth: None,
            })
            .collect()
    };
    let gt_path = dir.join("groundtruth.txt");
    let groundtruth = if gt_path.exists() {
        Some(parse_groundtruth(&read_text(&gt_path)?, &gt_path)?)
    } else {
        None
    };
    let cal_path = dir.join(CALIBRATION_FILE);
    let intrinsics = if cal_path.exists() {
        parse_calibration(&read_text(&cal_path)?, &cal_path)?
    } else {
        freiburg1_intrinsics()
    };
    Ok(TumSequence {
        dir: dir.to_path_buf(),
        frames,
        groundtruth,
        intrinsics,
    })
}

impl TumSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_rgb(&self, i: usize) -> Result<RgbImage, IoError> {
        let path = &self.frames[i].rgb;
        if !path.exists() {
            return Err(IoError::Missing(path.clone()));
        }
        load_rgb_png(path)
    }

    pub fn load_depth(&self, i: usize) -> Result<Option<DepthMap>, IoError> {
        match &self.frames[i].depth {
            Some(path) if !path.exists() => Err(IoError::Missing(path.clone())),
            Some(path) => load_depth_png(path).map(Some),
            None => Ok(None),
        }
    }

    /// Ground-truth poses associated to each frame, where available.
    pub fn groundtruth_per_frame(&self) -> Vec<Option<Pose>> {
        let Some(gt) = &self.groundtruth else {
            return vec![None; self.frames.len()];
        };
        let frames = Trajectory::new(self.frames.iter().map(|f| (f.timestamp, Pose::identity())).collect())
            .expect("frame timestamps increase");
        let mut out = vec![None; self.frames.len()];
        for (i, j) in crate::eval::associate(&frames, gt, ASSOCIATION_TOLERANCE) {
            out[i] = Some(gt.entries()[j].1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{save_rgb_png, Grid};
    use std::fs;

    fn fixture(dir: &Path, depth_times: &[&str]) {
        fs::create_dir_all(dir.join("rgb")).unwrap();
        fs::create_dir_all(dir.join("depth")).unwrap();
        let rgb_times = ["1.000000", "1.033333", "1.066667"];
        let mut rgb_txt = String::from("# color images\n# timestamp filename\n");
        for (i, t) in rgb_times.iter().enumerate() {
            rgb_txt += &format!("{t} rgb/{i}.png\n");
            save_rgb_png(&Grid::new(4, 3, [0.2, 0.4, 0.6]), &dir.join(format!("rgb/{i}.png"))).unwrap();
        }
        fs::write(dir.join("rgb.txt"), rgb_txt).unwrap();
        let mut depth_txt = String::from("# depth\n");
        for (i, t) in depth_times.iter().enumerate() {
            depth_txt += &format!("{t} depth/{i}.png\n");
            let mut buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> = image::ImageBuffer::new(4, 3);
            buf.put_pixel(1, 1, image::Luma([5000]));
            buf.save(dir.join(format!("depth/{i}.png"))).unwrap();
        }
        fs::write(dir.join("depth.txt"), depth_txt).unwrap();
        fs::write(
            dir.join("groundtruth.txt"),
            "# ground truth\n0.99 0 0 0 0 0 0 1\n1.0334 1 0 0 0 0 0 1\n1.0667 2 0 0 0 0 0 1\n",
        )
        .unwrap();
        fs::write(dir.join(CALIBRATION_FILE), "100 100 1.5 1 4 3\n").unwrap();
    }

    #[test]
    fn well_formed_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &["1.001", "1.034", "1.066"]);
        let seq = load_tum(dir.path()).unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.intrinsics.dims(), (4, 3));
        let d = seq.load_depth(0).unwrap().unwrap();
        assert_eq!(d.get(1, 1), Some(1.0));
        assert_eq!(d.get(0, 0), None);
        assert_eq!(seq.load_rgb(2).unwrap().get(0, 0)[1], 102.0 / 255.0);
        let gt = seq.groundtruth_per_frame();
        assert!(gt[0].is_some());
        assert_eq!(gt[1].unwrap().translation().x, 1.0);
    }

    #[test]
    fn offset_depth_drops_frame() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &["1.000", "1.063333", "1.067"]);
        let seq = load_tum(dir.path()).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames[1].timestamp, 1.066667);
    }

    #[test]
    fn malformed_inputs_are_structured_errors() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), &["1.0", "1.033", "1.066"]);
        assert!(matches!(load_tum(&dir.path().join("none")), Err(IoError::Missing(_))));
        fs::write(dir.path().join("depth.txt"), "# c\n1.0 depth/0.png\nabc depth/1.png\n").unwrap();
        match load_tum(dir.path()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(dir.path().join("depth.txt"), "1.0\n").unwrap();
        assert!(matches!(load_tum(dir.path()), Err(IoError::Parse { line: 1, .. })));
        fs::write(dir.path().join("depth.txt"), "1.0 a\n1.0 b\n").unwrap();
        assert!(load_tum(dir.path()).is_err());
        fs::remove_file(dir.path().join("depth.txt")).unwrap();
        fs::write(dir.path().join("groundtruth.txt"), "1 2 3\n").unwrap();
        assert!(matches!(load_tum(dir.path()), Err(IoError::Parse { line: 1, .. })));
        fs::write(dir.path().join("groundtruth.txt"), "").unwrap();
        fs::write(dir.path().join(CALIBRATION_FILE), "1 2 3 4 5.5 6\n").unwrap();
        assert!(load_tum(dir.path()).is_err());
        fs::remove_file(dir.path().join("rgb.txt")).unwrap();
        assert!(matches!(load_tum(dir.path()), Err(IoError::Missing(_))));
    }

    #[test]
    fn arbitrary_text_never_panics() {
        use proptest::prelude::*;
        proptest!(|(text in "[0-9a-z .#\\n-]{0,200}")| {
            let _ = parse_file_list(&text, Path::new("x"));
            let _ = parse_groundtruth(&text, Path::new("x"));
            let _ = parse_calibration(&text, Path::new("x"));
        });
    }
}
