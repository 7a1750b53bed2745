//! TUM trajectory text format: `timestamp tx ty tz qx qy qz qw`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::IoError;
use crate::eval::Trajectory;
use crate::geometry::Pose;

pub const TRAJECTORY_HEADER: &str = "# timestamp tx ty tz qx qy qz qw";

pub fn format_tum_line(timestamp: f64, pose: &Pose) -> String {
    let t = pose.translation();
    let q = pose.quaternion_xyzw();
    format!(
        "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
    )
}

/// Parses one pose line. Returns `None` on a wrong field count or a
/// non-numeric field.
pub fn parse_tum_line(line: &str) -> Option<(f64, Pose)> {
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    if v.len() != 8 || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let qn = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
    if qn < 1e-12 {
        return None;
    }
    Some((v[0], Pose::from_tum([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]])))
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut s = String::new();
    writeln!(s, "{TRAJECTORY_HEADER}").expect("string write");
    for (t, p) in traj.entries() {
        writeln!(s, "{}", format_tum_line(*t, p)).expect("string write");
    }
    s
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, format_trajectory(traj)).map_err(|e| IoError::io(path, e))
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory, IoError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry = parse_tum_line(line)
            .ok_or_else(|| IoError::parse(path, i + 1, format!("expected 8 numeric fields: {line:?}")))?;
        entries.push(entry);
    }
    Trajectory::new(entries).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    if !path.exists() {
        return Err(IoError::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_trajectory(&text, path)
}
