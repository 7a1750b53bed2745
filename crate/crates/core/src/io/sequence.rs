//! Materializes a synthetic sequence to disk in TUM layout, with a
//! `scene.json` that lets readers rebuild the analytic scene.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::eval::Trajectory;
use crate::exec::Exec;
use crate::geometry::{Intrinsics, Pose};
use crate::image::{save_depth_png, save_rgb_png};
use crate::io::synthetic::{desk_intrinsics, render_synthetic_with, SceneSpec, SyntheticScene, TrajectorySpec};
use crate::io::trajectory::write_trajectory;
use crate::io::tum::CALIBRATION_FILE;

pub const SCENE_FILE: &str = "scene.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceSpec {
    pub scene: SceneSpec,
    pub trajectory: TrajectorySpec,
    pub frames: usize,
    pub fps: f64,
    pub intrinsics: Intrinsics,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            trajectory: TrajectorySpec::default(),
            frames: 100,
            fps: 30.0,
            intrinsics: desk_intrinsics(),
        }
    }
}

impl SequenceSpec {
    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    /// Ground-truth poses in the scene frame.
    pub fn poses(&self) -> Vec<Pose> {
        self.trajectory.poses(self.frames)
    }

    pub fn groundtruth(&self) -> Trajectory {
        Trajectory::new(
            self.poses()
                .into_iter()
                .enumerate()
                .map(|(i, p)| (self.timestamp(i), p))
                .collect(),
        )
        .expect("positive fps gives increasing timestamps")
    }

    pub fn build_scene(&self) -> SyntheticScene {
        SyntheticScene::new(self.scene.clone())
    }
}

pub fn read_sequence_spec(path: &Path) -> Result<SequenceSpec, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::format(path, e.to_string()))
}

/// Writes `rgb/`, `depth/` (ground-truth depth), the three index files, the
/// calibration line and `scene.json`.
pub fn write_sequence(spec: &SequenceSpec, dir: &Path, exec: Exec) -> Result<(), IoError> {
    if spec.fps <= 0.0 || !spec.fps.is_finite() {
        return Err(IoError::format(dir, "fps must be positive"));
    }
    for sub in ["rgb", "depth"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| IoError::io(&p, e))?;
    }
    let scene = spec.build_scene();
    let k = spec.intrinsics;
    let mut rgb_txt = String::from("# color images\n# timestamp filename\n");
    let mut depth_txt = String::from("# depth maps\n# timestamp filename\n");
    for (i, pose) in spec.poses().iter().enumerate() {
        let (rgb, depth) = render_synthetic_with(&scene, pose, &k, exec);
        let t = spec.timestamp(i);
        let name = format!("{i:06}.png");
        save_rgb_png(&rgb, &dir.join("rgb").join(&name))?;
        save_depth_png(&depth, &dir.join("depth").join(&name))?;
        writeln!(rgb_txt, "{t:.6} rgb/{name}").expect("string write");
        writeln!(depth_txt, "{t:.6} depth/{name}").expect("string write");
    }
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| IoError::io(&p, e))
    };
    write("rgb.txt", rgb_txt)?;
    write("depth.txt", depth_txt)?;
    write(
        CALIBRATION_FILE,
        format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height),
    )?;
    write(SCENE_FILE, serde_json::to_string_pretty(spec).expect("serializable spec"))?;
    write_trajectory(&spec.groundtruth(), &dir.join("groundtruth.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::tum::load_tum;

    #[test]
    fn roundtrip_through_tum_loader() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SequenceSpec {
            frames: 4,
            ..Default::default()
        };
        write_sequence(&spec, dir.path(), Exec::default()).unwrap();
        let seq = load_tum(dir.path()).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq.intrinsics, spec.intrinsics);
        assert_eq!(read_sequence_spec(&dir.path().join(SCENE_FILE)).unwrap(), spec);
        let gt = seq.groundtruth_per_frame();
        let poses = spec.poses();
        for (g, p) in gt.iter().zip(&poses) {
            let g = g.unwrap();
            assert!(g.distance_to(p) < 1e-8 && g.angle_to(p) < 1e-8);
        }
        let scene = spec.build_scene();
        let (_, depth) = crate::io::synthetic::render_synthetic(&scene, &poses[2], &spec.intrinsics);
        let loaded = seq.load_depth(2).unwrap().unwrap();
        let err = crate::eval::depth_l1(&depth, &loaded).unwrap();
        assert!(err <= 0.5 / 5000.0 + 1e-12, "{err}");
    }
}
