use std::path::Path;

use splattrack::io::sequence::{read_sequence_spec, SequenceSpec};
use splattrack::io::synthetic::TrajectorySpec;
use splattrack::pipeline::{InputSource, PipelineConfig};

use crate::{CliError, PipelineArgs};

/// Resolves a `synth:` spec: a preset name or a JSON file.
pub fn sequence_spec(spec: &str) -> Result<SequenceSpec, CliError> {
    let base = SequenceSpec::default();
    let trajectory = match spec {
        "orbit" => TrajectorySpec::default(),
        "static" => TrajectorySpec::Static {
            eye: [0.0, 0.0, -0.5],
            look_at: [0.0, 0.0, 2.5],
        },
        "constant_velocity" => TrajectorySpec::ConstantVelocity {
            start: [-0.3, 0.0, -0.5],
            look_at: [0.0, 0.0, 2.5],
            velocity: [0.006, 0.0, 0.0],
            angular: [0.0, 0.002, 0.0],
        },
        "random_walk" => TrajectorySpec::RandomWalk {
            start: [0.0, 0.0, -0.5],
            look_at: [0.0, 0.0, 2.5],
            step: 0.02,
            seed: 1,
        },
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(CliError::Usage(format!(
                    "unknown synthetic spec {path:?} (expected orbit, static, constant_velocity, random_walk or a JSON file)"
                )));
            }
            return Ok(read_sequence_spec(p)?);
        }
    };
    Ok(SequenceSpec { trajectory, ..base })
}

/// Applies a seed to the scene and any seeded trajectory.
pub fn seed_spec(spec: &mut SequenceSpec, seed: u64) {
    spec.scene.seed = seed;
    if let TrajectorySpec::RandomWalk { seed: s, .. } = &mut spec.trajectory {
        *s = seed;
    }
}

/// Config file, then flags.
pub fn resolve_config(args: &PipelineArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) if !p.exists() => return Err(splattrack::error::IoError::Missing(p.clone()).into()),
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = args.tracker {
        cfg.tracker = t.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.nodes {
        cfg.tracking.sampling.nodes = n;
    }
    if let Some(a) = args.alpha {
        cfg.tracking.sampling.alpha = a;
    }
    if let Some(t) = args.theta {
        cfg.tracking.sampling.theta_deg = t;
    }
    if let Some(e) = args.exec {
        cfg.exec = match e {
            crate::ExecArg::Sequential => splattrack::exec::Exec::Sequential,
            crate::ExecArg::Parallel => splattrack::exec::Exec::Parallel,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn open_input(args: &PipelineArgs, cfg: &PipelineConfig) -> Result<InputSource, CliError> {
    let mut input = if let Some(dir) = args.input.strip_prefix("tum:") {
        let dir = Path::new(dir);
        if !dir.is_dir() {
            return Err(splattrack::error::IoError::Missing(dir.to_path_buf()).into());
        }
        InputSource::tum(dir, args.depth_dir.as_deref(), args.flow_dir.as_deref(), &cfg.noise, cfg.seed)?
    } else if let Some(spec) = args.input.strip_prefix("synth:") {
        let mut seq = sequence_spec(spec)?;
        if let Some(n) = args.frames {
            seq.frames = n;
        }
        InputSource::synthetic(&seq, &cfg.noise, cfg.seed, cfg.exec)
    } else {
        return Err(CliError::Usage(format!(
            "input must be tum:DIR or synth:SPEC, got {:?}",
            args.input
        )));
    };
    if let Some(n) = args.frames {
        input.truncate(n);
    }
    Ok(input)
}
