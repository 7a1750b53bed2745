use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use splattrack::error::IoError;
use splattrack::eval::{self, MetricReport};
use splattrack::image::{load_depth_png, load_rgb_png, save_depth_png, save_rgb_png};
use splattrack::io::map_file::{load_map, save_map};
use splattrack::io::ply::{write_ply, PointCloud};
use splattrack::io::sequence::write_sequence;
use splattrack::io::trajectory::{parse_tum_line, read_trajectory, write_trajectory};
use splattrack::pipeline::{render_quality, run_with, FrameTiming, InputSource, PipelineConfig, RunReport};
use splattrack::renderer::render_with;

use crate::input::{open_input, resolve_config, seed_spec, sequence_spec};
use crate::{CliError, EvalArgs, Format, Metric, RenderArgs, RunArgs, SweepArgs, SweepParam, SynthArgs};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e).into())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| IoError::io(path, e).into())
}

pub fn format_timings(timings: &[FrameTiming]) -> String {
    let mut s = String::from("frame,track_s,map_s\n");
    for (i, t) in timings.iter().enumerate() {
        writeln!(s, "{i},{:.6},{:.6}", t.track_s, t.map_s).expect("string write");
    }
    s
}

fn summary(report: &RunReport, input: &InputSource) -> Result<MetricReport, CliError> {
    let mut m = match &input.groundtruth {
        Some(gt) if report.trajectory.len() >= 3 => MetricReport::trajectory(&report.trajectory, gt, false)?,
        _ => MetricReport::default(),
    };
    m.insert("frames", report.trajectory.len() as f64);
    m.insert("diverged_frames", report.diverged_frames().len() as f64);
    m.insert("map_gaussians", report.map.len() as f64);
    m.insert("mean_track_s", report.mean_track_s());
    m.insert("mean_map_s", report.mean_map_s());
    Ok(m)
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(&args.pipeline)?;
    let input = open_input(&args.pipeline, &cfg)?;
    create_dir(&args.out)?;
    let clouds_dir = args.out.join("clouds");
    if args.clouds {
        create_dir(&clouds_dir)?;
    }
    let graphs = args.dump_graph.then(|| args.out.join("graphs"));
    let mut cloud_error = None;
    let report = run_with(&cfg, &input, false, graphs.as_deref(), |i, out| {
        if args.clouds && cloud_error.is_none() {
            if let Err(e) = write_ply(&out.cloud, &clouds_dir.join(format!("{i:06}.ply"))) {
                cloud_error = Some(e);
            }
        }
    })?;
    if let Some(e) = cloud_error {
        return Err(e.into());
    }
    write_trajectory(&report.trajectory, &args.out.join("trajectory.txt"))?;
    write_file(&args.out.join("timings.csv"), &format_timings(&report.timings))?;
    write_ply(&PointCloud::from_map(&report.map), &args.out.join("map.ply"))?;
    save_map(&report.map, &input.intrinsics, &args.out.join("map.gmap"))?;
    write_file(&args.out.join("config.toml"), &cfg.to_toml())?;
    let metrics = summary(&report, &input)?;
    write_file(&args.out.join("metrics.txt"), &metrics.to_text())?;
    print!("{}", metrics.to_text());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let mut spec = sequence_spec(&args.spec)?;
    if let Some(n) = args.frames {
        spec.frames = n;
    }
    if let Some(s) = args.seed {
        seed_spec(&mut spec, s);
    }
    create_dir(&args.out)?;
    write_sequence(&spec, &args.out, splattrack::exec::Exec::default())?;
    println!("frames {}", spec.frames);
    Ok(())
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(IoError::Missing(path.to_path_buf()).into())
    }
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    require(&args.est)?;
    require(&args.gt)?;
    let mut report = MetricReport::default();
    let mut metrics = args.metric.clone();
    metrics.sort_by_key(|m| *m as u8);
    metrics.dedup();
    for m in metrics {
        match m {
            Metric::Ate => {
                let est = read_trajectory(&args.est)?;
                let gt = read_trajectory(&args.gt)?;
                match MetricReport::trajectory(&est, &gt, args.sim3) {
                    Ok(r) => r.iter().for_each(|(k, v)| report.insert(k, v)),
                    Err(e) => {
                        let pairs = eval::associate(&est, &gt, eval::ASSOCIATION_TOLERANCE).len();
                        return Err(CliError::Numeric(format!("{e} (associated pairs {pairs})")));
                    }
                }
            }
            Metric::Psnr | Metric::Ssim | Metric::MsSsim => {
                let a = load_rgb_png(&args.est)?;
                let b = load_rgb_png(&args.gt)?;
                let (name, v) = match m {
                    Metric::Psnr => ("psnr_db", eval::psnr(&a, &b)?),
                    Metric::Ssim => ("ssim", eval::ssim(&a, &b)?),
                    _ => ("ms_ssim", eval::ms_ssim(&a, &b)?),
                };
                report.insert(name, v);
            }
            Metric::Depthl1 => {
                let a = load_depth_png(&args.est)?;
                let b = load_depth_png(&args.gt)?;
                report.insert("depth_l1_m", eval::depth_l1(&a, &b)?);
            }
        }
    }
    match args.format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", report.to_json()),
    }
    Ok(())
}

fn sidecar(map: &Path) -> PathBuf {
    if map.extension().is_some_and(|e| e == "ply") {
        map.with_extension("gmap")
    } else {
        map.to_path_buf()
    }
}

pub fn render(args: RenderArgs) -> Result<(), CliError> {
    let (_, pose) = parse_tum_line(&args.pose)
        .ok_or_else(|| CliError::Usage(format!("cannot parse pose line {:?}", args.pose)))?;
    let (map, k) = load_map(&sidecar(&args.map))?;
    let out = render_with(&map, &pose, &k, splattrack::exec::Exec::default());
    save_rgb_png(&out.color, &args.out)?;
    if let Some(p) = &args.depth_out {
        save_depth_png(&out.depth_map(0.5), p)?;
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let base = resolve_config(&args.pipeline)?;
    let input = open_input(&args.pipeline, &base)?;
    let Some(gt) = &input.groundtruth else {
        return Err(CliError::Usage("sweep needs an input with ground truth".into()));
    };
    let mut csv = String::from("value,ate_rmse_cm,psnr,ssim\n");
    for &v in &args.values {
        let cfg = with_param(&base, args.param, v)?;
        let report = run_with(&cfg, &input, false, None, |_, _| {})?;
        let ate = eval::ate_rmse(&report.trajectory, gt, false)?;
        let (psnr, ssim) = render_quality(&report, &input, 5, cfg.exec)?;
        writeln!(csv, "{v},{:.6},{psnr:.6},{ssim:.6}", ate.rmse_cm).expect("string write");
    }
    match &args.out {
        Some(p) => write_file(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn with_param(base: &PipelineConfig, param: SweepParam, v: f64) -> Result<PipelineConfig, CliError> {
    let mut cfg = *base;
    let s = &mut cfg.tracking.sampling;
    match param {
        SweepParam::N => {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(CliError::Usage(format!("N must be a positive integer, got {v}")));
            }
            s.nodes = v as usize;
        }
        SweepParam::Alpha => s.alpha = v,
        SweepParam::Theta => s.theta_deg = v,
    }
    cfg.validate()?;
    Ok(cfg)
}
