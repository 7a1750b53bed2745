use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{UnitQuaternion, Vector3};

use splattrack::dba::{solve, DbaEdge, DbaProblem, DbaSettings, EdgeDirection};
use splattrack::exec::Exec;
use splattrack::gaussian_map::{init_from_depth, GaussianMap, MapSettings};
use splattrack::geometry::{correspondence_field, Intrinsics, Pose, Tangent};
use splattrack::image::{DepthMap, RgbImage};
use splattrack::io::synthetic::{desk_intrinsics, render_synthetic_with, SceneSpec, SyntheticScene};
use splattrack::renderer::{render_with, render_with_gradients_exec, LossSpec};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

struct Fixture {
    scene: SyntheticScene,
    k: Intrinsics,
    camera: Pose,
    rgb: RgbImage,
    depth: DepthMap,
    map: GaussianMap,
}

fn fixture() -> Fixture {
    let scene = SyntheticScene::new(SceneSpec::default());
    let k = desk_intrinsics();
    let camera = Pose::look_at(Vector3::new(0.0, 0.0, -0.5), Vector3::new(0.0, 0.0, 2.5), -Vector3::y());
    let (rgb, depth) = render_synthetic_with(&scene, &camera, &k, Exec::default());
    let settings = MapSettings {
        stride: 2,
        init_scale: 2.0,
        ..MapSettings::default()
    };
    let mut map = GaussianMap::new();
    map.extend(init_from_depth(&rgb, &depth, &camera, &k, None, &settings), 0);
    Fixture {
        scene,
        k,
        camera,
        rgb,
        depth,
        map,
    }
}

fn bench_render(c: &mut Criterion) {
    let f = fixture();
    let mut group = c.benchmark_group("render");
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| render_with(black_box(&f.map), &f.camera, &f.k, exec))
        });
    }
    group.finish();
}

fn bench_gradients(c: &mut Criterion) {
    let f = fixture();
    let spec = LossSpec {
        target_color: &f.rgb,
        target_depth: &f.depth,
        color_weight: 1.0,
        depth_weight: 10.0,
        silhouette_mask: None,
    };
    let camera = f.camera.retract(&Tangent::new(Vector3::new(0.0, 0.01, 0.0), Vector3::new(0.01, 0.0, 0.0)));
    let mut group = c.benchmark_group("render_with_gradients");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| render_with_gradients_exec(black_box(&f.map), &camera, &f.k, &spec, exec))
        });
    }
    group.finish();
}

fn bench_dba(c: &mut Criterion) {
    let f = fixture();
    let kc = f.k.coarse(4);
    let depth = f.depth.downsample(4);
    let edges: Vec<DbaEdge> = (0..6)
        .map(|i| {
            let neighbor = f.camera.retract(&Tangent::new(
                Vector3::new(0.0, 0.005 * i as f64, 0.0),
                Vector3::new(0.01 * i as f64, 0.0, 0.0),
            ));
            let target = correspondence_field(&depth, &neighbor, &f.camera, &kc).expect("matching dims");
            let weights = target.valid.iter().map(|&v| if v { [1.0; 2] } else { [0.0; 2] }).collect();
            DbaEdge {
                neighbor_pose: neighbor,
                direction: EdgeDirection::NeighborToTarget,
                depth: depth.clone(),
                target,
                weights,
            }
        })
        .collect();
    let initial = Pose::new(
        UnitQuaternion::from_euler_angles(0.01, -0.02, 0.01) * f.camera.rotation(),
        f.camera.translation() + Vector3::new(0.02, -0.01, 0.03),
    );
    let mut group = c.benchmark_group("dba_solve");
    for (name, exec) in POLICIES {
        let problem = DbaProblem {
            edges: edges.clone(),
            initial,
            intrinsics: kc,
            settings: DbaSettings::default(),
            exec,
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &problem, |b, p| b.iter(|| solve(black_box(p))));
    }
    group.finish();
}

fn bench_synthetic(c: &mut Criterion) {
    let f = fixture();
    let mut group = c.benchmark_group("synthetic_render");
    group.sample_size(20);
    for (name, exec) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| render_synthetic_with(black_box(&f.scene), &f.camera, &f.k, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_render, bench_gradients, bench_dba, bench_synthetic);
criterion_main!(benches);
