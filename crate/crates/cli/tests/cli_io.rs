use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use spacnet_cli::commands::{self, InterfaceOptions, Predictor};
use spacnet_cli::dataset::Split;
use spacnet_cli::points::{parse_ply, ply_string, read_points, write_points, PointFormat, INTERFACE_COLOR};
use spacnet_cli::ExperimentManifest;
use spacnet_core::interface::InterfaceMode;
use spacnet_core::metrics::TABLE_COLUMNS;
use spacnet_core::synth::{cut_sphere, generate_shape, uniform_disk, ShapeKind, ShapeSpec};
use spacnet_core::{Point3, PointCloud};
use spacnet_model::checkpoint::save_model;
use spacnet_model::{ModelConfig, SpacNet};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spacnet"))
}

fn toy_manifest(dir: &Path, shapes: Vec<ShapeKind>) -> ExperimentManifest {
    let mut m = ExperimentManifest::desk();
    m.out_dir = dir.to_path_buf();
    m.model = ModelConfig::toy();
    m.interface.n_t = m.model.n_t;
    m.dataset.shapes = shapes;
    m.dataset.gt_points = 512;
    m.dataset.train_per_shape = 3;
    m.train.epochs = 2;
    m
}

fn ten_shapes() -> Vec<ShapeKind> {
    let mut shapes: Vec<ShapeKind> = ShapeKind::all_names().iter().map(|n| ShapeKind::default_named(n).unwrap()).collect();
    shapes.push(ShapeKind::Sphere { radius: 0.6 });
    shapes.push(ShapeKind::Box { half_extents: [0.5, 0.5, 0.5] });
    shapes.push(ShapeKind::Cylinder { radius: 0.8, height: 0.5 });
    shapes.push(ShapeKind::Torus { major_radius: 0.9, minor_radius: 0.1 });
    shapes
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_writes_eight_views_by_three_difficulties() {
    let tmp = tempfile::tempdir().unwrap();
    let m = toy_manifest(tmp.path(), ten_shapes());
    let index = commands::synth(&m).unwrap();
    let test: Vec<_> = index.split(Split::Test).collect();
    assert_eq!(test.len(), 240);
    assert_eq!(index.split(Split::Train).count(), 30);
    let mut fractions: Vec<f64> = test.iter().map(|s| s.fraction).collect();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    assert_eq!(fractions, vec![0.25, 0.5, 0.75]);
    for s in test.iter().take(6) {
        let partial = read_points(&tmp.path().join(&s.partial)).unwrap();
        let missing = read_points(&tmp.path().join(&s.missing)).unwrap();
        assert_eq!(partial.len(), m.model.n_input);
        assert_eq!(missing.len(), (s.fraction * 512.0) as usize);
    }
}

#[test]
fn synth_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let m = toy_manifest(tmp.path(), ten_shapes()[..3].to_vec());
    commands::synth(&m).unwrap();
    let first = snapshot(tmp.path());
    std::fs::remove_dir_all(tmp.path()).unwrap();
    commands::synth(&m).unwrap();
    assert_eq!(first, snapshot(tmp.path()));
    let other = ExperimentManifest { seed: 1, ..m.clone() };
    commands::synth(&other).unwrap();
    assert_ne!(first, snapshot(tmp.path()));
}

#[test]
fn sphere_protocol_dataset_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = toy_manifest(tmp.path(), ten_shapes()[..1].to_vec());
    m.dataset.protocol = spacnet_core::synth::CutProtocol::Sphere;
    commands::synth(&m).unwrap();
    let report = commands::eval(&m, Predictor::GroundTruth).unwrap();
    assert_eq!(report.samples.len(), 24);
}

#[test]
fn occlusion_interface_colors_n_t_points() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = generate_shape(&ShapeSpec::new(ShapeKind::default_named("torus").unwrap(), 1024, 3)).unwrap();
    let o = Point3::new(0.0, 0.0, 3.0);
    let s = cut_sphere(&gt, o, 0.5, 64).unwrap();
    let input = tmp.path().join("partial.xyz");
    write_points(&input, &s.partial, None, PointFormat::Xyz).unwrap();
    let out = tmp.path().join("labeled.ply");
    let status = bin()
        .args(["interface", input.to_str().unwrap(), "--occlusion", "0,0,3", "--n-t", "64", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success());
    let parsed = parse_ply(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let colors = parsed.colors.unwrap();
    let marked: Vec<Point3> =
        parsed.cloud.iter().zip(&colors).filter(|(_, c)| **c == INTERFACE_COLOR).map(|(p, _)| *p).collect();
    assert_eq!(marked.len(), 64);
    let truth = read_points_rounded(&s.interface_truth);
    let mut marked_sorted = marked.iter().map(|p| p.to_array().map(f64::to_bits)).collect::<Vec<_>>();
    marked_sorted.sort_unstable();
    assert_eq!(marked_sorted, truth);
}

fn read_points_rounded(c: &PointCloud) -> Vec<[u64; 3]> {
    let back = parse_ply(&ply_string(c, None)).unwrap().cloud;
    let mut v: Vec<[u64; 3]> = back.iter().map(|p| p.to_array().map(f64::to_bits)).collect();
    v.sort_unstable();
    v
}

#[test]
fn edge_mode_marks_the_disk_rim() {
    let tmp = tempfile::tempdir().unwrap();
    let disk = uniform_disk(1000, 1.0, 8, 5).unwrap();
    let input = tmp.path().join("disk.ply");
    write_points(&input, &disk, None, PointFormat::Ply).unwrap();
    let opts = InterfaceOptions { mode: InterfaceMode::EdgeDetection, occlusion: None, n_t: 64, radius: 0.15, delta: 0.5 };
    let (cloud, result) = commands::interface(&input, &opts).unwrap();
    let colors = commands::interface_colors(cloud.len(), &result);
    let rim: Vec<usize> = (0..cloud.len()).filter(|&i| cloud[i].norm() > 1.0 - 0.075).collect();
    let hit = rim.iter().filter(|&&i| colors[i] == INTERFACE_COLOR).count();
    assert!(hit as f64 >= 0.8 * rim.len() as f64, "{hit} of {}", rim.len());
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.ply");
    std::fs::write(&empty, "").unwrap();
    let out = bin().args(["interface", empty.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let bad = tmp.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 1 1\n2 two 2\n").unwrap();
    let out = bin().args(["interface", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.xyz:3:"));

    let missing = tmp.path().join("absent.ply");
    let out = bin().args(["interface", missing.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.ply"));

    let good = tmp.path().join("good.xyz");
    std::fs::write(&good, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    let out = bin().args(["interface", good.to_str().unwrap(), "--mode", "edges", "--delta", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let cfg = ModelConfig::toy();
    let (_, mut store) = SpacNet::init(&cfg).unwrap();
    store.get_mut("fold2.2.bias").unwrap().data_mut()[0] = f32::NAN;
    let ckpt = tmp.path().join("nan.ckpt");
    save_model(&ckpt, &cfg, &store).unwrap();
    let scan = generate_shape(&ShapeSpec::new(ShapeKind::Sphere { radius: 1.0 }, 64, 1)).unwrap();
    let scan_path = tmp.path().join("scan.ply");
    write_points(&scan_path, &scan, None, PointFormat::Ply).unwrap();
    let out = bin()
        .args(["complete", ckpt.to_str().unwrap(), scan_path.to_str().unwrap(), "--occlusion=0,0,3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ground_truth_eval_is_perfect_and_has_table_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let mut m = toy_manifest(tmp.path(), ten_shapes()[..2].to_vec());
    m.dataset.mmd_reference = true;
    commands::synth(&m).unwrap();
    let report = commands::eval(&m, Predictor::GroundTruth).unwrap();
    assert_eq!(report.cd_avg, 0.0);
    assert_eq!(report.f1, 1.0);
    assert_eq!(report.fidelity, Some(0.0));
    assert_eq!(report.mmd, Some(0.0));
    let header: Vec<String> = report.to_table().lines().next().unwrap().split_whitespace().map(String::from).collect();
    assert_eq!(header, TABLE_COLUMNS);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["samples"].as_array().unwrap().len(), 48);
}

#[test]
fn train_complete_eval_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let m = toy_manifest(&tmp.path().join("run"), ten_shapes()[..2].to_vec());
    let manifest = tmp.path().join("m.json");
    std::fs::write(&manifest, m.to_json()).unwrap();
    let mf = manifest.to_str().unwrap();
    for cmd in ["synth", "train"] {
        let out = bin().args([cmd, "--manifest", mf]).output().unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let ckpt = m.checkpoint_path();
    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(m.out_dir.join("train_log.json")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 2);

    let partial = m.out_dir.join("test/00-sphere-v0-M.partial.ply");
    let out_ply = tmp.path().join("done.ply");
    let out = bin()
        .args(["complete", ckpt.to_str().unwrap(), partial.to_str().unwrap(), "--mode", "edges", "--radius", "0.5"])
        .args(["--out", out_ply.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let done = read_points(&out_ply).unwrap();
    assert_eq!(done.len(), m.model.n_input + m.model.n_t * m.model.upsample_factor);
    assert_eq!(&done.points()[..m.model.n_input], read_points(&partial).unwrap().points());

    let out = bin().args(["eval", ckpt.to_str().unwrap(), "--manifest", mf, "--json"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["fidelity"], serde_json::json!(0.0));
    assert!(json["cd_avg"].as_f64().unwrap() > 0.0);
}

#[test]
fn manifest_rejects_unknown_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.json");
    let mut v: serde_json::Value = serde_json::from_str(&ExperimentManifest::desk().to_json()).unwrap();
    v["surprise"] = serde_json::json!(1);
    std::fs::write(&path, v.to_string()).unwrap();
    let out = bin().args(["synth", "--manifest", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let m = toy_manifest(tmp.path(), vec![]);
    assert!(m.validate().is_err());
}

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3f64..1e3, -1e-6f64..1e-6, Just(0.0), Just(-0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ply_round_trip_keeps_nine_digits(pts in prop::collection::vec((coord(), coord(), coord()), 1..40), rgb in any::<bool>()) {
        let cloud = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap();
        let colors: Vec<[u8; 3]> = (0..cloud.len()).map(|i| [i as u8, 255 - i as u8, 7]).collect();
        let text = ply_string(&cloud, rgb.then_some(colors.as_slice()));
        let back = parse_ply(&text).unwrap();
        for (a, b) in cloud.iter().zip(back.cloud.iter()) {
            for (u, v) in a.to_array().iter().zip(b.to_array()) {
                let rounded: f64 = format!("{u:.8e}").parse().unwrap();
                prop_assert_eq!(rounded, v);
            }
        }
        prop_assert_eq!(ply_string(&back.cloud, back.colors.as_deref()), text);
    }
}
