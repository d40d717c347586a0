//! Synthetic train/test splits on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spacnet_core::interface::{localize, InterfaceMode};
use spacnet_core::seed::{derive_seed, rng_from_seed};
use spacnet_core::synth::{
    cut_sphere, cut_viewpoint, fixed_test_viewpoints, generate_shape, random_viewpoint, CutProtocol, Difficulty,
    OcclusionSample, ShapeSpec,
};
use spacnet_core::{Point3, PointCloud};
use spacnet_model::data::fit_partial;
use spacnet_model::PreparedSample;

use crate::error::{CliError, Result};
use crate::manifest::{mask_count, stream, ExperimentManifest};
use crate::points::{read_points, write_points};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    pub shape_index: usize,
    pub shape: String,
    pub difficulty: Difficulty,
    /// Nominal masked fraction.
    pub fraction: f64,
    pub occlusion_point: Point3,
    /// Paths relative to the dataset directory.
    pub partial: String,
    pub missing: String,
    pub interface: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub manifest: ExperimentManifest,
    pub shapes: Vec<String>,
    pub samples: Vec<SampleRecord>,
}

impl DatasetIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

fn cut(m: &ExperimentManifest, gt: &PointCloud, o: Point3, d: Difficulty, seed: u64) -> Result<OcclusionSample> {
    let ds = &m.dataset;
    let n_mask = mask_count(ds.gt_points, d.fraction());
    Ok(match ds.protocol {
        CutProtocol::Sphere => cut_sphere(gt, o, n_mask as f64 / ds.gt_points as f64, m.model.n_t)?,
        CutProtocol::Viewpoint => cut_viewpoint(gt, o, n_mask, m.model.n_input, seed, m.model.n_t)?,
    })
}

/// Generates every shape and sample of the manifest and writes them with an index.
pub fn synthesize(m: &ExperimentManifest) -> Result<DatasetIndex> {
    m.validate()?;
    let dir = &m.out_dir;
    let ext = m.format.extension();
    let mut shapes = Vec::new();
    let mut samples = Vec::new();
    for (i, kind) in m.dataset.shapes.iter().enumerate() {
        let shape_seed = derive_seed(m.seed, &[stream::SHAPE, i as u64]);
        let gt = generate_shape(&ShapeSpec::new(kind.clone(), m.dataset.gt_points, shape_seed))?;
        let shape_name = format!("{i:02}-{}", kind.name());
        let gt_rel = format!("shapes/{shape_name}.{ext}");
        write_points(&dir.join(&gt_rel), &gt, None, m.format)?;
        shapes.push(gt_rel.clone());

        let mut emit = |split: Split, id: String, o: Point3, d: Difficulty, seed: u64| -> Result<()> {
            let s = cut(m, &gt, o, d, seed)?;
            let folder = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            let rel = |part: &str| format!("{folder}/{id}.{part}.{ext}");
            write_points(&dir.join(rel("partial")), &s.partial, None, m.format)?;
            write_points(&dir.join(rel("missing")), &s.missing, None, m.format)?;
            write_points(&dir.join(rel("interface")), &s.interface_truth, None, m.format)?;
            samples.push(SampleRecord {
                partial: rel("partial"),
                missing: rel("missing"),
                interface: rel("interface"),
                id,
                split,
                shape_index: i,
                shape: kind.name().to_string(),
                difficulty: d,
                fraction: d.fraction(),
                occlusion_point: o,
                ground_truth: gt_rel.clone(),
            });
            Ok(())
        };
        for j in 0..m.dataset.train_per_shape {
            let seed = derive_seed(m.seed, &[stream::TRAIN_VIEW, i as u64, j as u64]);
            let o = random_viewpoint(&mut rng_from_seed(seed));
            let d = Difficulty::ALL[j % 3];
            emit(Split::Train, format!("{shape_name}-train-{j:03}"), o, d, seed)?;
        }
        for (v, o) in fixed_test_viewpoints().into_iter().enumerate() {
            for &d in &m.dataset.test_difficulties {
                let seed = derive_seed(m.seed, &[stream::TEST_CUT, i as u64, v as u64, d as u64]);
                emit(Split::Test, format!("{shape_name}-v{v}-{}", d.short()), o, d, seed)?;
            }
        }
    }
    let index = DatasetIndex { manifest: m.clone(), shapes, samples };
    let path = m.dataset_index_path();
    let json = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(index)
}

/// A test or train sample ready for the network, with its full ground truth.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub prepared: PreparedSample,
    pub ground_truth: PointCloud,
}

/// Reads one split. Occlusion mode uses the stored interface, edge mode detects it.
pub fn load_split(dir: &Path, index: &DatasetIndex, split: Split, m: &ExperimentManifest) -> Result<Vec<LoadedSample>> {
    let cfg = m.model_config();
    let icfg = m.interface;
    let path = |rel: &str| -> PathBuf { dir.join(rel) };
    let mut out = Vec::new();
    for r in index.split(split) {
        let partial = fit_partial(&read_points(&path(&r.partial))?, cfg.n_input)?;
        let interface = match icfg.mode {
            InterfaceMode::OcclusionPoint => read_points(&path(&r.interface))?,
            InterfaceMode::EdgeDetection => localize(&partial, None, &icfg, true)?.points,
        };
        let missing = read_points(&path(&r.missing))?;
        let prepared =
            PreparedSample::from_parts(r.id.clone(), r.difficulty, partial, interface, missing, Some(r.occlusion_point), &cfg)?;
        out.push(LoadedSample { prepared, ground_truth: read_points(&path(&r.ground_truth))? });
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("dataset has no {split:?} samples")));
    }
    Ok(out)
}
