use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spacnet_core::interface::{localize, InterfaceConfig, InterfaceMode, InterfaceResult};
use spacnet_core::metrics::{AggregateReport, MetricReport, SampleMetrics};
use spacnet_core::{Point3, PointCloud};
use spacnet_model::checkpoint::{load_model, save_model};
use spacnet_model::data::fit_partial;
use spacnet_model::{train, SpacNet, TrainReport};

use crate::dataset::{load_split, synthesize, DatasetIndex, LoadedSample, Split};
use crate::error::{CliError, Result};
use crate::manifest::ExperimentManifest;
use crate::points::{read_points, write_points, PointFormat, Rgb, INTERFACE_COLOR, PARTIAL_COLOR, PREDICTION_COLOR};

/// Interface settings shared by `interface` and `complete`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceOptions {
    pub mode: InterfaceMode,
    pub occlusion: Option<Point3>,
    pub n_t: usize,
    pub radius: f64,
    pub delta: f64,
}

impl InterfaceOptions {
    fn config(&self) -> InterfaceConfig {
        InterfaceConfig { mode: self.mode, n_t: self.n_t, radius_r: self.radius, delta: self.delta, ..InterfaceConfig::default() }
    }
}

pub fn synth(m: &ExperimentManifest) -> Result<DatasetIndex> {
    synthesize(m)
}

/// Labels the interface of a scan. Edge mode reports every detected point.
pub fn interface(input: &Path, opts: &InterfaceOptions) -> Result<(PointCloud, InterfaceResult)> {
    let cloud = read_points(input)?;
    let cfg = opts.config();
    cfg.validate()?;
    let result = localize(&cloud, opts.occlusion, &cfg, false)?;
    Ok((cloud, result))
}

pub fn interface_colors(n: usize, result: &InterfaceResult) -> Vec<Rgb> {
    let mut colors = vec![PARTIAL_COLOR; n];
    for &i in &result.indices {
        colors[i] = INTERFACE_COLOR;
    }
    colors
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub report: TrainReport,
}

/// Trains on the manifest's train split and writes `model.ckpt` and `train_log.json`.
pub fn train_model(m: &ExperimentManifest, mut log: impl FnMut(&str)) -> Result<TrainOutcome> {
    m.validate()?;
    let index_path = m.dataset_index_path();
    let index = DatasetIndex::load(&index_path)?;
    let data: Vec<_> = load_split(&m.out_dir, &index, Split::Train, m)?.into_iter().map(|s| s.prepared).collect();
    let cfg = m.model_config();
    let (net, mut store) = SpacNet::init(&cfg)?;
    let report = train(&net, &mut store, &data, &m.train_config(), |s, _| {
        log(&format!(
            "epoch {:>4}  lr {:.3e}  loss {:.6}  cd_coarse {:.6}  cd_missing {:.6}",
            s.epoch, s.lr, s.loss, s.cd_coarse, s.cd_missing
        ));
        Ok(())
    })?;
    let checkpoint = m.checkpoint_path();
    save_model(&checkpoint, &cfg, &store).map_err(|e| with_path(e, &checkpoint))?;
    let log_path = m.out_dir.join("train_log.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&log_path, json).map_err(|e| CliError::io(&log_path, e))?;
    Ok(TrainOutcome { checkpoint, report })
}

fn with_path(e: spacnet_model::Error, path: &Path) -> CliError {
    match e {
        spacnet_model::Error::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub partial: PointCloud,
    pub interface: PointCloud,
    pub missing: PointCloud,
    pub complete: PointCloud,
}

impl Completion {
    /// Scan points blue, predicted points cyan.
    pub fn colors(&self) -> Vec<Rgb> {
        let mut c = vec![PARTIAL_COLOR; self.partial.len()];
        c.resize(self.complete.len(), PREDICTION_COLOR);
        c
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(SpacNet, spacnet_tensor::ParamStore<f32>)> {
    load_model(path).map_err(|e| with_path(e, path))
}

/// Completes one scan. The scan is farthest-point reduced to the model's input size.
pub fn complete(checkpoint: &Path, input: &Path, opts: &InterfaceOptions) -> Result<Completion> {
    let (net, store) = load_checkpoint(checkpoint)?;
    let cfg = net.config.clone();
    let partial = fit_partial(&read_points(input)?, cfg.n_input)?;
    let icfg = InterfaceOptions { n_t: cfg.n_t, ..*opts }.config();
    icfg.validate()?;
    let interface = localize(&partial, opts.occlusion, &icfg, true)?.points;
    let out = net.forward(&store, &partial, &interface)?;
    if !out.complete.iter().all(Point3::is_finite) {
        return Err(CliError::Numeric("prediction contains non-finite coordinates".into()));
    }
    Ok(Completion { partial, interface, missing: out.missing_pred, complete: out.complete })
}

pub fn write_completion(path: &Path, c: &Completion, format: PointFormat) -> Result<()> {
    write_points(path, &c.complete, Some(&c.colors()), format)
}

/// What `eval` scores against the test split.
pub enum Predictor<'a> {
    Model(&'a Path),
    /// The ground truth itself, as a sanity reference.
    GroundTruth,
}

/// Scores the test split in parallel and writes `report.json` to the output directory.
pub fn eval(m: &ExperimentManifest, predictor: Predictor<'_>) -> Result<AggregateReport> {
    let index = DatasetIndex::load(&m.dataset_index_path())?;
    let samples = load_split(&m.out_dir, &index, Split::Test, m)?;
    let library: Option<Vec<PointCloud>> = if m.dataset.mmd_reference {
        let shapes: Result<Vec<_>> = index.shapes.iter().map(|rel| read_points(&m.out_dir.join(rel))).collect();
        Some(shapes?)
    } else {
        None
    };
    let model = match predictor {
        Predictor::Model(path) => Some(load_checkpoint(path)?),
        Predictor::GroundTruth => None,
    };
    let score = |s: &LoadedSample| -> Result<SampleMetrics> {
        let p = &s.prepared;
        let pred = match &model {
            Some((net, store)) => net.forward(store, &p.partial, &p.interface)?.complete,
            None => s.ground_truth.clone(),
        };
        let report = MetricReport::evaluate(&pred, &s.ground_truth, Some(&p.partial), library.as_deref())?;
        Ok(SampleMetrics { sample_id: p.id.clone(), difficulty: p.difficulty, report })
    };
    let per_sample: Result<Vec<SampleMetrics>> = samples.par_iter().map(score).collect();
    let report = AggregateReport::from_samples(per_sample?)?;
    let path = m.out_dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(|e| CliError::io(&path, e))?;
    Ok(report)
}
