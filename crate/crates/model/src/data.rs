use serde::{Deserialize, Serialize};
use spacnet_core::geometry::farthest_point_sample;
use spacnet_core::interface::{localize, InterfaceConfig};
use spacnet_core::seed::{derive_seed, rng_from_seed};
use spacnet_core::synth::{cut_sphere, generate_shape, random_viewpoint, Difficulty, OcclusionSample, ShapeKind, ShapeSpec};
use spacnet_core::{Point3, PointCloud};

use crate::config::ModelConfig;
use crate::error::{input_err, Result};

/// Model-ready view of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSample {
    pub id: String,
    pub difficulty: Difficulty,
    pub partial: PointCloud,
    pub interface: PointCloud,
    pub gt_missing: PointCloud,
    /// `gt_missing` reduced by FPS to the coarse resolution.
    pub target_coarse: PointCloud,
    pub occlusion_point: Option<Point3>,
}

/// Downsamples `cloud` to `n` points by FPS (from index 0); errors when it is smaller.
pub fn fit_partial(cloud: &PointCloud, n: usize) -> Result<PointCloud> {
    if cloud.len() < n {
        return input_err(format!("partial scan has {} points, model expects {n}", cloud.len()));
    }
    if cloud.len() == n {
        return Ok(cloud.clone());
    }
    Ok(cloud.select(&farthest_point_sample(cloud, n, 0)?)?)
}

/// `interface = None` uses the sample's own interface; otherwise the interface
/// is localized on the (fitted) partial scan.
pub fn prepare_sample(
    sample: &OcclusionSample,
    cfg: &ModelConfig,
    interface: Option<&InterfaceConfig>,
    id: impl Into<String>,
) -> Result<PreparedSample> {
    let partial = fit_partial(&sample.partial, cfg.n_input)?;
    let interface = match interface {
        None => sample.interface_truth.clone(),
        Some(icfg) => {
            let icfg = InterfaceConfig { n_t: cfg.n_t, ..*icfg };
            localize(&partial, sample.occlusion_point, &icfg, true)?.points
        }
    };
    PreparedSample::from_parts(id, sample.difficulty, partial, interface, sample.missing.clone(), sample.occlusion_point, cfg)
}

impl PreparedSample {
    /// Checks sizes against `cfg` and derives the coarse target from `gt_missing`.
    pub fn from_parts(
        id: impl Into<String>,
        difficulty: Difficulty,
        partial: PointCloud,
        interface: PointCloud,
        gt_missing: PointCloud,
        occlusion_point: Option<Point3>,
        cfg: &ModelConfig,
    ) -> Result<PreparedSample> {
        if partial.len() != cfg.n_input {
            return input_err(format!("partial scan has {} points, model expects {}", partial.len(), cfg.n_input));
        }
        if interface.len() != cfg.n_t {
            return input_err(format!("interface has {} points, model expects {}", interface.len(), cfg.n_t));
        }
        if gt_missing.is_empty() {
            return input_err("sample has no missing part");
        }
        let m = cfg.n_t.min(gt_missing.len());
        let target_coarse = gt_missing.select(&farthest_point_sample(&gt_missing, m, 0)?)?;
        Ok(PreparedSample { id: id.into(), difficulty, partial, interface, gt_missing, target_coarse, occlusion_point })
    }
}

/// Sphere-cut samples sized so the partial scan has `n_input` points and the
/// missing part exactly `n_t * r` points.
pub fn overfit_dataset(cfg: &ModelConfig, shapes: usize, occlusions: usize, seed: u64) -> Result<Vec<PreparedSample>> {
    let names = ShapeKind::all_names();
    if shapes == 0 || shapes > names.len() || occlusions == 0 {
        return input_err(format!("need 1..={} shapes and at least one occlusion", names.len()));
    }
    let missing = cfg.missing_count();
    let total = cfg.n_input + missing;
    // the half-point offset makes ceil(fraction * total) land exactly on `missing`
    let fraction = (missing as f64 - 0.5) / total as f64;
    let mut out = Vec::with_capacity(shapes * occlusions);
    for (s, name) in names.iter().enumerate().take(shapes) {
        let shape_seed = derive_seed(seed, &[s as u64]);
        let kind = ShapeKind::default_named(name)?;
        let gt = generate_shape(&ShapeSpec::new(kind, total, shape_seed))?;
        for o in 0..occlusions {
            let mut rng = rng_from_seed(derive_seed(shape_seed, &[o as u64]));
            let point = random_viewpoint(&mut rng);
            let sample = cut_sphere(&gt, point, fraction, cfg.n_t)?.with_ids(s as u64, shape_seed);
            out.push(prepare_sample(&sample, cfg, None, format!("{name}-{o}"))?);
        }
    }
    Ok(out)
}
