//! Completion metrics: Chamfer distance (L1 and L2 forms), F-Score, Fidelity and
//! minimal matching distance (MMD).
//!
//! Conventions:
//! - CD-L1 = 1/2 (mean_a min ||a - b|| + mean_b min ||b - a||)
//! - CD-L2 = mean_a min ||a - b||^2 + mean_b min ||b - a||^2
//!
//! Reports store raw values together with a reporting multiplier (1000 by
//! default) that is applied only when printing tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::geometry::NeighborSearch;
use crate::point::PointCloud;
use crate::synth::Difficulty;

/// F-Score threshold after unit-cube normalization ("1%").
pub const FSCORE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_SCALE_FACTOR: f64 = 1000.0;

fn non_empty(c: &PointCloud) -> Result<()> {
    if c.is_empty() {
        Err(Error::EmptyCloud)
    } else {
        Ok(())
    }
}

/// For every point of `from`, the distance to its nearest point in `to`.
pub fn nearest_distances(from: &PointCloud, to: &PointCloud) -> Result<Vec<f64>> {
    non_empty(from)?;
    non_empty(to)?;
    let search = NeighborSearch::new(to);
    from.iter().map(|p| search.nearest(*p).map(|n| n.distance)).collect()
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ab = nearest_distances(a, b)?;
    let ba = nearest_distances(b, a)?;
    Ok(0.5 * (mean(ab.iter().copied(), ab.len()) + mean(ba.iter().copied(), ba.len())))
}

pub fn chamfer_l2(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ab = nearest_distances(a, b)?;
    let ba = nearest_distances(b, a)?;
    Ok(mean(ab.iter().map(|d| d * d), ab.len()) + mean(ba.iter().map(|d| d * d), ba.len()))
}

/// Harmonic mean of precision and recall at `threshold` (inclusive).
pub fn f_score(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return param_err(format!("threshold must be positive, got {threshold}"));
    }
    let pg = nearest_distances(pred, gt)?;
    let gp = nearest_distances(gt, pred)?;
    let precision = pg.iter().filter(|d| **d <= threshold).count() as f64 / pg.len() as f64;
    let recall = gp.iter().filter(|d| **d <= threshold).count() as f64 / gp.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean distance from each input point to its nearest output point.
pub fn fidelity(input_partial: &PointCloud, output: &PointCloud) -> Result<f64> {
    let d = nearest_distances(input_partial, output)?;
    Ok(mean(d.iter().copied(), d.len()))
}

/// Smallest CD-L2 from `pred` to any member of the reference library.
pub fn mmd(pred: &PointCloud, reference_library: &[PointCloud]) -> Result<f64> {
    if reference_library.is_empty() {
        return param_err("reference library is empty");
    }
    let mut best = f64::INFINITY;
    for reference in reference_library {
        best = best.min(chamfer_l2(pred, reference)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd_l1: Option<f64>,
    pub cd_l2: Option<f64>,
    pub fscore: Option<f64>,
    pub fidelity: Option<f64>,
    pub mmd: Option<f64>,
    pub scale_factor: f64,
}

impl Default for MetricReport {
    fn default() -> Self {
        Self { cd_l1: None, cd_l2: None, fscore: None, fidelity: None, mmd: None, scale_factor: DEFAULT_SCALE_FACTOR }
    }
}

impl MetricReport {
    /// All metrics of a completed cloud against its ground truth.
    ///
    /// F-Score is computed after normalizing `gt` to the unit cube and applying
    /// the same transform to `pred`.
    pub fn evaluate(
        pred: &PointCloud,
        gt: &PointCloud,
        input_partial: Option<&PointCloud>,
        library: Option<&[PointCloud]>,
    ) -> Result<MetricReport> {
        let norm = crate::geometry::normalize_unit_cube(gt)?;
        let pred_n = norm.apply(pred);
        Ok(MetricReport {
            cd_l1: Some(chamfer_l1(pred, gt)?),
            cd_l2: Some(chamfer_l2(pred, gt)?),
            fscore: Some(f_score(&pred_n, &norm.cloud, FSCORE_THRESHOLD)?),
            fidelity: input_partial.map(|p| fidelity(p, pred)).transpose()?,
            mmd: library.map(|lib| mmd(pred, lib)).transpose()?,
            scale_factor: DEFAULT_SCALE_FACTOR,
        })
    }

    fn entries(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("cd_l1", self.cd_l1),
            ("cd_l2", self.cd_l2),
            ("fscore", self.fscore),
            ("fidelity", self.fidelity),
            ("mmd", self.mmd),
        ]
    }

    /// Flat `key=value` lines; absent metrics are omitted.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        let _ = writeln!(out, "scale_factor={}", self.scale_factor);
        out
    }

    pub fn from_key_value(text: &str) -> Result<MetricReport> {
        let mut r = MetricReport::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("malformed record line '{line}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number in '{line}'")))?;
            match k.trim() {
                "cd_l1" => r.cd_l1 = Some(v),
                "cd_l2" => r.cd_l2 = Some(v),
                "fscore" => r.fscore = Some(v),
                "fidelity" => r.fidelity = Some(v),
                "mmd" => r.mmd = Some(v),
                "scale_factor" => r.scale_factor = v,
                other => return param_err(format!("unknown metric '{other}'")),
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Metrics of one evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub difficulty: Difficulty,
    pub report: MetricReport,
}

/// Dataset-level report with the CD-S / CD-M / CD-H / CD-Avg / F1 layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Mean CD-L2 per difficulty (raw, unscaled).
    pub cd_by_difficulty: BTreeMap<Difficulty, f64>,
    /// Mean of the per-difficulty CD-L2 means.
    pub cd_avg: f64,
    pub cd_l1_mean: f64,
    pub f1: f64,
    pub fidelity: Option<f64>,
    pub mmd: Option<f64>,
    pub scale_factor: f64,
    pub samples: Vec<SampleMetrics>,
}

/// Column headings of the aggregate table.
pub const TABLE_COLUMNS: [&str; 5] = ["CD-S", "CD-M", "CD-H", "CD-Avg", "F1"];

fn mean_of<'a>(it: impl Iterator<Item = Option<f64>> + 'a) -> Option<f64> {
    let vals: Vec<f64> = it.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl AggregateReport {
    pub fn from_samples(samples: Vec<SampleMetrics>) -> Result<AggregateReport> {
        if samples.is_empty() {
            return param_err("no samples to aggregate");
        }
        let mut cd_by_difficulty = BTreeMap::new();
        for d in Difficulty::ALL {
            if let Some(m) = mean_of(samples.iter().filter(|s| s.difficulty == d).map(|s| s.report.cd_l2)) {
                cd_by_difficulty.insert(d, m);
            }
        }
        let cd_avg = cd_by_difficulty.values().sum::<f64>() / cd_by_difficulty.len().max(1) as f64;
        Ok(AggregateReport {
            cd_avg,
            cd_l1_mean: mean_of(samples.iter().map(|s| s.report.cd_l1)).unwrap_or(0.0),
            f1: mean_of(samples.iter().map(|s| s.report.fscore)).unwrap_or(0.0),
            fidelity: mean_of(samples.iter().map(|s| s.report.fidelity)),
            mmd: mean_of(samples.iter().map(|s| s.report.mmd)),
            cd_by_difficulty,
            scale_factor: DEFAULT_SCALE_FACTOR,
            samples,
        })
    }

    /// Human-readable table; CD columns are multiplied by the scale factor.
    pub fn to_table(&self) -> String {
        let s = self.scale_factor;
        let cd = |d: Difficulty| {
            self.cd_by_difficulty
                .get(&d)
                .map_or_else(|| "-".to_string(), |v| format!("{:.4}", v * s))
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", TABLE_COLUMNS.map(|c| format!("{c:>10}")).join(" "));
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>10} {:>10} {:>10}",
            cd(Difficulty::Easy),
            cd(Difficulty::Medium),
            cd(Difficulty::Hard),
            format!("{:.4}", self.cd_avg * s),
            format!("{:.4}", self.f1)
        );
        let _ = writeln!(out, "CD-L1 x{s}: {:.4}", self.cd_l1_mean * s);
        if let Some(f) = self.fidelity {
            let _ = writeln!(out, "Fidelity: {f:.6}");
        }
        if let Some(m) = self.mmd {
            let _ = writeln!(out, "MMD x{s}: {:.4}", m * s);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
