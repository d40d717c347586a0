//! Missing-aware interface localization.
//!
//! With a known occlusion point the interface is simply the `n_t` partial points
//! nearest to it. Without one, interface points are found by edge detection: a
//! point is an edge when its neighbourhood leaves a wide empty angular sector in
//! every coordinate-plane projection.
//!
//! Edge test for a point `p` with neighbours `B` inside radius `r`:
//!
//! 1. `|B| < min_neighbors` marks `p` directly (sparse frontier).
//! 2. For each plane in {xy, yz, xz}, the edge vectors `q - p` are projected and
//!    sorted by angle. Zero-length projections are skipped; a plane with no
//!    remaining direction does not vote.
//! 3. The plane votes "edge" when its largest angular gap `g` reaches `acos(delta)`
//!    (`cos(g) <= delta` for gaps up to pi; wider gaps always vote "edge").
//! 4. `p` is marked when every voting plane votes "edge".
//!
//! Requiring all planes matters for surfaces: an interior point is fully
//! surrounded in the plane closest to its tangent plane, while in the other planes
//! its neighbourhood collapses towards a line and always shows large gaps. A
//! pairwise-angle reading of the threshold was rejected because it marks every
//! interior point of a curved surface.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::geometry::{farthest_point_sample, knn, NeighborSearch};
use crate::point::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceMode {
    OcclusionPoint,
    EdgeDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Xy,
    Yz,
    Xz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Yz, Plane::Xz];

    pub fn project(self, p: Point3) -> (f64, f64) {
        match self {
            Plane::Xy => (p.x, p.y),
            Plane::Yz => (p.y, p.z),
            Plane::Xz => (p.x, p.z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceConfig {
    pub mode: InterfaceMode,
    pub n_t: usize,
    pub radius_r: f64,
    pub delta: f64,
    pub min_neighbors: usize,
}

impl Default for InterfaceConfig {
    fn default() -> Self {
        Self { mode: InterfaceMode::OcclusionPoint, n_t: 64, radius_r: 0.15, delta: 0.5, min_neighbors: 3 }
    }
}

impl InterfaceConfig {
    pub fn edges(radius_r: f64, delta: f64) -> Self {
        Self { mode: InterfaceMode::EdgeDetection, radius_r, delta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 {
            return param_err("n_t must be at least 1");
        }
        if !(self.radius_r > 0.0) || !self.radius_r.is_finite() {
            return param_err(format!("radius_r must be positive, got {}", self.radius_r));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return param_err(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceResult {
    pub indices: Vec<usize>,
    pub points: PointCloud,
    pub mode_used: InterfaceMode,
}

impl InterfaceResult {
    fn from_indices(partial: &PointCloud, indices: Vec<usize>, mode_used: InterfaceMode) -> Result<Self> {
        let points = partial.select(&indices)?;
        Ok(Self { indices, points, mode_used })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `n_t` partial points nearest the occlusion point, nearest first.
pub fn localize_by_occlusion(partial: &PointCloud, occlusion_point: Point3, n_t: usize) -> Result<InterfaceResult> {
    if n_t == 0 || n_t > partial.len() {
        return param_err(format!("n_t = {n_t} outside 1..={}", partial.len()));
    }
    let indices = knn(partial, occlusion_point, n_t)?.into_iter().map(|n| n.index).collect();
    InterfaceResult::from_indices(partial, indices, InterfaceMode::OcclusionPoint)
}

/// Cosine of the angle between the projections of `u` and `v` onto `plane`.
///
/// `None` when either projection has zero length.
pub fn projected_angle_cosine(u: Point3, v: Point3, plane: Plane) -> Option<f64> {
    let (ua, ub) = plane.project(u);
    let (va, vb) = plane.project(v);
    let nu = ua.hypot(ub);
    let nv = va.hypot(vb);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some(((ua * va + ub * vb) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Largest angular gap between consecutive projected edge directions, in radians.
///
/// `None` when every projection is degenerate.
pub fn largest_angular_gap(center: Point3, neighbors: &[Point3], plane: Plane) -> Option<f64> {
    let mut angles: Vec<f64> = neighbors
        .iter()
        .filter_map(|q| {
            let (a, b) = plane.project(*q - center);
            (a != 0.0 || b != 0.0).then(|| b.atan2(a))
        })
        .collect();
    if angles.is_empty() {
        return None;
    }
    angles.sort_by(f64::total_cmp);
    let wrap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    let inner = angles.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    Some(inner.max(wrap))
}

/// Edge decision for one point given its radius neighbourhood.
pub fn is_edge_point(center: Point3, neighbors: &[Point3], cfg: &InterfaceConfig) -> bool {
    if neighbors.len() < cfg.min_neighbors {
        return true;
    }
    // cos is not monotone past pi, so compare angles; gaps can reach 2*pi
    let min_gap = cfg.delta.acos();
    // planes without any non-degenerate direction do not vote
    !Plane::ALL.iter().any(|&plane| {
        largest_angular_gap(center, neighbors, plane).is_some_and(|gap| gap < min_gap)
    })
}

/// Edge-detection localization; returns every marked index in ascending order.
pub fn localize_by_edges(partial: &PointCloud, cfg: &InterfaceConfig) -> Result<InterfaceResult> {
    if cfg.mode != InterfaceMode::EdgeDetection {
        return param_err("localize_by_edges requires edge_detection mode");
    }
    cfg.validate()?;
    if partial.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let search = NeighborSearch::new(partial);
    let mut marked = Vec::new();
    let mut scratch = Vec::new();
    for i in 0..partial.len() {
        let nb = search.within_radius(i, cfg.radius_r)?;
        scratch.clear();
        scratch.extend(nb.iter().map(|&j| partial[j]));
        if is_edge_point(partial[i], &scratch, cfg) {
            marked.push(i);
        }
    }
    InterfaceResult::from_indices(partial, marked, InterfaceMode::EdgeDetection)
}

/// Brings a variable-size edge result to exactly `n_t` points.
///
/// Larger sets are farthest-point downsampled (starting from their first index);
/// smaller ones are padded by repeating edge points nearest to the set's first point.
pub fn fit_to_size(partial: &PointCloud, result: &InterfaceResult, n_t: usize) -> Result<InterfaceResult> {
    if n_t == 0 {
        return param_err("n_t must be at least 1");
    }
    let indices = if result.is_empty() {
        // no edges found: fall back to the whole scan
        let all = PointCloud::new(partial.points().to_vec())?;
        let picks = farthest_point_sample(&all, n_t.min(all.len()), 0)?;
        pad(&all, picks, n_t)?
    } else if result.len() >= n_t {
        let picks = farthest_point_sample(&result.points, n_t, 0)?;
        picks.into_iter().map(|i| result.indices[i]).collect()
    } else {
        let local = pad(&result.points, (0..result.len()).collect(), n_t)?;
        local.into_iter().map(|i| result.indices[i]).collect()
    };
    InterfaceResult::from_indices(partial, indices, result.mode_used)
}

fn pad(cloud: &PointCloud, mut picks: Vec<usize>, n_t: usize) -> Result<Vec<usize>> {
    if picks.len() >= n_t {
        picks.truncate(n_t);
        return Ok(picks);
    }
    let order: Vec<usize> = knn(cloud, cloud[picks[0]], cloud.len())?.into_iter().map(|n| n.index).collect();
    let mut k = 0;
    while picks.len() < n_t {
        picks.push(order[k % order.len()]);
        k += 1;
    }
    Ok(picks)
}

/// Interface localization under either mode.
///
/// Occlusion mode needs `occlusion_point`; edge mode output is fitted to `cfg.n_t`
/// points when `fixed_size` is set.
pub fn localize(
    partial: &PointCloud,
    occlusion_point: Option<Point3>,
    cfg: &InterfaceConfig,
    fixed_size: bool,
) -> Result<InterfaceResult> {
    match cfg.mode {
        InterfaceMode::OcclusionPoint => {
            let o = occlusion_point
                .ok_or_else(|| Error::InvalidParameter("occlusion mode needs an occlusion point".into()))?;
            localize_by_occlusion(partial, o, cfg.n_t)
        }
        InterfaceMode::EdgeDetection => {
            let raw = localize_by_edges(partial, cfg)?;
            if fixed_size {
                fit_to_size(partial, &raw, cfg.n_t)
            } else {
                Ok(raw)
            }
        }
    }
}
