//! Distance kernels, neighbour queries, farthest point sampling and normalization.
//!
//! Every ordering in this module breaks ties by the lower point index so that
//! results are identical across platforms.

use std::cmp::Ordering;

use crate::error::{param_err, Error, Result};
use crate::point::{Point3, PointCloud};
use crate::spatial_grid::SpatialGrid;

/// Clouds larger than this use the uniform-grid backend for neighbour queries.
pub const BRUTE_FORCE_LIMIT: usize = 4096;

pub fn euclidean_distance(p: Point3, q: Point3) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let dz = p.z - q.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// One neighbour of a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl Neighbor {
    /// Ascending distance, lower index first on ties.
    pub fn order(a: &Neighbor, b: &Neighbor) -> Ordering {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.index.cmp(&b.index))
    }
}

/// The neighbourhood of one cloud point, excluding the point itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
    pub neighbor_distances: Vec<f64>,
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 || k > available {
        return param_err(format!("k = {k} outside 1..={available}"));
    }
    Ok(())
}

fn brute_knn(points: &[Point3], query: Point3, k: usize, skip: Option<usize>) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(index, p)| Neighbor { index, distance: euclidean_distance(*p, query) })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, Neighbor::order);
        all.truncate(k);
    }
    all.sort_by(Neighbor::order);
    all
}

/// The `k` points of `cloud` closest to `query`, ascending by distance.
pub fn knn(cloud: &PointCloud, query: Point3, k: usize) -> Result<Vec<Neighbor>> {
    check_k(k, cloud.len())?;
    if cloud.len() > BRUTE_FORCE_LIMIT {
        let grid = SpatialGrid::build(cloud.points());
        return Ok(grid.knn(cloud.points(), query, k, None));
    }
    Ok(brute_knn(cloud.points(), query, k, None))
}

/// Reusable neighbour search over one cloud; picks the backend by cloud size.
pub struct NeighborSearch<'a> {
    points: &'a [Point3],
    grid: Option<SpatialGrid>,
}

impl<'a> NeighborSearch<'a> {
    pub fn new(cloud: &'a PointCloud) -> Self {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &'a [Point3]) -> Self {
        let grid = (points.len() > BRUTE_FORCE_LIMIT).then(|| SpatialGrid::build(points));
        Self { points, grid }
    }

    /// Forces the brute-force backend regardless of size.
    pub fn brute_force(points: &'a [Point3]) -> Self {
        Self { points, grid: None }
    }

    /// Forces the grid backend regardless of size.
    pub fn gridded(points: &'a [Point3]) -> Self {
        Self { points, grid: Some(SpatialGrid::build(points)) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn knn(&self, query: Point3, k: usize) -> Result<Vec<Neighbor>> {
        check_k(k, self.points.len())?;
        Ok(self.knn_unchecked(query, k, None))
    }

    fn knn_unchecked(&self, query: Point3, k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        match &self.grid {
            Some(g) => g.knn(self.points, query, k, skip),
            None => brute_knn(self.points, query, k, skip),
        }
    }

    /// Nearest point to `query`.
    pub fn nearest(&self, query: Point3) -> Result<Neighbor> {
        if self.points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(self.knn_unchecked(query, 1, None)[0])
    }

    /// The `k` nearest other points of cloud point `center`.
    pub fn knn_of(&self, center: usize, k: usize) -> Result<NeighborIndex> {
        if center >= self.points.len() {
            return param_err(format!("center index {center} out of range"));
        }
        check_k(k, self.points.len() - 1)?;
        let found = self.knn_unchecked(self.points[center], k, Some(center));
        Ok(NeighborIndex {
            center_index: center,
            neighbor_indices: found.iter().map(|n| n.index).collect(),
            neighbor_distances: found.iter().map(|n| n.distance).collect(),
        })
    }

    /// Indices `j != center` with distance at most `r`, ascending by index.
    pub fn within_radius(&self, center: usize, r: f64) -> Result<Vec<usize>> {
        if center >= self.points.len() {
            return param_err(format!("center index {center} out of range"));
        }
        if !(r > 0.0) || !r.is_finite() {
            return param_err(format!("radius must be positive and finite, got {r}"));
        }
        let c = self.points[center];
        let mut out = match &self.grid {
            Some(g) => g.within(self.points, c, r),
            None => (0..self.points.len())
                .filter(|&j| euclidean_distance(self.points[j], c) <= r)
                .collect(),
        };
        out.retain(|&j| j != center);
        out.sort_unstable();
        Ok(out)
    }
}

/// kNN graph: the `k` nearest other points of every cloud point.
pub fn knn_graph(cloud: &PointCloud, k: usize) -> Result<Vec<NeighborIndex>> {
    let search = NeighborSearch::new(cloud);
    (0..cloud.len()).map(|i| search.knn_of(i, k)).collect()
}

/// All indices `j != center_index` within distance `r` of the center, ascending.
pub fn radius_neighbors(cloud: &PointCloud, center_index: usize, r: f64) -> Result<Vec<usize>> {
    NeighborSearch::new(cloud).within_radius(center_index, r)
}

/// Greedy farthest point sampling.
///
/// Starts at `seed_index`; every following pick maximizes the distance to the
/// already-picked set, with ties going to the lower index.
pub fn farthest_point_sample(cloud: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    farthest_point_sample_points(cloud.points(), m, seed_index)
}

pub fn farthest_point_sample_points(points: &[Point3], m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return param_err(format!("sample size {m} outside 1..={n}"));
    }
    if seed_index >= n {
        return param_err(format!("seed index {seed_index} out of range for {n} points"));
    }
    let mut picked = Vec::with_capacity(m);
    let mut min_dist = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = seed_index;
    loop {
        picked.push(current);
        taken[current] = true;
        if picked.len() == m {
            break;
        }
        let c = points[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for j in 0..n {
            let d = euclidean_distance(points[j], c);
            if d < min_dist[j] {
                min_dist[j] = d;
            }
            if !taken[j] && min_dist[j] > best_d {
                best_d = min_dist[j];
                best = j;
            }
        }
        current = best;
    }
    Ok(picked)
}

/// Result of [`normalize_unit_cube`]; `original = normalized * scale + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub cloud: PointCloud,
    pub scale: f64,
    pub offset: Point3,
}

impl Normalized {
    pub fn forward(&self, p: Point3) -> Point3 {
        (p - self.offset) * (1.0 / self.scale)
    }

    pub fn inverse(&self, p: Point3) -> Point3 {
        p * self.scale + self.offset
    }

    /// Applies the same normalizing transform to another cloud.
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(cloud.iter().map(|p| self.forward(*p)).collect())
            .expect("affine image of a finite cloud is finite")
    }
}

/// Centers the bounding box at the origin and scales the largest absolute
/// coordinate to 1. A cloud with zero extent maps to the origin with scale 1.
pub fn normalize_unit_cube(cloud: &PointCloud) -> Result<Normalized> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud {
        for (axis, v) in p.to_array().into_iter().enumerate() {
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
        }
    }
    let offset = Point3::new(
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    );
    let mut scale = 0.0f64;
    for p in cloud {
        let d = *p - offset;
        scale = scale.max(d.x.abs()).max(d.y.abs()).max(d.z.abs());
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    let inv = 1.0 / scale;
    let points = cloud.iter().map(|p| (*p - offset) * inv).collect();
    Ok(Normalized { cloud: PointCloud::new(points)?, scale, offset })
}

/// Median over points of the distance to the nearest other point.
pub fn median_nn_spacing(cloud: &PointCloud) -> Result<f64> {
    if cloud.len() < 2 {
        return param_err("spacing needs at least two points");
    }
    let search = NeighborSearch::new(cloud);
    let mut d: Vec<f64> = (0..cloud.len())
        .map(|i| search.knn_of(i, 1).map(|n| n.neighbor_distances[0]))
        .collect::<Result<_>>()?;
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Ok(if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) })
}

/// One-sided Hausdorff distance: the farthest any point of `from` is from `to`.
pub fn directed_hausdorff(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let search = NeighborSearch::new(to);
    let mut worst = 0.0f64;
    for p in from {
        worst = worst.max(search.nearest(*p)?.distance);
    }
    Ok(worst)
}
