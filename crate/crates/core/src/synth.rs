//! Procedural ground-truth shapes and partial-scan synthesis.
//!
//! Two cutting protocols produce [`OcclusionSample`]s:
//!
//! - [`cut_sphere`]: removes the points nearest a known occlusion point, i.e. the
//!   part of the shape inside a sphere centered there.
//! - [`cut_viewpoint`]: removes the `n_mask` points *most distant* from a viewpoint
//!   and farthest-point downsamples the remainder to a fixed input size.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::geometry::{euclidean_distance, farthest_point_sample, Neighbor};
use crate::point::{Point3, PointCloud};
use crate::seed::rng_from_seed;

/// Distance of every test and train viewpoint from the origin.
pub const VIEWPOINT_DISTANCE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    /// Closed cylinder along z, centered at the origin.
    Cylinder { radius: f64, height: f64 },
    /// Torus around the z axis.
    Torus { major_radius: f64, minor_radius: f64 },
    /// Horizontal plate with a vertical plate standing on one end.
    LBracket { length: f64, height: f64, width: f64, thickness: f64 },
    /// Slab top on four square legs.
    Table { top_width: f64, top_depth: f64, top_thickness: f64, leg_height: f64, leg_thickness: f64 },
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere { .. } => "sphere",
            ShapeKind::Box { .. } => "box",
            ShapeKind::Cylinder { .. } => "cylinder",
            ShapeKind::Torus { .. } => "torus",
            ShapeKind::LBracket { .. } => "l_bracket",
            ShapeKind::Table { .. } => "table",
        }
    }

    /// A reasonable default instance of the named kind, sized to roughly fill [-1, 1]^3.
    pub fn default_named(name: &str) -> Result<ShapeKind> {
        Ok(match name {
            "sphere" => ShapeKind::Sphere { radius: 1.0 },
            "box" => ShapeKind::Box { half_extents: [0.9, 0.6, 0.4] },
            "cylinder" => ShapeKind::Cylinder { radius: 0.5, height: 1.6 },
            "torus" => ShapeKind::Torus { major_radius: 0.7, minor_radius: 0.25 },
            "l_bracket" => ShapeKind::LBracket { length: 1.6, height: 1.2, width: 0.8, thickness: 0.25 },
            "table" => ShapeKind::Table {
                top_width: 1.6,
                top_depth: 1.0,
                top_thickness: 0.12,
                leg_height: 0.8,
                leg_thickness: 0.12,
            },
            other => return param_err(format!("unknown shape kind '{other}'")),
        })
    }

    pub fn all_names() -> [&'static str; 6] {
        ["sphere", "box", "cylinder", "torus", "l_bracket", "table"]
    }

    fn parameters(&self) -> Vec<f64> {
        match self {
            ShapeKind::Sphere { radius } => vec![*radius],
            ShapeKind::Box { half_extents } => half_extents.to_vec(),
            ShapeKind::Cylinder { radius, height } => vec![*radius, *height],
            ShapeKind::Torus { major_radius, minor_radius } => vec![*major_radius, *minor_radius],
            ShapeKind::LBracket { length, height, width, thickness } => vec![*length, *height, *width, *thickness],
            ShapeKind::Table { top_width, top_depth, top_thickness, leg_height, leg_thickness } => {
                vec![*top_width, *top_depth, *top_thickness, *leg_height, *leg_thickness]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub kind: ShapeKind,
    pub sample_count: usize,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, sample_count: usize, seed: u64) -> Self {
        Self { kind, sample_count, seed }
    }

    pub fn from_json(text: &str) -> Result<ShapeSpec> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("shape spec: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 64 {
            return param_err(format!("sample_count {} below 64", self.sample_count));
        }
        if self.kind.parameters().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return param_err(format!("{} parameters must be positive", self.kind.name()));
        }
        match self.kind {
            ShapeKind::Torus { major_radius, minor_radius } if minor_radius >= major_radius => {
                param_err("torus minor radius must be below major radius")
            }
            ShapeKind::LBracket { length, height, thickness, .. } if thickness >= length || thickness >= height => {
                param_err("l_bracket thickness must be below length and height")
            }
            ShapeKind::Table { top_width, top_depth, leg_thickness, .. }
                if 2.0 * leg_thickness >= top_width || 2.0 * leg_thickness >= top_depth =>
            {
                param_err("table legs wider than the top")
            }
            _ => Ok(()),
        }
    }
}

/// Axis-aligned box given by center and half extents.
#[derive(Debug, Clone, Copy)]
struct Cuboid {
    center: [f64; 3],
    half: [f64; 3],
}

impl Cuboid {
    fn from_bounds(lo: [f64; 3], hi: [f64; 3]) -> Self {
        Cuboid {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])],
            half: [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1]), 0.5 * (hi[2] - lo[2])],
        }
    }

    fn face_areas(&self) -> [f64; 3] {
        let [a, b, c] = self.half;
        // area of one face normal to x, y, z
        [4.0 * b * c, 4.0 * a * c, 4.0 * a * b]
    }

    fn area(&self) -> f64 {
        2.0 * self.face_areas().iter().sum::<f64>()
    }

    /// Inside or on the boundary.
    fn contains_closed(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| (p[k] - self.center[k]).abs() <= self.half[k])
    }

    fn sample_surface(&self, rng: &mut impl Rng) -> [f64; 3] {
        let areas = self.face_areas();
        let total = areas.iter().sum::<f64>();
        let mut pick = rng.gen::<f64>() * total;
        let mut axis = 2;
        for (k, a) in areas.iter().enumerate() {
            if pick < *a {
                axis = k;
                break;
            }
            pick -= a;
        }
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = if k == axis {
                self.center[k] + sign * self.half[k]
            } else {
                self.center[k] + self.half[k] * (2.0 * rng.gen::<f64>() - 1.0)
            };
        }
        p
    }
}

/// Uniform samples on the boundary of a union of face-adjacent boxes.
fn sample_box_union(boxes: &[Cuboid], n: usize, rng: &mut impl Rng) -> Vec<Point3> {
    let areas: Vec<f64> = boxes.iter().map(Cuboid::area).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pick = rng.gen::<f64>() * total;
        let mut which = boxes.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                which = i;
                break;
            }
            pick -= a;
        }
        let p = boxes[which].sample_surface(rng);
        // faces shared with another box are internal
        let hidden = boxes
            .iter()
            .enumerate()
            .any(|(j, b)| j != which && b.contains_closed(p));
        if !hidden {
            out.push(Point3::from_array(p));
        }
    }
    out
}

/// Samples `spec.sample_count` points uniformly on the shape surface.
pub fn generate_shape(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.sample_count;
    let points = match spec.kind {
        ShapeKind::Sphere { radius } => (0..n)
            .map(|_| {
                let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
                let phi = 2.0 * PI * rng.gen::<f64>();
                let rho = (1.0 - z * z).max(0.0).sqrt();
                Point3::new(radius * rho * phi.cos(), radius * rho * phi.sin(), radius * z)
            })
            .collect(),
        ShapeKind::Box { half_extents } => {
            sample_box_union(&[Cuboid { center: [0.0; 3], half: half_extents }], n, &mut rng)
        }
        ShapeKind::Cylinder { radius, height } => {
            let lateral = 2.0 * PI * radius * height;
            let cap = PI * radius * radius;
            let half_h = 0.5 * height;
            (0..n)
                .map(|_| {
                    let pick = rng.gen::<f64>() * (lateral + 2.0 * cap);
                    let phi = 2.0 * PI * rng.gen::<f64>();
                    if pick < lateral {
                        let z = half_h * (2.0 * rng.gen::<f64>() - 1.0);
                        Point3::new(radius * phi.cos(), radius * phi.sin(), z)
                    } else {
                        let rho = radius * rng.gen::<f64>().sqrt();
                        let z = if pick < lateral + cap { half_h } else { -half_h };
                        Point3::new(rho * phi.cos(), rho * phi.sin(), z)
                    }
                })
                .collect()
        }
        ShapeKind::Torus { major_radius, minor_radius } => {
            let mut pts = Vec::with_capacity(n);
            while pts.len() < n {
                let theta = 2.0 * PI * rng.gen::<f64>();
                let accept = (major_radius + minor_radius * theta.cos()) / (major_radius + minor_radius);
                if rng.gen::<f64>() > accept {
                    continue;
                }
                let phi = 2.0 * PI * rng.gen::<f64>();
                let ring = major_radius + minor_radius * theta.cos();
                pts.push(Point3::new(ring * phi.cos(), ring * phi.sin(), minor_radius * theta.sin()));
            }
            pts
        }
        ShapeKind::LBracket { length, height, width, thickness } => {
            let (x0, z0, hw) = (-0.5 * length, -0.5 * height, 0.5 * width);
            let boxes = [
                Cuboid::from_bounds([x0, -hw, z0], [x0 + length, hw, z0 + thickness]),
                Cuboid::from_bounds([x0, -hw, z0 + thickness], [x0 + thickness, hw, z0 + height]),
            ];
            sample_box_union(&boxes, n, &mut rng)
        }
        ShapeKind::Table { top_width, top_depth, top_thickness, leg_height, leg_thickness } => {
            let z0 = -0.5 * (leg_height + top_thickness);
            let (hx, hy) = (0.5 * top_width, 0.5 * top_depth);
            let mut boxes = vec![Cuboid::from_bounds(
                [-hx, -hy, z0 + leg_height],
                [hx, hy, z0 + leg_height + top_thickness],
            )];
            for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                let cx = sx * (hx - 0.5 * leg_thickness);
                let cy = sy * (hy - 0.5 * leg_thickness);
                let h = 0.5 * leg_thickness;
                boxes.push(Cuboid::from_bounds([cx - h, cy - h, z0], [cx + h, cy + h, z0 + leg_height]));
            }
            sample_box_union(&boxes, n, &mut rng)
        }
    };
    PointCloud::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Nominal masked fraction of the ground truth.
    pub fn fraction(self) -> f64 {
        match self {
            Difficulty::Easy => 0.25,
            Difficulty::Medium => 0.5,
            Difficulty::Hard => 0.75,
        }
    }

    /// Nearest difficulty level for a masked fraction.
    pub fn from_fraction(f: f64) -> Difficulty {
        if f < 0.375 {
            Difficulty::Easy
        } else if f < 0.625 {
            Difficulty::Medium
        } else {
            Difficulty::Hard
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Difficulty::Easy => "S",
            Difficulty::Medium => "M",
            Difficulty::Hard => "H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutProtocol {
    Sphere,
    Viewpoint,
}

/// One training or evaluation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSample {
    pub shape_id: u64,
    pub seed: u64,
    pub protocol: CutProtocol,
    pub difficulty: Difficulty,
    pub ground_truth: PointCloud,
    pub partial: PointCloud,
    pub missing: PointCloud,
    pub interface_truth: PointCloud,
    /// Ground-truth indices of `partial`, in order.
    pub partial_source: Vec<usize>,
    /// Ground-truth indices of `missing`, ascending.
    pub missing_source: Vec<usize>,
    /// Ground-truth indices kept before any downsampling, ascending.
    pub retained_source: Vec<usize>,
    /// Indices into `partial` of `interface_truth`, in order.
    pub interface_source: Vec<usize>,
    pub occlusion_point: Option<Point3>,
    pub occlusion_radius: Option<f64>,
}

impl OcclusionSample {
    pub fn with_ids(mut self, shape_id: u64, seed: u64) -> Self {
        self.shape_id = shape_id;
        self.seed = seed;
        self
    }

    /// Fraction of ground-truth points that were masked.
    pub fn missing_fraction(&self) -> f64 {
        self.missing_source.len() as f64 / self.ground_truth.len() as f64
    }
}

fn ordered_by_distance(gt: &PointCloud, from: Point3) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = gt
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor { index, distance: euclidean_distance(*p, from) })
        .collect();
    all.sort_by(Neighbor::order);
    all
}

/// Partial points nearest (or farthest from) `anchor`, as indices into `partial`.
fn interface_indices(partial: &PointCloud, anchor: Point3, n_t: usize, farthest: bool) -> Vec<usize> {
    let mut order = ordered_by_distance(partial, anchor);
    if farthest {
        order.sort_by(|a, b| b.distance.total_cmp(&a.distance).then_with(|| a.index.cmp(&b.index)));
    }
    order.into_iter().take(n_t.min(partial.len())).map(|n| n.index).collect()
}

fn complement(n: usize, removed: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; n];
    for &i in removed {
        mask[i] = true;
    }
    (0..n).filter(|&i| !mask[i]).collect()
}

/// Sphere-cut protocol: the `ceil(missing_fraction * N)` points nearest the
/// occlusion point form the missing part.
///
/// `interface_truth` holds the `n_t` partial points nearest the occlusion point
/// (fewer if the partial scan is smaller).
pub fn cut_sphere(gt: &PointCloud, occlusion_point: Point3, missing_fraction: f64, n_t: usize) -> Result<OcclusionSample> {
    let n = gt.len();
    if n < 2 {
        return param_err(format!("ground truth needs at least 2 points, got {n}"));
    }
    if !(missing_fraction > 0.0 && missing_fraction < 1.0) {
        return param_err(format!("missing fraction {missing_fraction} outside (0, 1)"));
    }
    if !occlusion_point.is_finite() {
        return param_err("occlusion point must be finite");
    }
    let n_missing = (missing_fraction * n as f64).ceil() as usize;
    if n_missing == 0 || n_missing >= n {
        return param_err(format!("fraction {missing_fraction} removes {n_missing} of {n} points"));
    }
    let order = ordered_by_distance(gt, occlusion_point);
    let occlusion_radius = order[n_missing - 1].distance;
    let mut missing_source: Vec<usize> = order[..n_missing].iter().map(|nb| nb.index).collect();
    missing_source.sort_unstable();
    let retained_source = complement(n, &missing_source);
    let partial = gt.select(&retained_source)?;
    let interface_source = interface_indices(&partial, occlusion_point, n_t, false);
    Ok(OcclusionSample {
        shape_id: 0,
        seed: 0,
        protocol: CutProtocol::Sphere,
        difficulty: Difficulty::from_fraction(n_missing as f64 / n as f64),
        missing: gt.select(&missing_source)?,
        interface_truth: partial.select(&interface_source)?,
        ground_truth: gt.clone(),
        partial,
        partial_source: retained_source.clone(),
        missing_source,
        retained_source,
        interface_source,
        occlusion_point: Some(occlusion_point),
        occlusion_radius: Some(occlusion_radius),
    })
}

/// Viewpoint protocol: the `n_mask` points most distant from `viewpoint` are
/// removed and the rest is farthest-point downsampled to `input_size`.
///
/// The FPS start index is drawn from `seed`. Because the removed region faces away
/// from the viewpoint, `interface_truth` holds the `n_t` partial points *farthest*
/// from it.
pub fn cut_viewpoint(
    gt: &PointCloud,
    viewpoint: Point3,
    n_mask: usize,
    input_size: usize,
    seed: u64,
    n_t: usize,
) -> Result<OcclusionSample> {
    let n = gt.len();
    if n_mask == 0 || n_mask >= n {
        return param_err(format!("n_mask {n_mask} outside 1..{n}"));
    }
    if input_size == 0 || input_size > n - n_mask {
        return param_err(format!("input size {input_size} outside 1..={}", n - n_mask));
    }
    if !viewpoint.is_finite() {
        return param_err("viewpoint must be finite");
    }
    let mut order = ordered_by_distance(gt, viewpoint);
    order.sort_by(|a, b| b.distance.total_cmp(&a.distance).then_with(|| a.index.cmp(&b.index)));
    let mut missing_source: Vec<usize> = order[..n_mask].iter().map(|nb| nb.index).collect();
    missing_source.sort_unstable();
    let retained_source = complement(n, &missing_source);
    let retained = gt.select(&retained_source)?;
    let start = rng_from_seed(seed).gen_range(0..retained.len());
    let mut picked = farthest_point_sample(&retained, input_size, start)?;
    picked.sort_unstable();
    let partial_source: Vec<usize> = picked.iter().map(|&i| retained_source[i]).collect();
    let partial = gt.select(&partial_source)?;
    let interface_source = interface_indices(&partial, viewpoint, n_t, true);
    Ok(OcclusionSample {
        shape_id: 0,
        seed,
        protocol: CutProtocol::Viewpoint,
        difficulty: Difficulty::from_fraction(n_mask as f64 / n as f64),
        missing: gt.select(&missing_source)?,
        interface_truth: partial.select(&interface_source)?,
        ground_truth: gt.clone(),
        partial,
        partial_source,
        missing_source,
        retained_source,
        interface_source,
        occlusion_point: Some(viewpoint),
        occlusion_radius: None,
    })
}

/// The eight test viewpoints: cube-corner directions at distance 3, fixed order.
pub fn fixed_test_viewpoints() -> [Point3; 8] {
    let s = VIEWPOINT_DISTANCE / 3f64.sqrt();
    let mut out = [Point3::ORIGIN; 8];
    let mut i = 0;
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                out[i] = Point3::new(sx * s, sy * s, sz * s);
                i += 1;
            }
        }
    }
    out
}

/// A viewpoint drawn uniformly from the radius-3 sphere.
pub fn random_viewpoint(rng: &mut impl Rng) -> Point3 {
    let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.gen::<f64>();
    let rho = (1.0 - z * z).max(0.0).sqrt();
    Point3::new(rho * phi.cos(), rho * phi.sin(), z) * VIEWPOINT_DISTANCE
}

/// Evenly spread samples of a flat disk in the z = 0 plane.
///
/// `oversample * n` i.i.d. uniform samples are thinned to `n` by farthest point
/// sampling, which keeps the density uniform while removing clumps.
pub fn uniform_disk(n: usize, radius: f64, oversample: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 || oversample == 0 || !(radius > 0.0) {
        return param_err("disk needs n > 0, oversample > 0 and positive radius");
    }
    let mut rng = rng_from_seed(seed);
    let dense: Vec<Point3> = (0..n * oversample)
        .map(|_| {
            let rho = radius * rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            Point3::new(rho * phi.cos(), rho * phi.sin(), 0.0)
        })
        .collect();
    let dense = PointCloud::new(dense)?;
    let start = rng.gen_range(0..dense.len());
    let picks = farthest_point_sample(&dense, n, start)?;
    dense.select(&picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ShapeKind, n: usize) -> ShapeSpec {
        ShapeSpec::new(kind, n, 11)
    }

    #[test]
    fn sphere_points_on_surface() {
        let c = generate_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 1000)).unwrap();
        assert_eq!(c.len(), 1000);
        for p in &c {
            assert!((p.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn box_points_on_exactly_one_face() {
        let h = [0.9, 0.6, 0.4];
        let c = generate_shape(&spec(ShapeKind::Box { half_extents: h }, 2000)).unwrap();
        for p in &c {
            let a = p.to_array();
            let on = (0..3).filter(|&k| a[k].abs() == h[k]).count();
            assert_eq!(on, 1, "{p:?}");
            assert!((0..3).all(|k| a[k].abs() <= h[k]));
        }
    }

    #[test]
    fn torus_implicit_residual() {
        let (big, small) = (1.0, 0.3);
        let c = generate_shape(&spec(ShapeKind::Torus { major_radius: big, minor_radius: small }, 1500)).unwrap();
        for p in &c {
            let q = (p.x * p.x + p.y * p.y).sqrt() - big;
            assert!((q * q + p.z * p.z - small * small).abs() < 1e-9);
        }
    }

    #[test]
    fn cylinder_points_on_surface() {
        let c = generate_shape(&spec(ShapeKind::Cylinder { radius: 0.5, height: 1.6 }, 800)).unwrap();
        for p in &c {
            let rho = (p.x * p.x + p.y * p.y).sqrt();
            let lateral = (rho - 0.5).abs() < 1e-12 && p.z.abs() <= 0.8;
            let cap = p.z.abs() == 0.8 && rho <= 0.5 + 1e-12;
            assert!(lateral || cap);
        }
    }

    #[test]
    fn composites_have_no_internal_seams() {
        for name in ["l_bracket", "table"] {
            let kind = ShapeKind::default_named(name).unwrap();
            let c = generate_shape(&spec(kind, 3000)).unwrap();
            assert_eq!(c.len(), 3000);
        }
        // the table's leg tops touch the slab underside; no samples there
        let kind = ShapeKind::default_named("table").unwrap();
        let c = generate_shape(&spec(kind, 4000)).unwrap();
        let z_under = -0.5 * (0.8 + 0.12) + 0.8;
        let leg_c = 0.8 - 0.06;
        let inside_leg_top = c.iter().filter(|p| {
            p.z == z_under && (p.x.abs() - leg_c).abs() < 0.05 && (p.y.abs() - (0.5 - 0.06)).abs() < 0.05
        });
        assert_eq!(inside_leg_top.count(), 0);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_shape(&spec(ShapeKind::Sphere { radius: -1.0 }, 100)).is_err());
        assert!(generate_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 10)).is_err());
        assert!(ShapeKind::default_named("teapot").is_err());
        assert!(ShapeSpec::from_json(r#"{"kind":"teapot","sample_count":100,"seed":1}"#).is_err());
        let ok = ShapeSpec::from_json(r#"{"kind":"sphere","radius":1.0,"sample_count":100,"seed":1}"#).unwrap();
        assert_eq!(ok.kind, ShapeKind::Sphere { radius: 1.0 });
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(ShapeKind::default_named("table").unwrap(), 500);
        assert_eq!(generate_shape(&s).unwrap(), generate_shape(&s).unwrap());
    }

    #[test]
    fn tiny_fraction_removes_single_nearest() {
        let gt = generate_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 100)).unwrap();
        let o = Point3::new(0.0, 0.0, 2.0);
        let s = cut_sphere(&gt, o, 1e-6, 4).unwrap();
        assert_eq!(s.missing.len(), 1);
        let nearest = crate::geometry::knn(&gt, o, 1).unwrap()[0].index;
        assert_eq!(s.missing_source, vec![nearest]);
        assert_eq!(s.interface_truth.len(), 4);
    }

    #[test]
    fn cut_sphere_errors() {
        let gt = PointCloud::new(vec![Point3::ORIGIN]).unwrap();
        assert!(cut_sphere(&gt, Point3::ORIGIN, 0.5, 1).is_err());
        let gt = PointCloud::new(vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(cut_sphere(&gt, Point3::ORIGIN, 0.0, 1).is_err());
        assert!(cut_sphere(&gt, Point3::ORIGIN, 1.0, 1).is_err());
        assert!(cut_sphere(&gt, Point3::ORIGIN, 0.99, 1).is_err());
    }

    #[test]
    fn viewpoint_cut_keeps_single_nearest() {
        let gt = generate_shape(&spec(ShapeKind::Sphere { radius: 1.0 }, 200)).unwrap();
        let v = Point3::new(3.0, 0.0, 0.0);
        let s = cut_viewpoint(&gt, v, 199, 1, 5, 64).unwrap();
        let nearest = crate::geometry::knn(&gt, v, 1).unwrap()[0].index;
        assert_eq!(s.partial_source, vec![nearest]);
        assert_eq!(s.difficulty, Difficulty::Hard);
        assert!(cut_viewpoint(&gt, v, 0, 1, 5, 4).is_err());
        assert!(cut_viewpoint(&gt, v, 100, 101, 5, 4).is_err());
    }

    #[test]
    fn viewpoint_cut_on_line_removes_far_segment() {
        let gt = PointCloud::new((0..100).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let s = cut_viewpoint(&gt, Point3::new(-1.0, 0.0, 0.0), 30, 70, 1, 5).unwrap();
        assert_eq!(s.missing_source, (70..100).collect::<Vec<_>>());
        assert_eq!(s.partial_source, (0..70).collect::<Vec<_>>());
        assert_eq!(s.interface_source, vec![69, 68, 67, 66, 65]);
    }

    #[test]
    fn desk_viewpoint_counts() {
        let gt = generate_shape(&spec(ShapeKind::default_named("torus").unwrap(), 2048)).unwrap();
        let s = cut_viewpoint(&gt, fixed_test_viewpoints()[3], 512, 512, 9, 64).unwrap();
        assert_eq!(s.partial.len(), 512);
        assert_eq!(s.missing.len(), 512);
        assert_eq!(s.retained_source.len(), 1536);
        assert_eq!(s.interface_truth.len(), 64);
        assert_eq!(s.difficulty, Difficulty::Easy);
    }

    #[test]
    fn fixed_viewpoints_shape() {
        let v = fixed_test_viewpoints();
        assert_eq!(v.len(), 8);
        for p in &v {
            assert!((p.norm() - 3.0).abs() < 1e-12);
        }
        for p in &v {
            for flip in [Point3::new(-p.x, p.y, p.z), Point3::new(p.x, -p.y, p.z), Point3::new(p.x, p.y, -p.z)] {
                assert!(v.contains(&flip));
            }
        }
    }

    #[test]
    fn difficulty_fractions() {
        for d in Difficulty::ALL {
            assert_eq!(Difficulty::from_fraction(d.fraction()), d);
        }
    }
}
