//! Uniform-grid spatial hash used for neighbour queries on large clouds.
//!
//! Results are exact and ordered exactly like the brute-force path.

use crate::geometry::{euclidean_distance, Neighbor};
use crate::point::Point3;

const TARGET_PER_CELL: f64 = 4.0;

pub struct SpatialGrid {
    origin: [f64; 3],
    cell: f64,
    dims: [i64; 3],
    cells: Vec<Vec<usize>>,
}

impl SpatialGrid {
    pub fn build(points: &[Point3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for (a, v) in p.to_array().into_iter().enumerate() {
                lo[a] = lo[a].min(v);
                hi[a] = hi[a].max(v);
            }
        }
        if points.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
        let per_axis = (points.len() as f64 / TARGET_PER_CELL).cbrt().max(1.0);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let mut dims = [1i64; 3];
        for a in 0..3 {
            dims[a] = (((hi[a] - lo[a]) / cell).floor() as i64 + 1).max(1);
        }
        let mut grid = SpatialGrid {
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); (dims[0] * dims[1] * dims[2]) as usize],
        };
        for (i, p) in points.iter().enumerate() {
            let c = grid.clamped_cell(*p);
            let slot = grid.slot(c);
            grid.cells[slot].push(i);
        }
        grid
    }

    fn raw_cell(&self, p: Point3) -> [i64; 3] {
        let a = p.to_array();
        let mut out = [0i64; 3];
        for k in 0..3 {
            out[k] = ((a[k] - self.origin[k]) / self.cell).floor() as i64;
        }
        out
    }

    fn clamped_cell(&self, p: Point3) -> [i64; 3] {
        let mut c = self.raw_cell(p);
        for k in 0..3 {
            c[k] = c[k].clamp(0, self.dims[k] - 1);
        }
        c
    }

    fn slot(&self, c: [i64; 3]) -> usize {
        ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize
    }

    fn in_grid(&self, c: [i64; 3]) -> bool {
        (0..3).all(|k| c[k] >= 0 && c[k] < self.dims[k])
    }

    /// Visits every grid cell at Chebyshev distance exactly `ring` from `center`.
    fn for_ring(&self, center: [i64; 3], ring: i64, mut f: impl FnMut(&[usize])) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    let c = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if self.in_grid(c) {
                        f(&self.cells[self.slot(c)]);
                    }
                }
            }
        }
    }

    /// Ring index beyond which no grid cell exists.
    fn max_ring(&self, center: [i64; 3]) -> i64 {
        (0..3)
            .map(|k| center[k].abs().max((self.dims[k] - 1 - center[k]).abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn knn(&self, points: &[Point3], query: Point3, k: usize, skip: Option<usize>) -> Vec<Neighbor> {
        let center = self.raw_cell(query);
        let last = self.max_ring(center);
        let mut found: Vec<Neighbor> = Vec::new();
        let mut ring = 0;
        loop {
            self.for_ring(center, ring, |idx| {
                for &i in idx {
                    if Some(i) != skip {
                        found.push(Neighbor { index: i, distance: euclidean_distance(points[i], query) });
                    }
                }
            });
            // Anything still unvisited lies at least `ring * cell` away.
            if found.len() >= k {
                found.sort_by(Neighbor::order);
                if found[k - 1].distance < ring as f64 * self.cell {
                    break;
                }
            }
            if ring >= last {
                break;
            }
            ring += 1;
        }
        found.sort_by(Neighbor::order);
        found.truncate(k);
        found
    }

    pub fn within(&self, points: &[Point3], center: Point3, r: f64) -> Vec<usize> {
        let lo = self.raw_cell(center - Point3::new(r, r, r));
        let hi = self.raw_cell(center + Point3::new(r, r, r));
        let mut out = Vec::new();
        for x in lo[0].max(0)..=hi[0].min(self.dims[0] - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] - 1) {
                for z in lo[2].max(0)..=hi[2].min(self.dims[2] - 1) {
                    for &i in &self.cells[self.slot([x, y, z])] {
                        if euclidean_distance(points[i], center) <= r {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out
    }
}
