use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacnet_core::geometry::{
    euclidean_distance, farthest_point_sample, knn, normalize_unit_cube, NeighborSearch,
};
use spacnet_core::{Point3, PointCloud};

fn random_cloud(rng: &mut impl Rng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
            .collect(),
    )
    .unwrap()
}

/// Full sort by (distance, index) computed independently.
fn brute_order(cloud: &PointCloud, q: Point3) -> Vec<usize> {
    let mut idx: Vec<(f64, usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            (d, i)
        })
        .collect();
    idx.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    idx.into_iter().map(|(_, i)| i).collect()
}

fn point() -> impl Strategy<Value = Point3> {
    (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #[test]
    fn distance_symmetric(p in point(), q in point()) {
        prop_assert_eq!(euclidean_distance(p, q), euclidean_distance(q, p));
        prop_assert!(euclidean_distance(p, q) >= 0.0);
    }

    #[test]
    fn distance_matches_per_coordinate_formula(p in point(), q in point()) {
        let manual = ((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z)).sqrt();
        prop_assert!((euclidean_distance(p, q) - manual).abs() <= 1e-12 * manual.max(1.0));
    }

    #[test]
    fn triangle_inequality(p in point(), q in point(), r in point()) {
        prop_assert!(euclidean_distance(p, r) <= euclidean_distance(p, q) + euclidean_distance(q, r) + 1e-9);
    }

    #[test]
    fn fps_is_deterministic(seed in 0u64..1000, m in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_cloud(&mut rng, 40, 1.0);
        let s = (seed % 40) as usize;
        prop_assert_eq!(farthest_point_sample(&c, m, s).unwrap(), farthest_point_sample(&c, m, s).unwrap());
    }

    #[test]
    fn normalize_round_trip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_cloud(&mut rng, 50, 20.0);
        let n = normalize_unit_cube(&c).unwrap();
        let max_abs = n.cloud.iter().flat_map(|p| p.to_array()).map(f64::abs).fold(0.0, f64::max);
        prop_assert!((max_abs - 1.0).abs() < 1e-12);
        for (a, b) in c.iter().zip(n.cloud.iter()) {
            let back = n.inverse(*b);
            prop_assert!(euclidean_distance(*a, back) < 1e-9);
        }
    }
}

#[test]
fn knn_matches_full_sort_for_every_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1usize, 2, 7, 64, 300, 1000] {
        let c = random_cloud(&mut rng, n, 1.0);
        let q = Point3::new(rng.gen(), rng.gen(), rng.gen());
        let order = brute_order(&c, q);
        let ks: Vec<usize> = if n <= 64 { (1..=n).collect() } else { vec![1, 2, 5, 17, n / 2, n - 1, n] };
        for k in ks {
            let got: Vec<usize> = knn(&c, q, k).unwrap().into_iter().map(|nb| nb.index).collect();
            assert_eq!(got, order[..k], "n={n} k={k}");
        }
    }
}

#[test]
fn knn_on_quantized_cloud_breaks_ties_by_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = PointCloud::new(
        (0..400)
            .map(|_| Point3::new(rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64))
            .collect(),
    )
    .unwrap();
    for _ in 0..20 {
        let q = Point3::new(rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64, 0.5);
        let order = brute_order(&c, q);
        for k in [1, 10, 100, 400] {
            let got: Vec<usize> = knn(&c, q, k).unwrap().into_iter().map(|nb| nb.index).collect();
            assert_eq!(got, order[..k]);
        }
    }
}

#[test]
fn grid_backend_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_cloud(&mut rng, 5000, 1.0);
    let brute = NeighborSearch::brute_force(c.points());
    let grid = NeighborSearch::gridded(c.points());
    for i in 0..60 {
        let q = if i % 3 == 0 {
            Point3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))
        } else {
            c[rng.gen_range(0..c.len())]
        };
        for k in [1, 8, 33] {
            assert_eq!(brute.knn(q, k).unwrap(), grid.knn(q, k).unwrap());
        }
        let center = rng.gen_range(0..c.len());
        assert_eq!(brute.within_radius(center, 0.1).unwrap(), grid.within_radius(center, 0.1).unwrap());
        assert_eq!(brute.knn_of(center, 6).unwrap(), grid.knn_of(center, 6).unwrap());
    }
    // the public entry point switches to the grid above the brute-force limit
    let q = Point3::new(0.1, 0.2, 0.3);
    assert_eq!(knn(&c, q, 12).unwrap(), brute.knn(q, 12).unwrap());
}

#[test]
fn grid_handles_quantized_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = PointCloud::new(
        (0..6000)
            .map(|_| Point3::new(rng.gen_range(0..20) as f64, rng.gen_range(0..20) as f64, rng.gen_range(0..4) as f64))
            .collect(),
    )
    .unwrap();
    let brute = NeighborSearch::brute_force(c.points());
    let grid = NeighborSearch::gridded(c.points());
    for _ in 0..30 {
        let q = Point3::new(rng.gen_range(0..20) as f64, rng.gen_range(0..20) as f64, 1.0);
        for k in [1, 30, 200] {
            assert_eq!(brute.knn(q, k).unwrap(), grid.knn(q, k).unwrap());
        }
    }
}

#[test]
fn fps_matches_brute_force_max_min() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = random_cloud(&mut rng, 120, 1.0);
    let got = farthest_point_sample(&c, 30, 7).unwrap();
    // independent oracle: recompute every max-min choice from scratch
    let mut picked = vec![7usize];
    while picked.len() < 30 {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in 0..c.len() {
            if picked.contains(&j) {
                continue;
            }
            let d = picked.iter().map(|&i| euclidean_distance(c[i], c[j])).fold(f64::INFINITY, f64::min);
            if d > best.0 {
                best = (d, j);
            }
        }
        picked.push(best.1);
    }
    assert_eq!(got, picked);
}
