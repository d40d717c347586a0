use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use spacnet_core::{Point3, PointCloud};
use spacnet_tensor::nn::{knn_indices, max_pool_set, Activation, EdgeConv, MultiHeadAttention, SetAbstraction, SharedMlp};
use spacnet_tensor::{Error, Graph, ParamStore, Tape, Tensor};

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

#[test]
fn identity_matmul_is_noop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Tensor<f64> = Tensor::uniform(&[4, 5], 1.0, &mut rng);
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::identity(4)).unwrap();
    let xv = tape.constant(x.clone()).unwrap();
    let y = tape.matmul(i, xv).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn f32_matmul_matches_naive_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Tensor<f32> = Tensor::uniform(&[7, 9], 1.0, &mut rng);
    let b: Tensor<f32> = Tensor::uniform(&[9, 5], 1.0, &mut rng);
    let mut tape = Tape::new();
    let (av, bv) = (tape.constant(a.clone()).unwrap(), tape.constant(b.clone()).unwrap());
    let c = tape.matmul(av, bv).unwrap();
    for i in 0..7 {
        for j in 0..5 {
            let naive: f64 = (0..9).map(|k| a.at(i, k) as f64 * b.at(k, j) as f64).sum();
            assert!((tape.value(c).at(i, j) as f64 - naive).abs() < 1e-5);
        }
    }
}

#[test]
fn softmax_of_uniform_row_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[2, 4], &[3.0; 8])).unwrap();
    let y = tape.softmax_lastdim(x).unwrap();
    assert!(tape.value(y).data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn reduce_max_ties_go_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3, 2], &[1.0, 5.0, 4.0, 5.0, 4.0, 0.0])).unwrap();
    let m = tape.reduce_max(x, 0).unwrap();
    let s = tape.sum(m).unwrap();
    let grads = tape.backward(s).unwrap();
    assert_eq!(tape.value(m).data(), &[4.0, 5.0]);
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut tape: Tape<f64> = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3])).unwrap();
    let b = tape.constant(Tensor::zeros(&[4, 5])).unwrap();
    let err = tape.matmul(a, b).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
}

#[test]
fn nan_check_rejects_non_finite_values() {
    let mut tape: Tape<f64> = Tape::new();
    assert!(matches!(tape.constant(t(&[1], &[f64::NAN])), Err(Error::NonFinite { .. })));
    let mut tape: Tape<f64> = Tape::new();
    tape.set_nan_check(false);
    assert!(tape.constant(t(&[1], &[f64::NAN])).is_ok());
}

#[test]
fn zero_mlp_gives_zero_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store: ParamStore<f64> = ParamStore::new();
    let mlp = SharedMlp::new(&mut store, &mut rng, "m", &[3, 4], Activation::Relu).unwrap();
    store.zero_prefix("m");
    let mut g = Graph::new(&store);
    let x = g.tape.constant(Tensor::uniform(&[5, 3], 1.0, &mut rng)).unwrap();
    let y = mlp.forward(&mut g, x).unwrap();
    assert!(g.tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn edge_conv_chain_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store: ParamStore<f32> = ParamStore::new();
    let chain = [[3, 64], [64, 128], [128, 256]];
    let layers: Vec<EdgeConv> =
        chain.iter().enumerate().map(|(i, w)| EdgeConv::new(&mut store, &mut rng, &format!("e{i}"), w, 4).unwrap()).collect();
    let cloud = PointCloud::new((0..10).map(|i| Point3::new(i as f64, (i * i) as f64 * 0.1, 0.0)).collect()).unwrap();
    let nbr = knn_indices(&cloud, &cloud, 4).unwrap();
    let mut g = Graph::new(&store);
    let mut h = g.tape.constant(Tensor::from_f64(&[10, 3], &cloud.to_flat()).unwrap()).unwrap();
    for l in &layers {
        h = l.forward(&mut g, h, h, &nbr).unwrap();
    }
    assert_eq!(g.tape.shape(h), &[10, 256]);
}

#[test]
fn edge_conv_with_self_neighbour_sees_zero_offset() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store: ParamStore<f64> = ParamStore::new();
    let ec = EdgeConv::new(&mut store, &mut rng, "e", &[3, 1], 1).unwrap();
    // weights pick out the offset half of [x || q - x]
    *store.get_mut("e.0.weight").unwrap() = t(&[6, 1], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    store.get_mut("e.0.bias").unwrap().fill(0.0);
    let cloud = PointCloud::new(vec![Point3::new(0.1, 0.2, 0.3), Point3::new(2.0, 0.0, 0.0)]).unwrap();
    let nbr = knn_indices(&cloud, &cloud, 1).unwrap();
    assert_eq!(nbr, vec![0, 1]);
    let mut g = Graph::new(&store);
    let x = g.tape.constant(Tensor::from_f64(&[2, 3], &cloud.to_flat()).unwrap()).unwrap();
    let y = ec.forward(&mut g, x, x, &nbr).unwrap();
    assert_eq!(g.tape.value(y).data(), &[0.0, 0.0]);
}

#[test]
fn max_pool_set_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let store: ParamStore<f64> = ParamStore::new();
    let x: Tensor<f64> = Tensor::uniform(&[9, 4], 1.0, &mut rng);
    let mut perm: Vec<usize> = (0..9).collect();
    perm.shuffle(&mut rng);
    let mut g = Graph::new(&store);
    let xv = g.tape.constant(x).unwrap();
    let shuffled = g.tape.gather_rows(xv, &perm).unwrap();
    let a = max_pool_set(&mut g, xv).unwrap();
    let b = max_pool_set(&mut g, shuffled).unwrap();
    assert_eq!(g.tape.value(a), g.tape.value(b));
    let single = g.tape.slice_cols(xv, 0, 4).unwrap();
    let row = g.tape.gather_rows(single, &[3]).unwrap();
    let pooled = max_pool_set(&mut g, row).unwrap();
    assert_eq!(g.tape.value(pooled), g.tape.value(row));
}

fn attention_setup(heads: usize) -> (ParamStore<f64>, MultiHeadAttention, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let att = MultiHeadAttention::new(&mut store, &mut rng, "a", 4, 4, 8, heads).unwrap();
    (store, att, rng)
}

#[test]
fn attention_over_one_key_returns_projected_value() {
    let (store, att, mut rng) = attention_setup(2);
    let mut g = Graph::new(&store);
    let q = g.tape.constant(Tensor::uniform(&[5, 4], 1.0, &mut rng)).unwrap();
    let kv = g.tape.constant(Tensor::uniform(&[1, 4], 1.0, &mut rng)).unwrap();
    let out = att.forward(&mut g, q, kv, kv).unwrap();
    let wv = g.param("a.v.weight").unwrap();
    let wo = g.param("a.o.weight").unwrap();
    let v = g.tape.matmul(kv, wv).unwrap();
    let expect = g.tape.matmul(v, wo).unwrap();
    let e = g.tape.value(expect).clone();
    for r in 0..5 {
        for c in 0..8 {
            assert!((g.tape.value(out).at(r, c) - e.at(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_keys_give_uniform_weights() {
    let (store, att, mut rng) = attention_setup(1);
    let mut g = Graph::new(&store);
    let q = g.tape.constant(Tensor::uniform(&[3, 4], 1.0, &mut rng)).unwrap();
    let key_row: Tensor<f64> = Tensor::uniform(&[1, 4], 1.0, &mut rng);
    let k = g.tape.constant(Tensor::new(&[6, 4], key_row.data().repeat(6)).unwrap()).unwrap();
    let v = g.tape.constant(Tensor::uniform(&[6, 4], 1.0, &mut rng)).unwrap();
    let out = att.forward(&mut g, q, k, v).unwrap();
    // uniform weights: output equals the projected mean value row
    let mean_v = g.tape.reduce_mean(v, 0).unwrap();
    let wv = g.param("a.v.weight").unwrap();
    let wo = g.param("a.o.weight").unwrap();
    let pv = g.tape.matmul(mean_v, wv).unwrap();
    let expect = g.tape.matmul(pv, wo).unwrap();
    let e = g.tape.value(expect).clone();
    for r in 0..3 {
        for c in 0..8 {
            assert!((g.tape.value(out).at(r, c) - e.at(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_invariant_to_key_value_permutation() {
    let (store, att, mut rng) = attention_setup(2);
    let mut g = Graph::new(&store);
    let q = g.tape.constant(Tensor::uniform(&[3, 4], 1.0, &mut rng)).unwrap();
    let kv = g.tape.constant(Tensor::uniform(&[7, 4], 1.0, &mut rng)).unwrap();
    let mut perm: Vec<usize> = (0..7).collect();
    perm.shuffle(&mut rng);
    let kv2 = g.tape.gather_rows(kv, &perm).unwrap();
    let a = att.forward(&mut g, q, kv, kv).unwrap();
    let b = att.forward(&mut g, q, kv2, kv2).unwrap();
    assert!(g.tape.value(a).max_abs_diff(g.tape.value(b)) < 1e-12);
}

#[test]
fn attention_rejects_indivisible_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store: ParamStore<f64> = ParamStore::new();
    assert!(MultiHeadAttention::new(&mut store, &mut rng, "a", 4, 4, 6, 4).is_err());
}

#[test]
fn set_abstraction_with_all_centres_and_k1_sees_zero_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store: ParamStore<f64> = ParamStore::new();
    let sa = SetAbstraction::new(&mut store, &mut rng, "sa", 6, 1, &[2, 4], 1).unwrap();
    store.zero_prefix("sa.attn");
    let cloud = PointCloud::new((0..6).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect()).unwrap();
    let feats: Tensor<f64> = Tensor::uniform(&[6, 2], 1.0, &mut rng);
    let mut g = Graph::new(&store);
    let f = g.tape.constant(feats.clone()).unwrap();
    let (centers, picks, out) = sa.forward(&mut g, &cloud, Some(f)).unwrap();
    assert_eq!(centers.len(), 6);
    // with zero attention the output is the per-point MLP of [0 || feat]
    let zeros = g.tape.constant(Tensor::zeros(&[6, 3])).unwrap();
    let fp = g.tape.gather_rows(f, &picks).unwrap();
    let input = g.tape.concat_cols(&[zeros, fp]).unwrap();
    let expect = sa.mlp.forward(&mut g, input).unwrap();
    assert_eq!(g.tape.value(out), g.tape.value(expect));
}

#[test]
fn set_abstraction_chain_widths() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store: ParamStore<f32> = ParamStore::new();
    let sa1 = SetAbstraction::new(&mut store, &mut rng, "sa1", 512, 16, &[0, 64, 128], 4).unwrap();
    let sa2 = SetAbstraction::new(&mut store, &mut rng, "sa2", 64, 16, &[128, 256], 4).unwrap();
    let cloud = PointCloud::new((0..2048).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect()).unwrap();
    let mut g = Graph::new(&store);
    let (c1, _, f1) = sa1.forward(&mut g, &cloud, None).unwrap();
    assert_eq!((c1.len(), g.tape.shape(f1)), (512, &[512usize, 128][..]));
    let (c2, _, f2) = sa2.forward(&mut g, &c1, Some(f1)).unwrap();
    assert_eq!((c2.len(), g.tape.shape(f2)), (64, &[64usize, 256][..]));
}

#[test]
fn forward_and_backward_are_bit_identical_on_rerun() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store: ParamStore<f32> = ParamStore::new();
        let att = MultiHeadAttention::new(&mut store, &mut rng, "a", 4, 4, 8, 2).unwrap();
        let x: Tensor<f32> = Tensor::uniform(&[16, 4], 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let xv = g.tape.constant(x).unwrap();
        let y = att.forward(&mut g, xv, xv, xv).unwrap();
        let s = g.tape.sum(y).unwrap();
        let grads = g.param_grads(s).unwrap();
        (g.tape.value(y).clone(), grads)
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(ga, gb);
}

mod properties {
    use proptest::prelude::*;
    use spacnet_tensor::{Tape, Tensor};

    fn matrix() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..8, 1usize..6).prop_flat_map(|(n, c)| (Just(n), Just(c), prop::collection::vec(-5.0f64..5.0, n * c)))
    }

    proptest! {
        #[test]
        fn softmax_rows_are_distributions((n, c, data) in matrix()) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(&[n, c], data).unwrap()).unwrap();
            let y = tape.softmax_lastdim(x).unwrap();
            for r in 0..n {
                let row = tape.value(y).row(r);
                prop_assert!(row.iter().all(|&p| p > 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn max_pool_ignores_row_order((n, c, data) in matrix(), rot in 0usize..8) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(&[n, c], data).unwrap()).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
            let shuffled = tape.gather_rows(x, &perm).unwrap();
            let a = tape.reduce_max(x, 0).unwrap();
            let b = tape.reduce_max(shuffled, 0).unwrap();
            prop_assert_eq!(tape.value(a), tape.value(b));
        }

        #[test]
        fn transpose_twice_is_identity((n, c, data) in matrix()) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::new(&[n, c], data).unwrap()).unwrap();
            let t1 = tape.transpose(x).unwrap();
            let t2 = tape.transpose(t1).unwrap();
            prop_assert_eq!(tape.value(x), tape.value(t2));
        }
    }
}
