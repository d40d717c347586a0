//! Finite-difference sweep over every differentiable op and layer.
//!
//! Each entry accumulates checks over `seeds` random instances. Outputs are
//! reduced to a scalar through a fixed random weighting before differencing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacnet_core::{Point3, PointCloud};

use crate::gradcheck::{check_inputs, check_params, GradCheckConfig, GradCheckReport};
use crate::nn::{knn_indices, max_pool_set, Activation, EdgeConv, MultiHeadAttention, SetAbstraction, SharedMlp};
use crate::{Graph, ParamStore, Result, Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = tape.constant(Tensor::uniform(tape.shape(out), 1.0, &mut rng))?;
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

type OpFn = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn check_op(name: &'static str, shapes: &[&[usize]], seeds: u64, f: OpFn) -> Result<SuiteEntry> {
    let mut total = GradCheckReport::default();
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| Tensor::uniform(s, 1.0, &mut rng)).collect();
        let cfg = GradCheckConfig { seed, ..GradCheckConfig::default() };
        let r = check_inputs(&inputs, |t, v| {
            let out = f(t, v)?;
            project(t, out, seed)
        }, &cfg)?;
        total.merge(&r);
    }
    Ok(SuiteEntry { name, report: total })
}

/// Every tape op, checked with respect to all of its inputs.
pub fn op_suite(seeds: u64) -> Result<Vec<SuiteEntry>> {
    let ops: [(&'static str, &[&[usize]], OpFn); 27] = [
        ("add", &[&[4, 3], &[4, 3]], |t, v| t.add(v[0], v[1])),
        ("sub", &[&[4, 3], &[4, 3]], |t, v| t.sub(v[0], v[1])),
        ("mul", &[&[4, 3], &[4, 3]], |t, v| t.mul(v[0], v[1])),
        ("scale", &[&[5, 2]], |t, v| t.scale(v[0], -1.7)),
        ("relu", &[&[6, 5]], |t, v| t.relu(v[0])),
        ("leaky_relu", &[&[6, 5]], |t, v| t.leaky_relu(v[0], 0.2)),
        ("broadcast_add", &[&[5, 3], &[3]], |t, v| t.broadcast_add(v[0], v[1])),
        ("matmul", &[&[4, 6], &[6, 3]], |t, v| t.matmul(v[0], v[1])),
        ("transpose", &[&[4, 6]], |t, v| t.transpose(v[0])),
        ("softmax_lastdim", &[&[3, 7]], |t, v| {
            let s = t.scale(v[0], 3.0)?;
            t.softmax_lastdim(s)
        }),
        ("sq_dist", &[&[5, 3], &[7, 3]], |t, v| t.sq_dist(v[0], v[1])),
        ("concat_cols", &[&[4, 2], &[4, 3]], |t, v| t.concat_cols(&[v[0], v[1], v[0]])),
        ("concat_rows", &[&[2, 3], &[4, 3]], |t, v| t.concat_rows(&[v[1], v[0]])),
        ("gather_rows", &[&[5, 3]], |t, v| t.gather_rows(v[0], &[4, 0, 0, 2, 4, 4])),
        ("reshape", &[&[4, 6]], |t, v| t.reshape(v[0], &[8, 3])),
        ("slice_cols", &[&[4, 6]], |t, v| t.slice_cols(v[0], 2, 3)),
        ("reduce_max axis 0", &[&[6, 4]], |t, v| t.reduce_max(v[0], 0)),
        ("reduce_max axis 1", &[&[6, 4]], |t, v| t.reduce_max(v[0], 1)),
        ("reduce_min axis 0", &[&[6, 4]], |t, v| t.reduce_min(v[0], 0)),
        ("reduce_min axis 1", &[&[6, 4]], |t, v| t.reduce_min(v[0], 1)),
        ("max_pool_groups", &[&[12, 3]], |t, v| t.max_pool_groups(v[0], 4)),
        ("reduce_mean axis 0", &[&[6, 4]], |t, v| t.reduce_mean(v[0], 0)),
        ("reduce_mean axis 1", &[&[6, 4]], |t, v| t.reduce_mean(v[0], 1)),
        ("mean_all", &[&[6, 4]], |t, v| t.mean_all(v[0])),
        ("sum", &[&[6, 4]], |t, v| t.sum(v[0])),
        ("chamfer_l2", &[&[9, 3], &[6, 3]], |t, v| t.chamfer_l2(v[0], v[1])),
        ("chamfer_l2 self", &[&[8, 3]], |t, v| t.chamfer_l2(v[0], v[0])),
    ];
    ops.into_iter().map(|(name, shapes, f)| check_op(name, shapes, seeds, f)).collect()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let pts = (0..n).map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    PointCloud::new(pts.collect()).expect("finite points")
}

type Forward = Box<dyn Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>>;
type Build = fn(&mut ParamStore<f64>, &mut ChaCha8Rng) -> Result<(Vec<Tensor<f64>>, Forward)>;

/// Checks a layer with respect to its parameters and its input tensors.
fn check_layer(name: &'static str, seeds: u64, build: Build) -> Result<SuiteEntry> {
    let mut total = GradCheckReport::default();
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        let (inputs, forward) = build(&mut store, &mut rng)?;
        let cfg = GradCheckConfig { seed, max_coords: 24, ..GradCheckConfig::default() };
        let with_inputs = |g: &mut Graph<'_, f64>| -> Result<Var> {
            let vars = inputs.iter().map(|x| g.tape.constant(x.clone())).collect::<Result<Vec<_>>>()?;
            let out = forward(g, &vars)?;
            project(&mut g.tape, out, seed)
        };
        total.merge(&check_params(&store, &[], with_inputs, &cfg)?);
        let wrt_inputs = |t: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
            let mut g = Graph::new(&store);
            std::mem::swap(&mut g.tape, t);
            let out = forward(&mut g, vars);
            std::mem::swap(&mut g.tape, t);
            project(t, out?, seed)
        };
        total.merge(&check_inputs(&inputs, wrt_inputs, &cfg)?);
    }
    Ok(SuiteEntry { name, report: total })
}

fn cloud_tensor(c: &PointCloud) -> Result<Tensor<f64>> {
    Tensor::from_f64(&[c.len(), 3], &c.to_flat())
}

/// Every layer in `nn`.
pub fn layer_suite(seeds: u64) -> Result<Vec<SuiteEntry>> {
    let layers: [(&'static str, Build); 5] = [
        ("shared_mlp", |store, rng| {
            let mlp = SharedMlp::new(store, rng, "mlp", &[3, 8, 5], Activation::Relu)?;
            Ok((vec![Tensor::uniform(&[6, 3], 1.0, rng)], Box::new(move |g, v| mlp.forward(g, v[0]))))
        }),
        ("max_pool_set", |_, rng| Ok((vec![Tensor::uniform(&[7, 4], 1.0, rng)], Box::new(|g, v| max_pool_set(g, v[0]))))),
        ("multi_head_attention", |store, rng| {
            let att = MultiHeadAttention::new(store, rng, "att", 6, 5, 8, 2)?;
            let inputs = vec![Tensor::uniform(&[4, 6], 1.0, rng), Tensor::uniform(&[7, 5], 1.0, rng)];
            Ok((inputs, Box::new(move |g, v| att.forward(g, v[0], v[1], v[1]))))
        }),
        ("edge_conv", |store, rng| {
            let ec = EdgeConv::new(store, rng, "ec", &[3, 8, 6], 4)?;
            let src = random_cloud(rng, 12);
            let anchors = src.select(&[0, 3, 5, 7, 11])?;
            let nbr = knn_indices(&src, &anchors, 4)?;
            Ok((vec![cloud_tensor(&src)?, cloud_tensor(&anchors)?], Box::new(move |g, v| ec.forward(g, v[0], v[1], &nbr))))
        }),
        ("set_abstraction", |store, rng| {
            let sa = SetAbstraction::new(store, rng, "sa", 5, 4, &[2, 8, 8], 2)?;
            let pts = random_cloud(rng, 16);
            Ok((vec![Tensor::uniform(&[16, 2], 1.0, rng)], Box::new(move |g, v| sa.forward(g, &pts, Some(v[0])).map(|r| r.2))))
        }),
    ];
    layers.into_iter().map(|(name, build)| check_layer(name, seeds, build)).collect()
}
