//! The completion network.
//!
//! Pipeline: set abstraction over the partial scan gives `F_P`; an EdgeConv
//! chain anchored at the interface gives `F_PT`; the coarse head places one
//! point per interface point; refinement stages mix self- and cross-attention
//! against `F_P`; two folds expand every refined point into `r` points. The
//! final cloud is the untouched partial scan followed by the predicted points.

use spacnet_core::seed::rng_from_seed;
use spacnet_core::PointCloud;
use spacnet_tensor::nn::{cloud_tensor, knn_indices, Activation, EdgeConv, Linear, MultiHeadAttention, SetAbstraction, SharedMlp, LEAKY_SLOPE};
use spacnet_tensor::{Graph, ParamStore, Real, Tensor, Var};

use crate::config::{CoarseMode, ModelConfig};
use crate::error::{input_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CoarseHead {
    /// Lifts `F_PT` to `groups * 3` channels, pools within each point, adds `t_i`.
    Displacement { lift: SharedMlp, groups: usize },
    /// Lifts `F_P`, pools over the set, emits all coarse points from one vector.
    Global { lift: SharedMlp, emit: Linear },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineStage {
    pub self_attention: MultiHeadAttention,
    pub cross_attention: MultiHeadAttention,
    /// Maps the cross-attention output back into the residual stream.
    pub cross_mlp: SharedMlp,
    /// Decodes a coordinate correction from the updated features.
    pub coord_mlp: SharedMlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacNet {
    pub config: ModelConfig,
    pub sa1: SetAbstraction,
    pub sa2: SetAbstraction,
    pub edge: Vec<EdgeConv>,
    pub coarse: CoarseHead,
    pub init_features: SharedMlp,
    pub stages: Vec<RefineStage>,
    pub fold1: SharedMlp,
    pub fold2: SharedMlp,
    /// `r x 2` folding grid codes, row-major.
    pub grid: Vec<f64>,
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub f_p: Var,
    pub f_pt: Var,
    pub coarse: Var,
    /// `F_M` before the first stage and after each stage.
    pub f_m: Vec<Var>,
    /// Coordinates after each refinement stage.
    pub refined: Vec<Var>,
    pub missing: Var,
}

#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    pub partial: Var,
    pub complete: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub f_p: Tensor<f64>,
    pub f_pt: Tensor<f64>,
    pub f_m: Vec<Tensor<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub coarse: PointCloud,
    pub refined_stages: Vec<PointCloud>,
    pub missing_pred: PointCloud,
    /// Input scan (verbatim) followed by `missing_pred`.
    pub complete: PointCloud,
    pub features: Features,
}

/// Evenly spaced grid over `[lo, hi]^2`; a single row or column sits at the midpoint.
pub fn folding_grid(rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<f64> {
    let axis = |n: usize| -> Vec<f64> {
        if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).min(hi)).collect()
        }
    };
    let (ys, xs) = (axis(rows), axis(cols));
    ys.iter().flat_map(|&y| xs.iter().flat_map(move |&x| [x, y])).collect()
}

pub fn tensor_to_cloud<T: Real>(t: &Tensor<T>) -> Result<PointCloud> {
    Ok(PointCloud::from_flat(&t.to_f64_vec())?)
}

impl SpacNet {
    /// Registers all parameters in `store`, initialized from `config.init_seed`.
    pub fn new<T: Real>(config: &ModelConfig, store: &mut ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let c = config;
        let rng = &mut rng_from_seed(c.init_seed);
        let half = c.c_p / 2;
        let sa1 = SetAbstraction::new(store, rng, "encoder.sa1", c.sa1_centers(), c.k, &[0, half, half], c.heads)?;
        let sa2 = SetAbstraction::new(store, rng, "encoder.sa2", c.n_t, c.k, &[half, c.c_p, c.c_p], c.heads)?;
        let chain = [3, c.c_t / 4, c.c_t / 2, c.c_t];
        let edge = (0..3)
            .map(|i| EdgeConv::new(store, rng, &format!("encoder.edge{i}"), &chain[i..i + 2], c.k))
            .collect::<spacnet_tensor::Result<Vec<_>>>()?;
        let coarse = match c.coarse_mode {
            CoarseMode::InterfaceDisplacement => CoarseHead::Displacement {
                lift: SharedMlp::new(store, rng, "coarse.lift", &[c.c_t, c.c_t, c.coarse_groups * 3], Activation::Relu)?,
                groups: c.coarse_groups,
            },
            CoarseMode::GlobalFeature => CoarseHead::Global {
                lift: SharedMlp::new(store, rng, "coarse.lift", &[c.c_p, c.c_t, c.c_t], Activation::Relu)?,
                emit: Linear::new(store, rng, "coarse.emit", c.c_t, c.n_t * 3, true)?,
            },
        };
        let init_features = SharedMlp::new(store, rng, "init", &[3 + c.c_p, c.c_m, c.c_m], Activation::Relu)?;
        let stages = (0..c.ssp_stages)
            .map(|s| -> spacnet_tensor::Result<RefineStage> {
                let p = format!("ssp{s}");
                Ok(RefineStage {
                    self_attention: MultiHeadAttention::new(store, rng, &format!("{p}.self"), c.c_m, c.c_m, c.c_m, c.heads)?,
                    cross_attention: MultiHeadAttention::new(store, rng, &format!("{p}.cross"), c.c_m, c.c_p, c.c_m, c.heads)?,
                    cross_mlp: SharedMlp::new(store, rng, &format!("{p}.cross_mlp"), &[c.c_m, c.c_m, c.c_m], Activation::Relu)?,
                    coord_mlp: SharedMlp::new(store, rng, &format!("{p}.coord_mlp"), &[c.c_m, c.c_m, 3], Activation::Relu)?,
                })
            })
            .collect::<spacnet_tensor::Result<Vec<_>>>()?;
        let h = c.fold_hidden;
        let fold1 = SharedMlp::new(store, rng, "fold1", &[c.c_m + 2, h, h, 3], Activation::Relu)?;
        let fold2 = SharedMlp::new(store, rng, "fold2", &[c.c_m + 3, h, h, 3], Activation::Relu)?;
        let (rows, cols) = c.grid_shape()?;
        let grid = folding_grid(rows, cols, c.grid_lo, c.grid_hi);
        Ok(Self { config: c.clone(), sa1, sa2, edge, coarse, init_features, stages, fold1, fold2, grid })
    }

    /// Fresh `f32` parameters.
    pub fn init(config: &ModelConfig) -> Result<(Self, ParamStore<f32>)> {
        let mut store = ParamStore::new();
        let net = Self::new(config, &mut store)?;
        Ok((net, store))
    }

    fn check_input(&self, partial: &PointCloud, interface: &PointCloud) -> Result<()> {
        let c = &self.config;
        if partial.len() != c.n_input {
            return input_err(format!("partial scan has {} points, model expects {}", partial.len(), c.n_input));
        }
        if interface.len() != c.n_t {
            return input_err(format!("interface has {} points, model expects {}", interface.len(), c.n_t));
        }
        Ok(())
    }

    /// Returns `(F_P, F_PT)`.
    pub fn encode<T: Real>(&self, g: &mut Graph<'_, T>, partial: &PointCloud, interface: &PointCloud) -> Result<(Var, Var)> {
        self.check_input(partial, interface)?;
        let (c1, _, f1) = self.sa1.forward(g, partial, None)?;
        let (_, _, f_p) = self.sa2.forward(g, &c1, Some(f1))?;

        let p = g.tape.constant(cloud_tensor(partial))?;
        let t = g.tape.constant(cloud_tensor(interface))?;
        let to_partial = knn_indices(partial, interface, self.config.k)?;
        let within = knn_indices(interface, interface, self.config.k)?;
        let mut h = self.edge[0].forward(g, p, t, &to_partial)?;
        for layer in &self.edge[1..] {
            h = g.tape.leaky_relu(h, LEAKY_SLOPE)?;
            h = layer.forward(g, h, h, &within)?;
        }
        Ok((f_p, h))
    }

    pub fn coarse<T: Real>(&self, g: &mut Graph<'_, T>, f_p: Var, f_pt: Var, interface: &PointCloud) -> Result<Var> {
        let n_t = self.config.n_t;
        match &self.coarse {
            CoarseHead::Displacement { lift, groups } => {
                let lifted = lift.forward(g, f_pt)?;
                let split = g.tape.reshape(lifted, &[n_t * groups, 3])?;
                let offset = g.tape.max_pool_groups(split, *groups)?;
                let t = g.tape.constant(cloud_tensor(interface))?;
                Ok(g.tape.add(offset, t)?)
            }
            CoarseHead::Global { lift, emit } => {
                let lifted = lift.forward(g, f_p)?;
                let pooled = g.tape.reduce_max(lifted, 0)?;
                let pooled = g.tape.relu(pooled)?;
                let flat = emit.forward(g, pooled)?;
                Ok(g.tape.reshape(flat, &[n_t, 3])?)
            }
        }
    }

    /// One refinement stage: `(F, o) -> (F + self(F) + mlp(cross(F, F_P)), o + coord(F'))`.
    pub fn refine<T: Real>(&self, g: &mut Graph<'_, T>, stage: usize, f_m: Var, f_p: Var, coords: Var) -> Result<(Var, Var)> {
        let s = &self.stages[stage];
        let own = s.self_attention.forward(g, f_m, f_m, f_m)?;
        let cross = s.cross_attention.forward(g, f_m, f_p, f_p)?;
        let cross = s.cross_mlp.forward(g, cross)?;
        let f = g.tape.add(f_m, own)?;
        let f = g.tape.add(f, cross)?;
        let delta = s.coord_mlp.forward(g, f)?;
        let o = g.tape.add(coords, delta)?;
        Ok((f, o))
    }

    /// `r` points per refined point: two folds of (feature, grid code) plus the point itself.
    pub fn fold<T: Real>(&self, g: &mut Graph<'_, T>, f_m: Var, coords: Var) -> Result<Var> {
        let (n_t, r) = (self.config.n_t, self.config.upsample_factor);
        let rep: Vec<usize> = (0..n_t).flat_map(|i| std::iter::repeat_n(i, r)).collect();
        let feats = g.tape.gather_rows(f_m, &rep)?;
        let codes: Vec<f64> = (0..n_t).flat_map(|_| self.grid.iter().copied()).collect();
        let codes = g.tape.constant(Tensor::from_f64(&[n_t * r, 2], &codes)?)?;
        let x = g.tape.concat_cols(&[feats, codes])?;
        let first = self.fold1.forward(g, x)?;
        let x = g.tape.concat_cols(&[feats, first])?;
        let second = self.fold2.forward(g, x)?;
        let centres = g.tape.gather_rows(coords, &rep)?;
        Ok(g.tape.add(second, centres)?)
    }

    pub fn forward_graph<T: Real>(&self, g: &mut Graph<'_, T>, partial: &PointCloud, interface: &PointCloud) -> Result<ForwardVars> {
        let (f_p, f_pt) = self.encode(g, partial, interface)?;
        let coarse = self.coarse(g, f_p, f_pt, interface)?;
        let x = g.tape.concat_cols(&[coarse, f_p])?;
        let mut f = self.init_features.forward(g, x)?;
        let mut coords = coarse;
        let mut f_m = vec![f];
        let mut refined = Vec::with_capacity(self.stages.len());
        for s in 0..self.stages.len() {
            (f, coords) = self.refine(g, s, f, f_p, coords)?;
            f_m.push(f);
            refined.push(coords);
        }
        let missing = self.fold(g, f, coords)?;
        Ok(ForwardVars { f_p, f_pt, coarse, f_m, refined, missing })
    }

    /// Joint loss: weighted Chamfer of the coarse points against the reduced
    /// missing part plus Chamfer of the folded points against the full missing part.
    pub fn loss_graph<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        vars: &ForwardVars,
        target_coarse: &PointCloud,
        gt_missing: &PointCloud,
    ) -> Result<LossVars> {
        if target_coarse.is_empty() || gt_missing.is_empty() {
            return input_err("loss needs a non-empty ground-truth missing part");
        }
        let c = &self.config;
        let tc = g.tape.constant(cloud_tensor(target_coarse))?;
        let tm = g.tape.constant(cloud_tensor(gt_missing))?;
        let mut partial = g.tape.chamfer_l2(vars.coarse, tc)?;
        if c.intermediate_supervision {
            let last = vars.refined.len().saturating_sub(1);
            for &o in &vars.refined[..last] {
                let extra = g.tape.chamfer_l2(o, tc)?;
                partial = g.tape.add(partial, extra)?;
            }
        }
        let complete = g.tape.chamfer_l2(vars.missing, tm)?;
        let a = g.tape.scale(partial, c.lambda_partial)?;
        let b = g.tape.scale(complete, c.lambda_complete)?;
        let total = g.tape.add(a, b)?;
        Ok(LossVars { total, partial, complete })
    }

    pub fn forward<T: Real>(&self, store: &ParamStore<T>, partial: &PointCloud, interface: &PointCloud) -> Result<ForwardOutput> {
        let mut g = Graph::new(store);
        let vars = self.forward_graph(&mut g, partial, interface)?;
        let tape = &g.tape;
        let missing_pred = tensor_to_cloud(tape.value(vars.missing))?;
        Ok(ForwardOutput {
            coarse: tensor_to_cloud(tape.value(vars.coarse))?,
            refined_stages: vars.refined.iter().map(|&v| tensor_to_cloud(tape.value(v))).collect::<Result<_>>()?,
            complete: partial.concat(&missing_pred),
            missing_pred,
            features: Features {
                f_p: tape.value(vars.f_p).cast(),
                f_pt: tape.value(vars.f_pt).cast(),
                f_m: vars.f_m.iter().map(|&v| tape.value(v).cast()).collect(),
            },
        })
    }
}
