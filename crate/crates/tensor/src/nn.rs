//! Point-set layers built on [`Graph`].
//!
//! Layers only hold parameter names and sizes; the weights live in a
//! [`ParamStore`]. The same layer object therefore runs in `f32` and in the
//! `f64` shadow used by gradient checks.

use rand::Rng;
use serde::{Deserialize, Serialize};
use spacnet_core::geometry::{farthest_point_sample, NeighborSearch};
use spacnet_core::PointCloud;

use crate::error::{param_err, Result};
use crate::params::{Graph, ParamStore};
use crate::real::Real;
use crate::tape::Var;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
}

impl Activation {
    pub fn apply<T: Real>(self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => g.tape.relu(x),
            Activation::LeakyRelu => g.tape.leaky_relu(x, LEAKY_SLOPE),
        }
    }
}

/// `x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Registers the weights, drawn from `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return param_err(format!("{name}: zero-sized linear layer {in_dim}x{out_dim}"));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = format!("{name}.weight");
        store.insert(&weight, Tensor::uniform(&[in_dim, out_dim], bound, rng))?;
        let bias = if bias {
            let b = format!("{name}.bias");
            store.insert(&b, Tensor::uniform(&[out_dim], bound, rng))?;
            Some(b)
        } else {
            None
        };
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight)?;
        let y = g.tape.matmul(x, w)?;
        match &self.bias {
            Some(b) => {
                let b = g.param(b)?;
                g.tape.broadcast_add(y, b)
            }
            None => Ok(y),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        std::iter::once(self.weight.clone()).chain(self.bias.clone()).collect()
    }
}

/// Per-row MLP; the activation sits between layers, the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl SharedMlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        widths: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return param_err(format!("{name}: an MLP needs at least input and output widths"));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, rng, &format!("{name}.{i}"), w[0], w[1], true))
            .collect::<Result<_>>()?;
        Ok(Self { layers, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn last(&self) -> &Linear {
        &self.layers[self.layers.len() - 1]
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = self.activation.apply(g, h)?;
            }
            h = layer.forward(g, h)?;
        }
        Ok(h)
    }
}

/// Per-channel maximum over the rows of `[n, c]`, giving `[1, c]`.
pub fn max_pool_set<T: Real>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    g.tape.reduce_max(x, 0)
}

/// Multi-head scaled dot-product attention with bias-free projections.
///
/// Queries come from `[n_q, q_dim]`, keys and values from `[n_k, kv_dim]`;
/// the output is `[n_q, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        q_dim: usize,
        kv_dim: usize,
        dim: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return param_err(format!("{name}: width {dim} not divisible by {heads} heads"));
        }
        Ok(Self {
            query: Linear::new(store, rng, &format!("{name}.q"), q_dim, dim, false)?,
            key: Linear::new(store, rng, &format!("{name}.k"), kv_dim, dim, false)?,
            value: Linear::new(store, rng, &format!("{name}.v"), kv_dim, dim, false)?,
            output: Linear::new(store, rng, &format!("{name}.o"), dim, dim, false)?,
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.output.out_dim
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, q: Var, k: Var, v: Var) -> Result<Var> {
        let qp = self.query.forward(g, q)?;
        let kp = self.key.forward(g, k)?;
        let vp = self.value.forward(g, v)?;
        let d = self.dim() / self.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.tape.slice_cols(qp, h * d, d)?;
            let kh = g.tape.slice_cols(kp, h * d, d)?;
            let vh = g.tape.slice_cols(vp, h * d, d)?;
            let kt = g.tape.transpose(kh)?;
            let logits = g.tape.matmul(qh, kt)?;
            let logits = g.tape.scale(logits, scale)?;
            let weights = g.tape.softmax_lastdim(logits)?;
            heads.push(g.tape.matmul(weights, vh)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { g.tape.concat_cols(&heads)? };
        self.output.forward(g, joined)
    }
}

/// Flat `[m * k]` indices of the `k` nearest `source` points of each anchor.
/// An anchor that is itself in `source` finds itself first.
pub fn knn_indices(source: &PointCloud, anchors: &PointCloud, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > source.len() {
        return param_err(format!("k = {k} outside 1..={}", source.len()));
    }
    let search = NeighborSearch::new(source);
    let mut out = Vec::with_capacity(anchors.len() * k);
    for a in anchors.iter() {
        out.extend(search.knn(*a, k)?.into_iter().map(|n| n.index));
    }
    Ok(out)
}

/// EdgeConv: for each anchor, MLP over `[anchor || neighbour - anchor]`, max over neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeConv {
    pub mlp: SharedMlp,
    pub k: usize,
}

impl EdgeConv {
    /// `widths` starts at the per-point feature width `c`; the MLP input is `2c`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        widths: &[usize],
        k: usize,
    ) -> Result<Self> {
        if widths.len() < 2 || k == 0 {
            return param_err(format!("{name}: needs widths [c, .., out] and k >= 1"));
        }
        let mut w = widths.to_vec();
        w[0] *= 2;
        Ok(Self { mlp: SharedMlp::new(store, rng, name, &w, Activation::LeakyRelu)?, k })
    }

    /// `source: [n, c]`, `anchors: [m, c]`, `neighbors`: `m * k` row indices into `source`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, source: Var, anchors: Var, neighbors: &[usize]) -> Result<Var> {
        let m = g.tape.shape(anchors)[0];
        if neighbors.len() != m * self.k {
            return param_err(format!("edge_conv: {} neighbour indices for {m} anchors and k = {}", neighbors.len(), self.k));
        }
        let rep: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, self.k)).collect();
        let centre = g.tape.gather_rows(anchors, &rep)?;
        let nbr = g.tape.gather_rows(source, neighbors)?;
        let rel = g.tape.sub(nbr, centre)?;
        let edge = g.tape.concat_cols(&[centre, rel])?;
        let h = self.mlp.forward(g, edge)?;
        g.tape.max_pool_groups(h, self.k)
    }
}

/// Flattened `[n, 3]` coordinates of a cloud.
pub fn cloud_tensor<T: Real>(cloud: &PointCloud) -> Tensor<T> {
    Tensor::from_f64(&[cloud.len(), 3], &cloud.to_flat()).expect("3 coordinates per point")
}

/// FPS centres, kNN grouping, MLP over `[relative position || feature]`, max per
/// group, then residual self-attention over the group features.
#[derive(Debug, Clone, PartialEq)]
pub struct SetAbstraction {
    pub centers: usize,
    pub k: usize,
    pub mlp: SharedMlp,
    pub attention: MultiHeadAttention,
}

impl SetAbstraction {
    /// `widths` starts at the input feature width (0 for coordinates only).
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        centers: usize,
        k: usize,
        widths: &[usize],
        heads: usize,
    ) -> Result<Self> {
        if widths.len() < 2 || centers == 0 || k == 0 {
            return param_err(format!("{name}: needs widths [c_in, .., out], centers >= 1, k >= 1"));
        }
        let mut w = widths.to_vec();
        w[0] += 3;
        let mlp = SharedMlp::new(store, rng, &format!("{name}.mlp"), &w, Activation::Relu)?;
        let out = mlp.out_dim();
        let attention = MultiHeadAttention::new(store, rng, &format!("{name}.attn"), out, out, out, heads)?;
        Ok(Self { centers, k, mlp, attention })
    }

    /// Returns the centre coordinates, their source indices and the `[m, out]` features.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        points: &PointCloud,
        feats: Option<Var>,
    ) -> Result<(PointCloud, Vec<usize>, Var)> {
        if self.centers > points.len() || self.k > points.len() {
            return param_err(format!(
                "set_abstraction: {} centres / k = {} from {} points",
                self.centers,
                self.k,
                points.len()
            ));
        }
        let picks = farthest_point_sample(points, self.centers, 0)?;
        let centers = points.select(&picks)?;
        let nbr = knn_indices(points, &centers, self.k)?;
        let mut rel = Vec::with_capacity(nbr.len() * 3);
        for (r, &j) in nbr.iter().enumerate() {
            let d = points[j] - centers[r / self.k];
            rel.extend([d.x, d.y, d.z]);
        }
        let rel = g.tape.constant(Tensor::from_f64(&[nbr.len(), 3], &rel)?)?;
        let input = match feats {
            Some(f) => {
                let gathered = g.tape.gather_rows(f, &nbr)?;
                g.tape.concat_cols(&[rel, gathered])?
            }
            None => rel,
        };
        let h = self.mlp.forward(g, input)?;
        let pooled = g.tape.max_pool_groups(h, self.k)?;
        let attended = self.attention.forward(g, pooled, pooled, pooled)?;
        let out = g.tape.add(pooled, attended)?;
        Ok((centers, picks, out))
    }
}
