use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use spacnet_core::metrics::chamfer_l2;
use spacnet_core::seed::{derive_seed, rng_from_seed};
use spacnet_tensor::{AdamW, Graph, ParamStore};

use crate::data::PreparedSample;
use crate::error::{input_err, Error, Result};
use crate::network::SpacNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: AdamW,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, optimizer: AdamW::default(), lr_decay: 5e-4, seed: 0, shuffle: true }
    }
}

impl TrainConfig {
    /// Learning rate after `epoch` completed epochs.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.optimizer.lr * (1.0 - self.lr_decay).powi(epoch as i32)
    }
}

/// Means over one epoch's training passes (values before each step's update).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub cd_coarse: f64,
    pub cd_missing: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn first(&self) -> Option<&EpochStats> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

fn non_finite(err: Error, sample: &PreparedSample, epoch: usize) -> Error {
    match err {
        Error::Tensor(spacnet_tensor::Error::NonFinite { .. }) => {
            Error::NonFiniteLoss { sample_id: sample.id.clone(), epoch }
        }
        other => other,
    }
}

/// One optimizer step per sample. `on_epoch` runs after every epoch with the
/// updated parameters (for logging or periodic checkpoints).
pub fn train(
    net: &SpacNet,
    store: &mut ParamStore<f32>,
    data: &[PreparedSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &ParamStore<f32>) -> Result<()>,
) -> Result<TrainReport> {
    if data.is_empty() {
        return input_err("training set is empty");
    }
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.sort_unstable();
            order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, &[epoch as u64])));
        }
        let opt = AdamW { lr: cfg.lr_at(epoch), ..cfg.optimizer };
        let (mut loss, mut coarse, mut missing) = (0.0, 0.0, 0.0);
        for &i in &order {
            let sample = &data[i];
            let grads = {
                let mut g = Graph::new(&*store);
                let step = (|| {
                    let vars = net.forward_graph(&mut g, &sample.partial, &sample.interface)?;
                    net.loss_graph(&mut g, &vars, &sample.target_coarse, &sample.gt_missing)
                })()
                .map_err(|e| non_finite(e, sample, epoch + 1))?;
                let total = g.tape.scalar(step.total) as f64;
                if !total.is_finite() {
                    return Err(Error::NonFiniteLoss { sample_id: sample.id.clone(), epoch: epoch + 1 });
                }
                loss += total;
                coarse += g.tape.scalar(step.partial) as f64;
                missing += g.tape.scalar(step.complete) as f64;
                g.param_grads(step.total)?
            };
            store.adamw_step(&grads, &opt)?;
        }
        let n = data.len() as f64;
        let stats = EpochStats { epoch: epoch + 1, lr: opt.lr, loss: loss / n, cd_coarse: coarse / n, cd_missing: missing / n };
        on_epoch(&stats, store)?;
        report.epochs.push(stats);
    }
    Ok(report)
}

/// Mean CD-L2 (f64) between predicted and ground-truth missing parts.
pub fn mean_missing_cd(net: &SpacNet, store: &ParamStore<f32>, data: &[PreparedSample]) -> Result<f64> {
    if data.is_empty() {
        return input_err("evaluation set is empty");
    }
    let mut total = 0.0;
    for s in data {
        let out = net.forward(store, &s.partial, &s.interface)?;
        total += chamfer_l2(&out.missing_pred, &s.gt_missing)?;
    }
    Ok(total / data.len() as f64)
}
