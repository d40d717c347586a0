//! Central finite-difference checks in `f64`.
//!
//! Relative error per coordinate is `|a - n| / max(|a|, |n|, floor)`. A
//! coordinate whose `+eps` or `-eps` evaluation changes the tape's branch
//! signature (a ReLU flip, a different arg-max, ...) sits on a kink; it is
//! skipped and counted.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{Graph, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub floor: f64,
    /// Coordinates checked per tensor; larger tensors are sampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-3, floor: 1e-3, max_coords: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<String>,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn skipped_fraction(&self) -> f64 {
        let total = self.checked + self.skipped;
        if total == 0 {
            0.0
        } else {
            self.skipped as f64 / total as f64
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.clone();
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

fn coords(numel: usize, cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if numel <= cfg.max_coords {
        (0..numel).collect()
    } else {
        let mut v = sample(rng, numel, cfg.max_coords).into_vec();
        v.sort_unstable();
        v
    }
}

/// Shared loop: `eval` returns (loss, signature) for the current values,
/// `perturb(t, i, delta)` shifts coordinate `i` of tensor `t`.
fn compare(
    labels: &[String],
    analytic: &[Tensor<f64>],
    cfg: &GradCheckConfig,
    mut eval: impl FnMut() -> Result<(f64, u64)>,
    mut perturb: impl FnMut(usize, usize, f64),
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (_, base_sig) = eval()?;
    let mut report = GradCheckReport::default();
    for (t, grad) in analytic.iter().enumerate() {
        for i in coords(grad.numel(), cfg, &mut rng) {
            perturb(t, i, cfg.eps);
            let (plus, sig_plus) = eval()?;
            perturb(t, i, -2.0 * cfg.eps);
            let (minus, sig_minus) = eval()?;
            perturb(t, i, cfg.eps);
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grad.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(format!("{}[{i}]: analytic {a:e}, numeric {numeric:e}", labels[t]));
            }
        }
    }
    Ok(report)
}

/// Checks `f` with respect to each input tensor.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[Tensor<f64>], tape: &mut Tape<f64>| -> Result<(Vec<Var>, Var)> {
        tape.set_track_branches(true);
        let vars = values.iter().map(|v| tape.leaf(v.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(tape, &vars)?;
        Ok((vars, out))
    };
    let mut tape = Tape::new();
    let (vars, out) = run(inputs, &mut tape)?;
    let mut grads = tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| grads.take(v).unwrap_or_else(|| Tensor::zeros(x.shape())))
        .collect();
    let labels: Vec<String> = (0..inputs.len()).map(|i| format!("input{i}")).collect();
    let values = std::cell::RefCell::new(inputs.to_vec());
    compare(
        &labels,
        &analytic,
        cfg,
        || {
            let mut tape = Tape::new();
            let (_, out) = run(&values.borrow(), &mut tape)?;
            Ok((tape.scalar(out), tape.signature()))
        },
        |t, i, d| values.borrow_mut()[t].data_mut()[i] += d,
    )
}

/// Checks `f` with respect to the named parameters (all parameters when `names` is empty).
pub fn check_params<F>(store: &ParamStore<f64>, names: &[String], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let names: Vec<String> = if names.is_empty() { store.names().map(str::to_string).collect() } else { names.to_vec() };
    let analytic = {
        let mut g = Graph::new(store);
        g.tape.set_track_branches(true);
        let out = f(&mut g)?;
        let grads = g.param_grads(out)?;
        names
            .iter()
            .map(|n| match grads.get(n) {
                Some(g) => Ok(g.clone()),
                None => Ok(Tensor::zeros(store.get(n)?.shape())),
            })
            .collect::<Result<Vec<_>>>()?
    };
    let work = std::cell::RefCell::new(store.clone());
    compare(
        &names,
        &analytic,
        cfg,
        || {
            let s = work.borrow();
            let mut g = Graph::new(&s);
            g.tape.set_track_branches(true);
            let out = f(&mut g)?;
            Ok((g.tape.scalar(out), g.tape.signature()))
        },
        |t, i, d| {
            let mut s = work.borrow_mut();
            s.get_mut(&names[t]).expect("known name").data_mut()[i] += d;
        },
    )
}
