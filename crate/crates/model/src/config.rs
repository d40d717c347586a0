use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMode {
    /// Coarse point `i` = interface point `t_i` + a displacement decoded from its features.
    InterfaceDisplacement,
    /// Coarse points decoded from one max-pooled global feature (ablation baseline).
    GlobalFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Points in the partial scan.
    pub n_input: usize,
    /// Interface points; also the coarse and refinement resolution.
    pub n_t: usize,
    /// Width of the partial-scan features.
    pub c_p: usize,
    /// Width of the interface-relative features.
    pub c_t: usize,
    /// Width of the missing-part features.
    pub c_m: usize,
    pub ssp_stages: usize,
    pub heads: usize,
    /// Folded points per refined point.
    pub upsample_factor: usize,
    /// Folding grid layout (rows, cols); `None` requires a perfect-square factor.
    pub fold_grid: Option<(usize, usize)>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub coarse_mode: CoarseMode,
    /// Neighbourhood size for grouping and edge convolutions.
    pub k: usize,
    /// Channel groups pooled per interface point in the displacement head.
    pub coarse_groups: usize,
    /// Hidden width of the folding MLPs.
    pub fold_hidden: usize,
    /// Supervise every refinement stage, not only the last.
    pub intermediate_supervision: bool,
    pub lambda_partial: f64,
    pub lambda_complete: f64,
    /// Parameter initialization seed.
    pub init_seed: u64,
}

impl ModelConfig {
    /// Gradient-check size.
    pub fn toy() -> Self {
        Self {
            n_input: 64,
            n_t: 8,
            c_p: 16,
            c_t: 16,
            c_m: 16,
            ssp_stages: 2,
            heads: 2,
            upsample_factor: 4,
            fold_grid: None,
            grid_lo: -1.0,
            grid_hi: 1.0,
            coarse_mode: CoarseMode::InterfaceDisplacement,
            k: 8,
            coarse_groups: 4,
            fold_hidden: 16,
            intermediate_supervision: false,
            lambda_partial: 1.0,
            lambda_complete: 1.0,
            init_seed: 0,
        }
    }

    /// Single-core desk size: 512 input points, 64 x 8 = 512 predicted points.
    pub fn desk() -> Self {
        Self {
            n_input: 512,
            n_t: 64,
            c_p: 128,
            c_t: 128,
            c_m: 128,
            ssp_stages: 3,
            heads: 4,
            upsample_factor: 8,
            fold_grid: Some((2, 4)),
            k: 16,
            fold_hidden: 128,
            ..Self::toy()
        }
    }

    /// Full-width layout: 2048 input points, 256 channels, r = 16.
    pub fn full() -> Self {
        Self {
            n_input: 2048,
            n_t: 384,
            c_p: 256,
            c_t: 256,
            c_m: 256,
            ssp_stages: 3,
            heads: 4,
            upsample_factor: 16,
            fold_grid: None,
            k: 16,
            fold_hidden: 256,
            ..Self::toy()
        }
    }

    /// Number of predicted missing-part points.
    pub fn missing_count(&self) -> usize {
        self.n_t * self.upsample_factor
    }

    /// Points of the first set-abstraction level.
    pub fn sa1_centers(&self) -> usize {
        (self.n_input / 4).max(self.n_t)
    }

    pub fn grid_shape(&self) -> Result<(usize, usize)> {
        let r = self.upsample_factor;
        match self.fold_grid {
            Some((a, b)) if a * b == r => Ok((a, b)),
            Some((a, b)) => config_err(format!("fold grid {a}x{b} does not give {r} points")),
            None => {
                let s = (r as f64).sqrt().round() as usize;
                if s * s == r {
                    Ok((s, s))
                } else {
                    config_err(format!("upsample factor {r} is not a perfect square; set fold_grid"))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_input", self.n_input),
            ("n_t", self.n_t),
            ("c_p", self.c_p),
            ("c_t", self.c_t),
            ("c_m", self.c_m),
            ("heads", self.heads),
            ("upsample_factor", self.upsample_factor),
            ("k", self.k),
            ("coarse_groups", self.coarse_groups),
            ("fold_hidden", self.fold_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return config_err(format!("{name} must be positive"));
        }
        if self.n_t > self.n_input {
            return config_err(format!("n_t = {} exceeds n_input = {}", self.n_t, self.n_input));
        }
        if self.k > self.n_t {
            return config_err(format!("k = {} exceeds n_t = {}", self.k, self.n_t));
        }
        if !self.c_t.is_multiple_of(4) || !self.c_p.is_multiple_of(2) {
            return config_err("c_t must be divisible by 4 and c_p by 2");
        }
        for (name, width) in [("c_p", self.c_p), ("c_p/2", self.c_p / 2), ("c_m", self.c_m)] {
            if width % self.heads != 0 {
                return config_err(format!("{name} = {width} not divisible by {} heads", self.heads));
            }
        }
        if !(self.grid_lo < self.grid_hi) || !self.grid_lo.is_finite() || !self.grid_hi.is_finite() {
            return config_err("grid bounds must satisfy lo < hi");
        }
        if self.lambda_partial < 0.0 || self.lambda_complete < 0.0 {
            return config_err("loss weights must be non-negative");
        }
        self.grid_shape()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
