//! Weight masks.
//!
//! The network always computes with effective weights `W ⊙ T`, where `W` are
//! the stored (shadow) weights and `T` is a mask rebuilt from `W` after every
//! optimizer step. Shadow weights are never zeroed.
//!
//! Two mask rules are provided:
//!
//! * **Soft (DSP)**, elementwise with `c = γ·mu`:
//!   `T̃ = min(r, β·ln(max(ε, |w|/c)))`, `T = max((α/β)·T̃, T̃)`.
//!   Weights below `c` get a small (negative) mask of magnitude at most
//!   `α·|ln ε|` instead of zero, so `d(w·T)/dw` never vanishes and pruned
//!   weights keep receiving gradient.
//! * **Surgery (hard)**, with `ω = mu + η·std`: `T = 0` below `0.9ω`, `T = 1`
//!   at or above `1.1ω`, and the previous mask in between.
//!
//! `mu` and `std` are treated as constants when differentiating.
//!
//! Note on the product-rule term: for `|w| < c` with `α < β`, `w·T(w) =
//! α·w·ln(|w|/c)` and its derivative is `α·(ln(|w|/c) + 1)`. Some write-ups
//! give this as `β·(ln(...) + w/|w|)`; that form does not match finite
//! differences and is not used here.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Masks with `|T|` below this count as pruned in sparsity telemetry.
pub const SPARSITY_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    None,
    Dsp,
    Surgery,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub mode: PruneMode,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r: f64,
    pub epsilon: f64,
    /// Threshold sensitivity for the hard mask, `ω = mu + surgery_eta·std`.
    pub surgery_eta: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            mode: PruneMode::Dsp,
            alpha: 1e-4,
            beta: 1.0,
            gamma: 1.0,
            r: 1.0,
            epsilon: 1e-12,
            surgery_eta: 0.1,
        }
    }
}

impl PruneConfig {
    pub fn with_mode(mode: PruneMode) -> Self {
        PruneConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("r", self.r),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("prune.{name} must be > 0, got {v}")));
            }
        }
        if !self.alpha.is_finite() || !self.surgery_eta.is_finite() {
            return Err(Error::Parameter("prune.alpha and prune.surgery_eta must be finite".into()));
        }
        Ok(())
    }
}

/// Mean absolute value and population standard deviation of a weight matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerStats {
    pub mu: f64,
    pub std: f64,
}

pub fn layer_stats(w: &Matrix) -> Result<LayerStats> {
    if w.is_empty() {
        return Err(Error::Parameter("layer statistics of an empty matrix".into()));
    }
    let n = w.len() as f64;
    let mu = w.data().iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean = w.sum() / n;
    let var = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(LayerStats {
        mu,
        std: libm::sqrt(var),
    })
}

/// Which piece of the soft-mask formula is active at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DspBranch {
    /// `|w|/c ≤ ε`: log input clamped to ε.
    Clamped,
    /// `β·ln(ratio) ≥ r`.
    Saturated,
    /// `T = (α/β)·T̃` wins the outer max.
    Scaled,
    /// `T = T̃` wins the outer max.
    Plain,
}

fn dsp_branch(ratio: f64, cfg: &PruneConfig) -> (DspBranch, f64) {
    if ratio <= cfg.epsilon {
        let t = cfg.beta * libm::log(cfg.epsilon);
        let t = t.min(cfg.r);
        return (DspBranch::Clamped, (cfg.alpha / cfg.beta * t).max(t));
    }
    let log_term = cfg.beta * libm::log(ratio);
    if log_term >= cfg.r {
        return (DspBranch::Saturated, (cfg.alpha / cfg.beta * cfg.r).max(cfg.r));
    }
    let scaled = cfg.alpha / cfg.beta * log_term;
    if scaled >= log_term {
        (DspBranch::Scaled, scaled)
    } else {
        (DspBranch::Plain, log_term)
    }
}

/// Soft mask value for a single weight.
pub fn dsp_mask_value(w: f64, stats: &LayerStats, cfg: &PruneConfig) -> f64 {
    if stats.mu <= 0.0 {
        return 1.0;
    }
    dsp_branch(w.abs() / (cfg.gamma * stats.mu), cfg).1
}

/// `d(w·T(w))/dw` for a single weight, with `mu` held constant.
pub fn dsp_mask_grad_value(w: f64, stats: &LayerStats, cfg: &PruneConfig) -> f64 {
    if stats.mu <= 0.0 {
        return 1.0;
    }
    let ratio = w.abs() / (cfg.gamma * stats.mu);
    match dsp_branch(ratio, cfg) {
        (DspBranch::Clamped | DspBranch::Saturated, t) => t,
        (DspBranch::Scaled, _) => cfg.alpha * (libm::log(ratio) + 1.0),
        (DspBranch::Plain, _) => cfg.beta * (libm::log(ratio) + 1.0),
    }
}

/// Elementwise soft mask. A layer with `mu == 0` carries no magnitude
/// information and gets an all-ones mask.
pub fn dsp_mask(w: &Matrix, stats: &LayerStats, cfg: &PruneConfig) -> Matrix {
    w.map(|v| dsp_mask_value(v, stats, cfg))
}

/// Elementwise `d(effective)/d(shadow)` under the soft mask.
pub fn dsp_mask_grad(w: &Matrix, stats: &LayerStats, cfg: &PruneConfig) -> Matrix {
    w.map(|v| dsp_mask_grad_value(v, stats, cfg))
}

/// Threshold `ω = mu + η·std` of the hard mask.
pub fn surgery_threshold(stats: &LayerStats, cfg: &PruneConfig) -> f64 {
    stats.mu + cfg.surgery_eta * stats.std
}

pub fn surgery_mask_value(w: f64, prev: f64, omega: f64) -> f64 {
    let a = w.abs();
    if a < 0.9 * omega {
        0.0
    } else if a < 1.1 * omega {
        prev
    } else {
        1.0
    }
}

/// Three-band hard mask; weights inside `[0.9ω, 1.1ω)` keep their previous mask.
pub fn surgery_mask(w: &Matrix, prev_mask: &Matrix, stats: &LayerStats, cfg: &PruneConfig) -> Result<Matrix> {
    if w.shape() != prev_mask.shape() {
        return Err(Error::shape(
            "surgery_mask",
            format!("{}x{} previous mask", w.rows(), w.cols()),
            format!("{}x{}", prev_mask.rows(), prev_mask.cols()),
        ));
    }
    let omega = surgery_threshold(stats, cfg);
    let data = w
        .data()
        .iter()
        .zip(prev_mask.data())
        .map(|(&v, &p)| surgery_mask_value(v, p, omega))
        .collect();
    Matrix::from_vec(w.rows(), w.cols(), data)
}

/// `shadow ⊙ mask`.
pub fn masked_weights(shadow: &Matrix, mask: &Matrix) -> Result<Matrix> {
    shadow.hadamard(mask)
}

/// Fraction of mask entries with `|T| < SPARSITY_THRESHOLD`.
pub fn sparsity(mask: &Matrix) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let pruned = mask.data().iter().filter(|v| v.abs() < SPARSITY_THRESHOLD).count();
    pruned as f64 / mask.len() as f64
}

/// A mask and the statistics it was built from. Lives next to the shadow
/// weights it applies to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskState {
    pub mask: Matrix,
    pub stats: LayerStats,
}

impl MaskState {
    pub fn ones(rows: usize, cols: usize) -> Self {
        MaskState {
            mask: Matrix::filled(rows, cols, 1.0),
            stats: LayerStats::default(),
        }
    }

    /// Recomputes stats and mask from the current shadow weights.
    pub fn refresh(&mut self, shadow: &Matrix, cfg: &PruneConfig) -> Result<()> {
        match cfg.mode {
            PruneMode::None => {
                self.stats = layer_stats(shadow)?;
            }
            PruneMode::Dsp => {
                self.stats = layer_stats(shadow)?;
                self.mask = dsp_mask(shadow, &self.stats, cfg);
            }
            PruneMode::Surgery => {
                self.stats = layer_stats(shadow)?;
                self.mask = surgery_mask(shadow, &self.mask, &self.stats, cfg)?;
            }
        }
        Ok(())
    }

    /// Chains a gradient w.r.t. effective weights back to the shadow weights.
    ///
    /// The soft mask is differentiated through `|w|`; the hard mask and the
    /// identity mask are treated as constants.
    pub fn shadow_grad(&self, shadow: &Matrix, effective_grad: &Matrix, cfg: &PruneConfig) -> Result<Matrix> {
        match cfg.mode {
            PruneMode::Dsp if self.stats.mu > 0.0 => {
                effective_grad.hadamard(&dsp_mask_grad(shadow, &self.stats, cfg))
            }
            _ => effective_grad.hadamard(&self.mask),
        }
    }
}

/// Shadow weights together with their mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedLayer {
    pub shadow: Matrix,
    pub mask: Matrix,
    pub stats: LayerStats,
}

impl PrunedLayer {
    /// Starts unpruned: all-ones mask.
    pub fn new(shadow: Matrix) -> Self {
        let mask = Matrix::filled(shadow.rows(), shadow.cols(), 1.0);
        PrunedLayer {
            shadow,
            mask,
            stats: LayerStats::default(),
        }
    }

    pub fn refresh(&mut self, cfg: &PruneConfig) -> Result<()> {
        let mut state = MaskState {
            mask: core::mem::replace(&mut self.mask, Matrix::zeros(0, 0)),
            stats: self.stats,
        };
        let res = state.refresh(&self.shadow, cfg);
        self.mask = state.mask;
        self.stats = state.stats;
        res
    }

    pub fn effective(&self) -> Matrix {
        apply_mask(self)
    }
}

/// Effective weights of a pruned layer. The shadow weights are left untouched.
pub fn apply_mask(layer: &PrunedLayer) -> Matrix {
    layer
        .shadow
        .hadamard(&layer.mask)
        .expect("PrunedLayer keeps mask and shadow the same shape")
}

/// One sample of a mask curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub w: f64,
    pub mask: f64,
    pub effective: f64,
}

/// Soft-mask curve `(w, T(w), w·T(w))` at the given weights.
pub fn mask_curve(cfg: &PruneConfig, stats: &LayerStats, w_samples: &[f64]) -> Vec<CurvePoint> {
    w_samples
        .iter()
        .map(|&w| {
            let mask = dsp_mask_value(w, stats, cfg);
            CurvePoint { w, mask, effective: w * mask }
        })
        .collect()
}

/// Hard-mask curve for weights coming from an unpruned state (previous mask 1).
pub fn surgery_curve(cfg: &PruneConfig, stats: &LayerStats, w_samples: &[f64]) -> Vec<CurvePoint> {
    let omega = surgery_threshold(stats, cfg);
    w_samples
        .iter()
        .map(|&w| {
            let mask = surgery_mask_value(w, 1.0, omega);
            CurvePoint { w, mask, effective: w * mask }
        })
        .collect()
}
