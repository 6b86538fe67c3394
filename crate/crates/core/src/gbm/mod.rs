//! Gradient boosting with oblivious decision trees for click classification.
//!
//! Each iteration fits a depth-p oblivious tree (one shared `(feature,
//! threshold)` test per depth, 2^p leaves) to the pseudo-residuals
//! `y − σ(F)` of the logistic loss, and adds it to the score with shrinkage
//! γ: `F_m = F_{m−1} + γ·h_m`. Splits maximize squared-error reduction over
//! equal-frequency histogram borders; leaves hold mean residuals.

mod io;
mod model;
mod pool;
mod tree;

pub use io::{read_model, write_model, GBM_MODEL_VERSION};
pub use model::{fit, fit_with_eval, FitReport, GbmModel, GbmTrainConfig, ImportanceKind};
pub use pool::{read_pool, write_pool, BinnedPool, Binning, TrainPool, MISSING_BIN};
pub use tree::{build_oblivious_tree, split_gain_better, Level, ObliviousTree, TreeBuild, TIE_EPS};

use crate::{Error, Result};

/// Clamp applied to probabilities before taking logs in [`llp`].
pub const LLP_CLIP: f64 = 1e-15;

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow or cancellation.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// −y·log σ(F) − (1−y)·log(1−σ(F)), written as y·softplus(−F) +
/// (1−y)·softplus(F) so neither term cancels.
pub fn logloss(y: f64, f: f64) -> f64 {
    let mut l = 0.0;
    if y != 0.0 {
        l += y * softplus(-f);
    }
    if y != 1.0 {
        l += (1.0 - y) * softplus(f);
    }
    l
}

/// Negative gradient of [`logloss`] in F.
pub fn pseudo_residual(y: f64, f: f64) -> f64 {
    y - sigmoid(f)
}

/// Normalized log-likelihood gain of `preds` over the best constant
/// prediction (the positive rate), divided by the number of positives.
pub fn llp(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::SchemaMismatch {
            expected: labels.len(),
            got: preds.len(),
        });
    }
    let pos = labels.iter().filter(|&&c| c == 1).count();
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    let pc = pos as f64 / labels.len() as f64;
    let ll = |q: f64, c: u8| {
        let q = q.clamp(LLP_CLIP, 1.0 - LLP_CLIP);
        if c == 1 {
            q.ln()
        } else {
            (-q).ln_1p()
        }
    };
    let mut diff = 0.0;
    for (&p, &c) in preds.iter().zip(labels) {
        diff += ll(p, c) - ll(pc, c);
    }
    Ok(diff / pos as f64)
}
