use rand::seq::index;
use rayon::prelude::*;

use super::pool::{BinnedPool, Binning, TrainPool};
use super::tree::{build_oblivious_tree, ObliviousTree};
use super::{llp, logloss, pseudo_residual, sigmoid};
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GbmTrainConfig {
    pub iterations: usize,
    pub shrinkage: f64,
    pub depth: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub bins: usize,
    /// Use every distinct-value midpoint instead of histogram borders.
    pub exact: bool,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbmTrainConfig {
    fn default() -> Self {
        GbmTrainConfig {
            iterations: 200,
            shrinkage: 0.01,
            depth: 6,
            subsample: 0.5,
            bins: 32,
            exact: false,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl GbmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("gbm: {m}")));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad("shrinkage must lie in (0, 1]");
        }
        if !(1..=16).contains(&self.depth) {
            return bad("depth must lie in [1, 16]");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if self.bins < 2 {
            return bad("bins must be >= 2");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be >= 1");
        }
        Ok(())
    }

    pub fn binning(&self) -> Binning {
        if self.exact {
            Binning::Exact
        } else {
            Binning::Histogram(self.bins)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ImportanceKind {
    /// Share of (non-no-op) tree levels splitting on the feature.
    #[default]
    Frequency,
    /// Share of total split gain.
    Gain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbmModel {
    pub initial_score: f64,
    pub shrinkage: f64,
    pub depth: usize,
    pub n_features: usize,
    pub schema_hash: String,
    pub trees: Vec<ObliviousTree>,
}

impl GbmModel {
    /// Score with no trees: every prediction is σ(`initial_score`).
    pub fn constant(initial_score: f64, shrinkage: f64, depth: usize, n_features: usize) -> Self {
        GbmModel {
            initial_score,
            shrinkage,
            depth,
            n_features,
            schema_hash: String::new(),
            trees: Vec::new(),
        }
    }

    pub fn with_schema_hash(mut self, hash: impl Into<String>) -> Self {
        self.schema_hash = hash.into();
        self
    }

    /// First `m` trees only.
    pub fn truncated(&self, m: usize) -> GbmModel {
        GbmModel {
            trees: self.trees[..m.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    /// F = F₀ + γ·h₁(x) + … + γ·h_m(x), accumulated tree by tree in the
    /// same order as training.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self
            .trees
            .iter()
            .fold(self.initial_score, |f, t| f + self.shrinkage * t.value(x)))
    }

    /// (score, probability).
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let f = self.score(x)?;
        Ok((f, sigmoid(f)))
    }

    pub fn predict_pool(&self, pool: &TrainPool) -> Result<Vec<f64>> {
        (0..pool.len()).into_par_iter().map(|i| self.predict(pool.row(i)).map(|p| p.1)).collect()
    }

    pub fn feature_importance(&self, kind: ImportanceKind) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for l in self.trees.iter().flat_map(|t| &t.levels).filter(|l| !l.is_noop()) {
            imp[l.feature] += match kind {
                ImportanceKind::Frequency => 1.0,
                ImportanceKind::Gain => l.gain,
            };
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: GbmModel,
    /// Mean train logloss of the constant model.
    pub initial_loss: f64,
    /// Mean train logloss after each iteration (all rows).
    pub train_loss: Vec<f64>,
    /// LLP on the training pool after each iteration.
    pub train_llp: Vec<f64>,
    /// LLP on the evaluation pool after each iteration, when one was given.
    pub eval_llp: Vec<f64>,
}

pub fn fit(pool: &TrainPool, cfg: &GbmTrainConfig) -> Result<GbmModel> {
    fit_with_eval(pool, None, cfg).map(|r| r.model)
}

fn mean_loss(labels: &[u8], f: &[f64]) -> f64 {
    labels.iter().zip(f).map(|(&y, &s)| logloss(y as f64, s)).sum::<f64>() / labels.len() as f64
}

/// Stochastic gradient boosting from F₀ = log(pos/neg). Each iteration
/// draws a subsample, fits a tree to the residuals at the current scores
/// and moves every row's score by γ times its leaf value.
pub fn fit_with_eval(pool: &TrainPool, eval: Option<&TrainPool>, cfg: &GbmTrainConfig) -> Result<FitReport> {
    cfg.validate()?;
    let n = pool.len();
    let pos = pool.n_positive();
    if pos == 0 || pos == n {
        return Err(Error::SingleClassPool);
    }
    if let Some(e) = eval {
        if e.n_features() != pool.n_features() {
            return Err(Error::SchemaMismatch {
                expected: pool.n_features(),
                got: e.n_features(),
            });
        }
    }
    let f0 = (pos as f64 / (n - pos) as f64).ln();
    let mut model = GbmModel::constant(f0, cfg.shrinkage, cfg.depth, pool.n_features());
    let data = BinnedPool::new(pool, cfg.binning());
    let labels = pool.labels();
    let mut scores = vec![f0; n];
    let mut eval_scores = eval.map(|e| vec![f0; e.len()]);
    let mut rng = substream(cfg.seed, "gbm/subsample");
    let k = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let mut residuals = vec![0.0; n];
    let mut report = FitReport {
        initial_loss: mean_loss(labels, &scores),
        train_loss: Vec::with_capacity(cfg.iterations),
        train_llp: Vec::with_capacity(cfg.iterations),
        eval_llp: Vec::new(),
        model: model.clone(),
    };
    for _ in 0..cfg.iterations {
        let active: Vec<u32> = if k == n {
            (0..n as u32).collect()
        } else {
            let mut a: Vec<u32> = index::sample(&mut rng, n, k).into_iter().map(|i| i as u32).collect();
            a.sort_unstable();
            a
        };
        for &i in &active {
            residuals[i as usize] = pseudo_residual(labels[i as usize] as f64, scores[i as usize]);
        }
        let built = build_oblivious_tree(&data, &residuals, &active, cfg.depth, cfg.min_samples_leaf);
        scores.par_iter_mut().enumerate().for_each(|(i, s)| {
            *s += cfg.shrinkage * built.tree.leaves[built.leaf_of_row(&data, i)];
        });
        report.train_loss.push(mean_loss(labels, &scores));
        let p: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        report.train_llp.push(llp(&p, labels)?);
        if let (Some(e), Some(es)) = (eval, eval_scores.as_mut()) {
            es.par_iter_mut().enumerate().for_each(|(i, s)| {
                *s += cfg.shrinkage * built.tree.value(e.row(i));
            });
            let p: Vec<f64> = es.iter().map(|&s| sigmoid(s)).collect();
            report.eval_llp.push(llp(&p, e.labels()).unwrap_or(f64::NAN));
        }
        model.trees.push(built.tree);
    }
    report.model = model;
    Ok(report)
}
