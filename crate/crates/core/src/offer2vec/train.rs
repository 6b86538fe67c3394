use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::EmbeddingModel;
use super::Session;
use crate::datamodel::OfferId;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DmTrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub min_alpha: f64,
    pub noise_exponent: f64,
    pub min_count: u64,
    /// Train one model per shop (sessions never cross shops) and merge.
    pub per_shop: bool,
    pub seed: u64,
}

impl Default for DmTrainConfig {
    fn default() -> Self {
        DmTrainConfig {
            dim: 64,
            window: 2,
            negatives: 5,
            epochs: 10,
            alpha: 0.025,
            min_alpha: 0.0001,
            noise_exponent: 0.75,
            min_count: 2,
            per_shop: true,
            seed: 0,
        }
    }
}

impl DmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("offer2vec: {m}")));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.min_alpha >= 0.0 && self.min_alpha <= self.alpha) {
            return bad("min_alpha must lie in [0, alpha]");
        }
        if !self.noise_exponent.is_finite() {
            return bad("noise exponent must be finite");
        }
        Ok(())
    }
}

/// A training session as vocabulary slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingDoc {
    pub words: Vec<usize>,
}

/// Unigram^exponent sampling table over vocabulary slots.
#[derive(Clone, Debug)]
pub struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub fn new(counts: &[u64], exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(exponent);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty noise table");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }

    /// Draws `n` negatives, redrawing (a bounded number of times) when the
    /// draw hits the target itself.
    pub fn draw_negatives<R: Rng>(&self, rng: &mut R, target: usize, n: usize, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..n {
            let mut s = self.sample(rng);
            let mut tries = 0;
            while s == target && tries < 16 && self.cumulative.len() > 1 {
                s = self.sample(rng);
                tries += 1;
            }
            out.push(s);
        }
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // log σ(x) = −softplus(−x)
    let z = -x;
    -(z.max(0.0) + (-z.abs()).exp().ln_1p())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Context positions of `t`: up to `k` on each side, clipped at the session
/// boundaries.
pub(crate) fn context_of(words: &[usize], t: usize, k: usize) -> Vec<usize> {
    let lo = t.saturating_sub(k);
    let hi = (t + k).min(words.len() - 1);
    (lo..=hi).filter(|&j| j != t).map(|j| words[j]).collect()
}

fn hidden(model: &EmbeddingModel, context: &[usize], doc: usize) -> Vec<f64> {
    let mut h = model.session_row(doc).to_vec();
    for &c in context {
        for (a, x) in h.iter_mut().zip(model.input_row(c)) {
            *a += x;
        }
    }
    let m = (context.len() + 1) as f64;
    h.iter_mut().for_each(|a| *a /= m);
    h
}

/// log σ(h · W′[target]) with h the mean of the context input vectors and
/// the session vector.
pub fn dm_score(model: &EmbeddingModel, context: &[OfferId], doc: usize, target: OfferId) -> Result<f64> {
    let slot = |o: OfferId| model.slot(o).ok_or(Error::OutOfVocab(o.0));
    let ctx = context.iter().map(|&o| slot(o)).collect::<Result<Vec<_>>>()?;
    let t = slot(target)?;
    let h = hidden(model, &ctx, doc);
    Ok(log_sigmoid(dot(&h, model.output_row(t))))
}

/// Negative-sampling loss of one target:
/// −log σ(h·W′[target]) − Σ log σ(−h·W′[neg]).
pub fn dm_loss(model: &EmbeddingModel, context: &[usize], doc: usize, target: usize, negatives: &[usize]) -> f64 {
    let h = hidden(model, context, doc);
    let mut loss = -log_sigmoid(dot(&h, model.output_row(target)));
    for &n in negatives {
        loss -= log_sigmoid(-dot(&h, model.output_row(n)));
    }
    loss
}

/// Gradients of [`dm_loss`] per touched row, keyed by vocabulary slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DmGradients {
    pub loss: f64,
    pub input: BTreeMap<usize, Vec<f64>>,
    pub output: BTreeMap<usize, Vec<f64>>,
    pub session: Vec<f64>,
}

pub fn dm_gradients(
    model: &EmbeddingModel,
    context: &[usize],
    doc: usize,
    target: usize,
    negatives: &[usize],
) -> DmGradients {
    let n = model.dim();
    let h = hidden(model, context, doc);
    let mut g = DmGradients {
        session: vec![0.0; n],
        ..Default::default()
    };
    let mut grad_h = vec![0.0; n];
    let terms = std::iter::once((target, 1.0)).chain(negatives.iter().map(|&s| (s, 0.0)));
    for (slot, label) in terms {
        let v = model.output_row(slot);
        let s = dot(&h, v);
        g.loss -= if label == 1.0 { log_sigmoid(s) } else { log_sigmoid(-s) };
        let coef = sigmoid(s) - label;
        let out = g.output.entry(slot).or_insert_with(|| vec![0.0; n]);
        for i in 0..n {
            out[i] += coef * h[i];
            grad_h[i] += coef * v[i];
        }
    }
    let m = (context.len() + 1) as f64;
    grad_h.iter_mut().for_each(|x| *x /= m);
    for &c in context {
        let row = g.input.entry(c).or_insert_with(|| vec![0.0; n]);
        for i in 0..n {
            row[i] += grad_h[i];
        }
    }
    g.session = grad_h;
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub output_grad_norm: f64,
    pub input_grad_norm: f64,
}

fn norm2<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> f64 {
    rows.flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// One SGD step on the target at position `t` of `words` (session `doc`).
/// Gradients are all evaluated at the current parameters and then applied,
/// so the update is exactly −α·∇loss on the touched rows.
pub fn dm_sgd_step(
    model: &mut EmbeddingModel,
    doc: usize,
    words: &[usize],
    t: usize,
    negatives: &[usize],
    alpha: f64,
) -> StepStats {
    let context = context_of(words, t, model.window());
    let g = dm_gradients(model, &context, doc, words[t], negatives);
    let stats = StepStats {
        loss: g.loss,
        output_grad_norm: norm2(g.output.values()),
        input_grad_norm: norm2(g.input.values().chain(std::iter::once(&g.session))),
    };
    if alpha == 0.0 {
        return stats;
    }
    let n = model.dim();
    for (slot, grad) in &g.output {
        let row = &mut model.output[slot * n..(slot + 1) * n];
        row.iter_mut().zip(grad).for_each(|(w, d)| *w -= alpha * d);
    }
    for (slot, grad) in &g.input {
        let row = &mut model.input[slot * n..(slot + 1) * n];
        row.iter_mut().zip(grad).for_each(|(w, d)| *w -= alpha * d);
    }
    let row = &mut model.sessions[doc * n..(doc + 1) * n];
    row.iter_mut().zip(&g.session).for_each(|(w, d)| *w -= alpha * d);
    stats
}

#[derive(Clone, Debug)]
pub struct DmTrainResult {
    pub model: EmbeddingModel,
    /// Mean per-target loss for each epoch.
    pub epoch_loss: Vec<f64>,
    pub targets_per_epoch: usize,
}

/// Trains one model over `docs` (offer sequences). Offers seen fewer than
/// `min_count` times are dropped; sessions left with fewer than two offers
/// are skipped.
pub fn train_dm(docs: &[Vec<OfferId>], cfg: &DmTrainConfig, mut rng: ChaCha8Rng) -> Result<DmTrainResult> {
    cfg.validate()?;
    let mut freq: HashMap<OfferId, u64> = HashMap::new();
    for d in docs {
        for &o in d {
            *freq.entry(o).or_default() += 1;
        }
    }
    // Sessions reduced to frequent offers; the vocabulary is exactly the
    // offers left in sessions that still have two or more of them.
    let kept: Vec<Vec<OfferId>> = docs
        .iter()
        .map(|d| d.iter().copied().filter(|o| freq[o] >= cfg.min_count).collect::<Vec<_>>())
        .filter(|d| d.len() >= 2)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<OfferId, u64> = BTreeMap::new();
    for d in &kept {
        for &o in d {
            *counts.entry(o).or_default() += 1;
        }
    }
    let n = cfg.dim;
    let half = 0.5 / n as f64;
    let rows = counts
        .into_iter()
        .map(|(o, c)| {
            let inp = (0..n).map(|_| rng.random_range(-half..half)).collect();
            (o, c, inp, vec![0.0; n])
        })
        .collect();
    let model = EmbeddingModel::from_rows(n, cfg.window, rows)?;
    let training = kept
        .iter()
        .map(|d| TrainingDoc {
            words: d.iter().map(|o| model.index[o]).collect(),
        })
        .collect();
    train_docs(model, training, cfg, rng)
}

fn train_docs(
    mut model: EmbeddingModel,
    docs: Vec<TrainingDoc>,
    cfg: &DmTrainConfig,
    mut rng: ChaCha8Rng,
) -> Result<DmTrainResult> {
    let n = cfg.dim;
    let half = 0.5 / n as f64;
    model.sessions = (0..docs.len() * n).map(|_| rng.random_range(-half..half)).collect();
    let noise = NoiseTable::new(&model.counts, cfg.noise_exponent);
    let per_epoch: usize = docs.iter().map(|d| d.words.len()).sum();
    let total = (per_epoch * cfg.epochs).max(1) as f64;
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut processed = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for &d in &order {
            let words = &docs[d].words;
            for t in 0..words.len() {
                let alpha = (cfg.alpha - (cfg.alpha - cfg.min_alpha) * processed as f64 / total).max(cfg.min_alpha);
                noise.draw_negatives(&mut rng, words[t], cfg.negatives, &mut negs);
                sum += dm_sgd_step(&mut model, d, words, t, &negs, alpha).loss;
                processed += 1;
            }
        }
        epoch_loss.push(sum / per_epoch as f64);
    }
    Ok(DmTrainResult {
        model,
        epoch_loss,
        targets_per_epoch: per_epoch,
    })
}

/// Trains on segmented sessions. In per-shop mode every shop gets its own
/// model (seeded from the shop id) trained in parallel, and the models are
/// merged in shop order, so the result does not depend on thread count.
pub fn train_dm_sessions(sessions: &[Session], cfg: &DmTrainConfig) -> Result<DmTrainResult> {
    cfg.validate()?;
    if !cfg.per_shop {
        let docs: Vec<Vec<OfferId>> = sessions.iter().map(|s| s.offer_ids().collect()).collect();
        return train_dm(&docs, cfg, substream(cfg.seed, "offer2vec/global"));
    }
    let mut by_shop: BTreeMap<u64, Vec<Vec<OfferId>>> = BTreeMap::new();
    for s in sessions {
        by_shop.entry(s.shop.0).or_default().push(s.offer_ids().collect());
    }
    let parts: Vec<Result<DmTrainResult>> = by_shop
        .par_iter()
        .map(|(shop, docs)| train_dm(docs, cfg, substream(cfg.seed, &format!("offer2vec/shop/{shop}"))))
        .collect();
    let mut models = Vec::new();
    let mut epoch_sum = vec![0.0; cfg.epochs];
    let mut targets = 0usize;
    for p in parts {
        match p {
            Ok(r) => {
                for (acc, l) in epoch_sum.iter_mut().zip(&r.epoch_loss) {
                    *acc += l * r.targets_per_epoch as f64;
                }
                targets += r.targets_per_epoch;
                models.push(r.model);
            }
            Err(Error::EmptyCorpus) => continue,
            Err(e) => return Err(e),
        }
    }
    if models.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(DmTrainResult {
        model: EmbeddingModel::merge(models)?,
        epoch_loss: epoch_sum.into_iter().map(|s| s / targets as f64).collect(),
        targets_per_epoch: targets,
    })
}
