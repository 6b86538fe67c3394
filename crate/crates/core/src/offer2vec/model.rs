use std::collections::HashMap;

use crate::datamodel::OfferId;
use crate::{Error, Result, MISSING};

/// Offer (input and output side) and training-session vectors.
///
/// Rows are stored flat, `dim` values per row, in vocabulary order; the
/// vocabulary is sorted by offer id. Session vectors exist only for the
/// documents seen in training and are not persisted.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    pub(crate) dim: usize,
    pub(crate) window: usize,
    pub(crate) vocab: Vec<OfferId>,
    pub(crate) counts: Vec<u64>,
    pub(crate) index: HashMap<OfferId, usize>,
    pub(crate) input: Vec<f64>,
    pub(crate) output: Vec<f64>,
    pub(crate) sessions: Vec<f64>,
}

impl EmbeddingModel {
    /// Builds a model from explicit rows. `rows` are `(offer, count, input, output)`.
    pub fn from_rows(dim: usize, window: usize, mut rows: Vec<(OfferId, u64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dim must be >= 1".into()));
        }
        rows.sort_by_key(|r| r.0);
        let mut m = EmbeddingModel {
            dim,
            window,
            vocab: Vec::with_capacity(rows.len()),
            counts: Vec::with_capacity(rows.len()),
            index: HashMap::with_capacity(rows.len()),
            input: Vec::with_capacity(rows.len() * dim),
            output: Vec::with_capacity(rows.len() * dim),
            sessions: Vec::new(),
        };
        for (offer, count, inp, out) in rows {
            if inp.len() != dim || out.len() != dim {
                return Err(Error::Arity {
                    expected: dim,
                    got: inp.len().min(out.len()),
                });
            }
            if m.index.insert(offer, m.vocab.len()).is_some() {
                return Err(Error::Config(format!("duplicate offer {offer} in embedding rows")));
            }
            m.vocab.push(offer);
            m.counts.push(count);
            m.input.extend(inp);
            m.output.extend(out);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vocab(&self) -> &[OfferId] {
        &self.vocab
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn count(&self, offer: OfferId) -> Option<u64> {
        self.index.get(&offer).map(|&i| self.counts[i])
    }

    pub fn slot(&self, offer: OfferId) -> Option<usize> {
        self.index.get(&offer).copied()
    }

    pub fn n_sessions(&self) -> usize {
        self.sessions.len() / self.dim
    }

    pub fn offer_vector(&self, offer: OfferId) -> Option<&[f64]> {
        self.slot(offer).map(|i| self.input_row(i))
    }

    pub fn output_vector(&self, offer: OfferId) -> Option<&[f64]> {
        self.slot(offer).map(|i| self.output_row(i))
    }

    pub fn session_row(&self, doc: usize) -> &[f64] {
        &self.sessions[doc * self.dim..(doc + 1) * self.dim]
    }

    /// Replaces the training-session vectors; `flat` holds `dim` values per
    /// session.
    pub fn set_session_rows(&mut self, flat: Vec<f64>) -> Result<()> {
        if !flat.len().is_multiple_of(self.dim) {
            return Err(Error::Arity {
                expected: self.dim,
                got: flat.len() % self.dim,
            });
        }
        self.sessions = flat;
        Ok(())
    }

    pub(crate) fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(&self.output).chain(&self.sessions).all(|v| v.is_finite())
    }

    /// Mean input vector of the in-vocabulary offers of a session, or `None`
    /// when every offer is out of vocabulary.
    pub fn session_vector<I>(&self, offers: I) -> Option<Vec<f64>>
    where
        I: IntoIterator<Item = OfferId>,
    {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for o in offers {
            if let Some(v) = self.offer_vector(o) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        let inv = n as f64;
        acc.iter_mut().for_each(|a| *a /= inv);
        Some(acc)
    }

    /// Cosine between the recent-session vector and the candidate's input
    /// vector; `MISSING` when either is unavailable or has zero norm.
    pub fn pattern_feature<I>(&self, recent_session: I, candidate: OfferId) -> f64
    where
        I: IntoIterator<Item = OfferId>,
    {
        let Some(c) = self.offer_vector(candidate) else {
            return MISSING;
        };
        match self.session_vector(recent_session) {
            Some(s) => cosine(&s, c),
            None => MISSING,
        }
    }

    /// Merges models over disjoint vocabularies (per-shop training). The
    /// first model wins on overlap. Session vectors are concatenated.
    pub fn merge(parts: Vec<EmbeddingModel>) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyCorpus)?;
        let (dim, window) = (first.dim, first.window);
        let mut rows = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut sessions = Vec::new();
        for p in &parts {
            if p.dim != dim {
                return Err(Error::Arity {
                    expected: dim,
                    got: p.dim,
                });
            }
            for (i, &o) in p.vocab.iter().enumerate() {
                if seen.insert(o) {
                    rows.push((o, p.counts[i], p.input_row(i).to_vec(), p.output_row(i).to_vec()));
                }
            }
            sessions.extend_from_slice(&p.sessions);
        }
        let mut m = EmbeddingModel::from_rows(dim, window, rows)?;
        m.sessions = sessions;
        Ok(m)
    }
}

/// Cosine similarity clamped to [−1, 1]; `MISSING` on a zero-norm side.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return MISSING;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}
