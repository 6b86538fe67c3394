use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use super::context::ScoringContext;
use super::popular::PopularityIndex;
use crate::datamodel::{OfferId, ShopId, UserId};
use crate::gbm::{GbmModel, ImportanceKind};
use crate::trackers::{restricted_mask, FeatureSchema};
use crate::{Error, Result, MISSING};

/// Rank discount base in DCG.
pub const DCG_DISCOUNT: f64 = 0.85;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Popular,
    Personalized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub user: UserId,
    pub shop: ShopId,
    pub offers: Vec<OfferId>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendationList {
    pub user: UserId,
    pub ranked: Vec<(OfferId, f64)>,
}

impl RecommendationList {
    pub fn offers(&self) -> impl Iterator<Item = OfferId> + '_ {
        self.ranked.iter().map(|(o, _)| *o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateConfig {
    pub k_init: usize,
    pub k_final: usize,
    pub n_pers: usize,
}

/// Probability descending, then offer id ascending: a total order, so the
/// ranking does not depend on input order.
pub fn by_probability(a: &(OfferId, f64), b: &(OfferId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `n_pers` personalized features with the highest importance (ties by
/// schema position).
pub fn top_personalized(schema: &FeatureSchema, model: &GbmModel, n_pers: usize) -> Vec<usize> {
    let imp = model.feature_importance(ImportanceKind::Frequency);
    let mut pers: Vec<usize> = (0..schema.len()).filter(|&i| schema.features()[i].is_personalized()).collect();
    pers.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    pers.truncate(n_pers);
    pers.sort_unstable();
    pers
}

/// Per-shop popular offers with their user-independent feature values
/// precomputed; personalized columns hold the missing marker.
struct ShopBase {
    offers: Vec<OfferId>,
    rows: Vec<Vec<f64>>,
}

/// Three-step candidate funnel: the shop's `k_init` most popular offers are
/// scored with the non-personalized features plus the `n_pers` most
/// important personalized ones, and the best `k_final` unseen offers kept.
pub struct CandidateGenerator<'a> {
    ctx: &'a ScoringContext<'a>,
    model: &'a GbmModel,
    cfg: CandidateConfig,
    kept: Vec<usize>,
    user_mask: Vec<bool>,
    bases: BTreeMap<ShopId, ShopBase>,
}

impl<'a> CandidateGenerator<'a> {
    pub fn new(
        ctx: &'a ScoringContext<'a>,
        model: &'a GbmModel,
        popular: &PopularityIndex,
        cfg: CandidateConfig,
    ) -> Result<Self> {
        if model.trees.is_empty() {
            return Err(Error::UntrainedModel);
        }
        let schema = ctx.schema();
        if model.n_features != schema.len() {
            return Err(Error::SchemaMismatch {
                expected: schema.len(),
                got: model.n_features,
            });
        }
        let kept = top_personalized(schema, model, cfg.n_pers);
        let user_mask: Vec<bool> = (0..schema.len()).map(|i| kept.contains(&i)).collect();
        let shared: Vec<bool> = restricted_mask(schema, &[]);
        let mut bases = BTreeMap::new();
        for shop in popular.shops() {
            let offers = popular.top(shop, cfg.k_init)?;
            let rows = offers
                .iter()
                .map(|&o| {
                    let mut row = vec![MISSING; schema.len()];
                    // user id is irrelevant for the shared columns
                    ctx.fill_masked(UserId(u64::MAX), o, &shared, &mut row)?;
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            bases.insert(shop, ShopBase { offers, rows });
        }
        Ok(CandidateGenerator {
            ctx,
            model,
            cfg,
            kept,
            user_mask,
            bases,
        })
    }

    /// Indices of the personalized features used in the restricted view.
    pub fn personalized_features(&self) -> &[usize] {
        &self.kept
    }

    /// Restricted-view probabilities of the shop's popular offers for `user`,
    /// in popularity order.
    pub fn restricted_scores(&self, user: UserId, shop: ShopId) -> Result<Vec<(OfferId, f64)>> {
        let base = self.bases.get(&shop).ok_or(Error::UnknownShop(shop.0))?;
        let mut row = Vec::new();
        base.offers
            .iter()
            .zip(&base.rows)
            .map(|(&o, shared)| {
                row.clear();
                row.extend_from_slice(shared);
                if !self.kept.is_empty() {
                    self.ctx.fill_masked(user, o, &self.user_mask, &mut row)?;
                }
                Ok((o, self.model.predict(&row)?.1))
            })
            .collect()
    }

    pub fn generate(&self, user: UserId, shop: ShopId, seen: &HashSet<OfferId>) -> Result<CandidateSet> {
        let mut scored = self.restricted_scores(user, shop)?;
        scored.retain(|(o, _)| !seen.contains(o));
        scored.sort_by(by_probability);
        scored.truncate(self.cfg.k_final);
        Ok(CandidateSet {
            user,
            shop,
            offers: scored.into_iter().map(|(o, _)| o).collect(),
            provenance: Provenance::Personalized,
        })
    }
}

/// The `k` most popular unseen offers of the shop.
pub fn popular_candidates(
    popular: &PopularityIndex,
    user: UserId,
    shop: ShopId,
    k: usize,
    seen: &HashSet<OfferId>,
) -> Result<CandidateSet> {
    let offers = popular
        .ranked(shop)?
        .iter()
        .map(|&(o, _)| o)
        .filter(|o| !seen.contains(o))
        .take(k)
        .collect();
    Ok(CandidateSet {
        user,
        shop,
        offers,
        provenance: Provenance::Popular,
    })
}

/// Scores every candidate with the full feature vector and keeps the top `k`.
pub fn recommend(
    candidates: &CandidateSet,
    ctx: &ScoringContext,
    model: &GbmModel,
    k: usize,
) -> Result<RecommendationList> {
    if candidates.offers.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scored = candidates
        .offers
        .iter()
        .map(|&o| {
            let x = ctx.features(candidates.user, o)?;
            Ok((o, model.predict(&x.0)?.1))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(by_probability);
    scored.truncate(k);
    Ok(RecommendationList {
        user: candidates.user,
        ranked: scored,
    })
}

/// Σ 0.85^(i−1)·rel_i over 1-based ranks with binary relevance.
pub fn dcg<I>(ranked: I, relevant: &HashSet<OfferId>) -> f64
where
    I: IntoIterator<Item = OfferId>,
{
    ranked
        .into_iter()
        .enumerate()
        .filter(|(_, o)| relevant.contains(o))
        .map(|(i, _)| DCG_DISCOUNT.powi(i as i32))
        .sum()
}
