use std::collections::BTreeMap;

use crate::datamodel::{Catalog, OfferId, ShopId, UserId};
use crate::offer2vec::{EmbeddingModel, Session};
use crate::trackers::{FeatureSchema, FeatureVector, Featurizer, TrackerStore};
use crate::{Result, MISSING};

/// Everything needed to featurize (user, offer) pairs at one point in time:
/// the tracker store, the offer embedding and each user's latest session
/// per shop before that point.
pub struct ScoringContext<'a> {
    catalog: &'a Catalog,
    featurizer: Featurizer<'a>,
    embedding: Option<&'a EmbeddingModel>,
    recent: &'a BTreeMap<(UserId, ShopId), Session>,
    has_pattern: bool,
}

impl<'a> ScoringContext<'a> {
    pub fn new(
        schema: &'a FeatureSchema,
        store: &'a TrackerStore,
        catalog: &'a Catalog,
        embedding: Option<&'a EmbeddingModel>,
        recent: &'a BTreeMap<(UserId, ShopId), Session>,
    ) -> Result<Self> {
        Ok(ScoringContext {
            catalog,
            featurizer: Featurizer::new(schema, store, catalog)?,
            embedding,
            recent,
            has_pattern: schema.pattern_index().is_some(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.featurizer.schema()
    }

    pub fn store(&self) -> &TrackerStore {
        self.featurizer.store()
    }

    pub fn catalog(&self) -> &Catalog {
        self.catalog
    }

    /// Cosine between the user's last session in the offer's shop and the
    /// offer. Shops are embedded separately, so sessions in other shops are
    /// not comparable and are ignored.
    pub fn pattern(&self, user: UserId, offer: OfferId) -> f64 {
        let (Some(emb), Some(meta)) = (self.embedding, self.catalog.get(offer)) else {
            return MISSING;
        };
        match self.recent.get(&(user, meta.shop)) {
            Some(s) => emb.pattern_feature(s.offer_ids(), offer),
            None => MISSING,
        }
    }

    pub fn features(&self, user: UserId, offer: OfferId) -> Result<FeatureVector> {
        let p = if self.has_pattern { self.pattern(user, offer) } else { MISSING };
        self.featurizer.feature_vector(user, offer, p)
    }

    pub fn fill_masked(&self, user: UserId, offer: OfferId, mask: &[bool], out: &mut [f64]) -> Result<()> {
        let wants_pattern = self.schema().pattern_index().is_some_and(|i| mask[i]);
        let p = if wants_pattern { self.pattern(user, offer) } else { MISSING };
        self.featurizer.fill_masked(user, offer, p, mask, out)
    }
}
