//! Per-(user, offer) feature vectors assembled from store lookups.

use super::bins::price_bin;
use super::key::{ActionFilter, Dim, DimSet, TrackerKey, TrackerKind, Window};
use super::schema::{Feature, FeatureSchema};
use super::store::{ratio, TrackerStore};
use crate::datamodel::{Catalog, OfferId, UserId};
use crate::error::{Error, Result};
use crate::MISSING;

/// Values in schema order. Missing entries hold [`MISSING`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Bitwise equality, treating every NaN payload as equal to itself.
    pub fn same_bits(&self, other: &FeatureVector) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Clone, Debug)]
struct Term {
    group: usize,
    dims: Vec<Dim>,
    action: ActionFilter,
    window: Window,
}

#[derive(Clone, Debug)]
enum Plan {
    Count(Term),
    Ratio(Term, Term),
    Delta(usize, Vec<Dim>, TrackerKey),
    Pattern,
}

/// Resolved lookup plan for a schema against one store.
pub struct Featurizer<'a> {
    schema: &'a FeatureSchema,
    store: &'a TrackerStore,
    catalog: &'a Catalog,
    plans: Vec<Plan>,
}

struct Subject {
    user: UserId,
    offer_pos: usize,
    region_bin: u64,
}

impl<'a> Featurizer<'a> {
    pub fn new(schema: &'a FeatureSchema, store: &'a TrackerStore, catalog: &'a Catalog) -> Result<Self> {
        let term = |k: &TrackerKey| -> Result<Term> {
            Ok(Term {
                group: group_of(store, &k.dims)?,
                dims: k.dims.dims().to_vec(),
                action: k.action,
                window: k.effective_window(),
            })
        };
        let plans = schema
            .features()
            .iter()
            .map(|f| match f {
                Feature::Pattern => Ok(Plan::Pattern),
                Feature::Tracker(spec) => match &spec.kind {
                    TrackerKind::Count(k) => Ok(Plan::Count(term(k)?)),
                    TrackerKind::Ratio(n, d) => Ok(Plan::Ratio(term(n)?, term(d)?)),
                    TrackerKind::TimeDelta(k) => Ok(Plan::Delta(
                        group_of(store, &k.dims)?,
                        k.dims.dims().to_vec(),
                        k.clone(),
                    )),
                },
            })
            .collect::<Result<_>>()?;
        Ok(Featurizer {
            schema,
            store,
            catalog,
            plans,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.schema
    }

    pub fn store(&self) -> &TrackerStore {
        self.store
    }

    fn subject(&self, user: UserId, offer: OfferId) -> Result<Subject> {
        let offer_pos = self
            .catalog
            .position(offer)
            .ok_or(Error::UnknownOffer(offer.0))?;
        Ok(Subject {
            user,
            offer_pos,
            region_bin: self.store.user_region_bin(user) as u64,
        })
    }

    fn dim_value(&self, d: Dim, s: &Subject) -> Option<u64> {
        let meta = &self.catalog.offers()[s.offer_pos];
        match d {
            Dim::ShopId => Some(meta.shop.0),
            Dim::UserId => Some(s.user.0),
            Dim::OfferId => Some(meta.offer.0),
            Dim::OfferBrand => Some(self.catalog.brand_code(s.offer_pos)),
            Dim::OfferNameCat => self.catalog.cat_codes(s.offer_pos).first().copied(),
            Dim::MarketModel => Some(meta.market_model),
            Dim::MarketCategory => Some(meta.market_category),
            Dim::MarketVendor => Some(meta.market_vendor),
            Dim::RegionBin => Some(s.region_bin),
            Dim::PriceBin => price_bin(meta.price),
        }
    }

    fn tuple(&self, dims: &[Dim], s: &Subject, buf: &mut Vec<u64>) -> bool {
        buf.clear();
        for &d in dims {
            match self.dim_value(d, s) {
                Some(v) => buf.push(v),
                None => return false,
            }
        }
        true
    }

    fn count(&self, t: &Term, s: &Subject, buf: &mut Vec<u64>) -> Option<u64> {
        if !self.tuple(&t.dims, s, buf) {
            return None;
        }
        Some(
            self.store
                .aggregate_at(t.group, buf)
                .map_or(0, |a| a.count(t.action, t.window)),
        )
    }

    fn value(&self, plan: &Plan, s: &Subject, pattern: f64, buf: &mut Vec<u64>) -> f64 {
        match plan {
            Plan::Pattern => pattern,
            Plan::Count(t) => self.count(t, s, buf).map_or(MISSING, |c| c as f64),
            Plan::Ratio(n, d) => match (self.count(n, s, buf), self.count(d, s, buf)) {
                (Some(n), Some(d)) => ratio(n, d),
                _ => MISSING,
            },
            Plan::Delta(group, dims, key) => {
                if !self.tuple(dims, s, buf) {
                    return MISSING;
                }
                self.store.time_delta(key, self.store.aggregate_at(*group, buf))
            }
        }
    }

    /// Full vector for `(user, offer)` with the given pattern value.
    pub fn feature_vector(&self, user: UserId, offer: OfferId, pattern: f64) -> Result<FeatureVector> {
        let s = self.subject(user, offer)?;
        let mut buf = Vec::with_capacity(4);
        Ok(FeatureVector(
            self.plans
                .iter()
                .map(|p| self.value(p, &s, pattern, &mut buf))
                .collect(),
        ))
    }

    /// Writes only the features whose `mask` entry is set; the rest of `out`
    /// is left untouched.
    pub fn fill_masked(
        &self,
        user: UserId,
        offer: OfferId,
        pattern: f64,
        mask: &[bool],
        out: &mut [f64],
    ) -> Result<()> {
        let s = self.subject(user, offer)?;
        let mut buf = Vec::with_capacity(4);
        for ((p, &m), o) in self.plans.iter().zip(mask).zip(out.iter_mut()) {
            if m {
                *o = self.value(p, &s, pattern, &mut buf);
            }
        }
        Ok(())
    }
}

fn group_of(store: &TrackerStore, dims: &DimSet) -> Result<usize> {
    store
        .group_index(dims)
        .ok_or_else(|| Error::Schema(format!("dimension set [{dims}] was not aggregated")))
}
