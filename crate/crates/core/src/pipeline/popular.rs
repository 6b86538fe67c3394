use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::Rng;

use crate::datamodel::{OfferId, ShopId};
use crate::trackers::{ActionFilter, Dim, DimSet, TrackerKey, TrackerKind, TrackerSpec, TrackerStore, Window};
use crate::{Error, Result};

/// The all-time any-action count per (shop, offer) that ranks popularity.
pub fn popularity_spec() -> TrackerSpec {
    let dims = DimSet::new(vec![Dim::ShopId, Dim::OfferId]).expect("static dims");
    TrackerSpec::new(TrackerKind::Count(TrackerKey::count(ActionFilter::Any, dims, Window::AllTime)))
        .expect("static spec")
}

/// Offers of every shop ordered by all-time any-action count (descending),
/// ties by ascending offer id.
#[derive(Clone, Debug, PartialEq)]
pub struct PopularityIndex {
    by_shop: BTreeMap<ShopId, Vec<(OfferId, u64)>>,
}

impl PopularityIndex {
    pub fn new(store: &TrackerStore) -> Result<Self> {
        let spec = popularity_spec();
        let dims = spec.lookup_dims();
        let mut by_shop: BTreeMap<ShopId, Vec<(OfferId, u64)>> = BTreeMap::new();
        for (tuple, agg) in store.entries(dims)? {
            let n = agg.count(ActionFilter::Any, Window::AllTime);
            if n > 0 {
                by_shop.entry(ShopId(tuple[0])).or_default().push((OfferId(tuple[1]), n));
            }
        }
        for v in by_shop.values_mut() {
            v.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        }
        Ok(PopularityIndex { by_shop })
    }

    pub fn shops(&self) -> impl Iterator<Item = ShopId> + '_ {
        self.by_shop.keys().copied()
    }

    pub fn ranked(&self, shop: ShopId) -> Result<&[(OfferId, u64)]> {
        self.by_shop.get(&shop).map(Vec::as_slice).ok_or(Error::UnknownShop(shop.0))
    }

    pub fn top(&self, shop: ShopId, n: usize) -> Result<Vec<OfferId>> {
        Ok(self.ranked(shop)?.iter().take(n).map(|&(o, _)| o).collect())
    }
}

pub fn top_popular(store: &TrackerStore, shop: ShopId, n: usize) -> Result<Vec<OfferId>> {
    PopularityIndex::new(store)?.top(shop, n)
}

/// Up to `n` distinct offers drawn uniformly without replacement from
/// `popular`, never the positive itself nor anything in `exclude`.
pub fn sample_negatives<R: Rng>(
    positive: OfferId,
    popular: &[OfferId],
    n: usize,
    exclude: &HashSet<OfferId>,
    rng: &mut R,
) -> Vec<OfferId> {
    let eligible: Vec<OfferId> = popular
        .iter()
        .copied()
        .filter(|o| *o != positive && !exclude.contains(o))
        .collect();
    let k = n.min(eligible.len());
    index::sample(rng, eligible.len(), k).into_iter().map(|i| eligible[i]).collect()
}
