//! Statistical-aggregate features over event logs.
//!
//! A tracker counts the events matching an action filter for a tuple of
//! dimension values (shop, user, brand, price bin, ...), optionally within a
//! rolling window, or measures the time since the first/latest such event.
//! Normalized trackers divide two counts. Aggregation runs once per window
//! position as a map-reduce pass; lookups then assemble fixed-order feature
//! vectors for (user, offer) pairs.

mod bins;
mod features;
mod key;
mod schema;
mod store;

pub use bins::{price_bin, RegionBin, RegionBins, PRICE_BINS};
pub use features::{FeatureVector, Featurizer};
pub use key::{
    parse_spec_line, ActionFilter, Dim, DimSet, SpecLine, TimeStat, TrackerKey, TrackerKind, TrackerSpec,
    Window,
};
pub use schema::{
    default_schema_text, restricted_mask, Feature, FeatureSchema, FeatureType, DEFAULT_TRACKER_FEATURES,
    PATTERN_FEATURE,
};
pub use store::{aggregate, aggregate_sharded, required_dim_sets, Aggregate, TrackerStore};
