//! Recommendation pipeline combining statistical-aggregate features
//! ("trackers"), session-trained offer embeddings and a gradient-boosted
//! oblivious-tree click classifier.
//!
//! The crate is organised bottom-up:
//!
//! * [`datamodel`] holds events, catalogs, log I/O, the synthetic corpus
//!   generator and the past/future window split.
//! * [`trackers`] computes keyed aggregates map-reduce style and turns them
//!   into per-(user, offer) feature vectors.
//! * [`offer2vec`] segments histories into sessions and trains a
//!   distributed-memory paragraph-vector model over them.
//! * [`gbm`] fits oblivious decision trees on logistic-loss residuals.
//! * [`pipeline`] wires the above into pool construction, candidate
//!   generation, top-10 recommendation and DCG evaluation.

pub mod datamodel;
pub mod error;
pub mod gbm;
pub mod offer2vec;
pub mod pipeline;
pub mod rng;
pub mod trackers;

pub use datamodel::{
    Action, Catalog, Event, EventLog, OfferId, OfferMeta, RegionId, ShopId, SynthConfig,
    TimeWindow, UserId,
};
pub use error::{Error, Result};
pub use gbm::{GbmModel, GbmTrainConfig, ObliviousTree, TrainPool};
pub use offer2vec::{DmTrainConfig, EmbeddingModel, Session};
pub use trackers::{FeatureSchema, FeatureVector, TrackerKey, TrackerSpec, TrackerStore};

/// Marker stored in feature vectors for values that are unavailable.
pub const MISSING: f64 = f64::NAN;

/// Returns true when `v` carries the missing marker.
#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}
