//! Session segmentation and distributed-memory offer embeddings.
//!
//! A user's history in a shop is cut into δ-distant sessions: an event joins
//! the current session when it follows the previous event by at most δ
//! seconds, otherwise it opens a new one. Sessions act as documents and
//! offers as words for a paragraph-vector (distributed memory) model trained
//! with negative sampling. A user's most recent session is summarized as
//! the mean of its offer vectors; the cosine between that mean and a
//! candidate offer's vector is the pattern feature.

mod io;
mod model;
mod train;

use std::collections::BTreeMap;

use crate::datamodel::{EventLog, OfferId, ShopId, Timestamp, UserId};

pub use io::{read_model, write_model, MODEL_VERSION};
pub use model::{cosine, EmbeddingModel};
pub use train::{
    dm_gradients, dm_loss, dm_score, dm_sgd_step, train_dm, train_dm_sessions, DmGradients, DmTrainConfig,
    DmTrainResult, NoiseTable, StepStats, TrainingDoc,
};

/// Default session gap δ in seconds.
pub const DEFAULT_SESSION_GAP: u64 = 1800;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub user: UserId,
    pub shop: ShopId,
    /// Position of this session among the user's sessions in the shop.
    pub index: usize,
    pub offers: Vec<(OfferId, Timestamp)>,
}

impl Session {
    pub fn offer_ids(&self) -> impl Iterator<Item = OfferId> + '_ {
        self.offers.iter().map(|(o, _)| *o)
    }
}

/// Greedy left-to-right δ-gap segmentation of one ordered history.
pub fn segment_sessions(history: &[(OfferId, Timestamp)], delta: u64) -> Vec<Vec<(OfferId, Timestamp)>> {
    let mut sessions: Vec<Vec<(OfferId, Timestamp)>> = Vec::new();
    let mut prev: Option<Timestamp> = None;
    for &(offer, ts) in history {
        match prev {
            Some(p) if ts <= p.saturating_add(delta) => sessions.last_mut().unwrap().push((offer, ts)),
            _ => sessions.push(vec![(offer, ts)]),
        }
        prev = Some(ts);
    }
    sessions
}

/// Segments every (user, shop) history of `log`. Output is ordered by
/// (user, shop, session index).
pub fn sessions_from_log(log: &EventLog, delta: u64) -> Vec<Session> {
    let mut histories: BTreeMap<(UserId, ShopId), Vec<(OfferId, Timestamp)>> = BTreeMap::new();
    for e in log {
        histories.entry((e.user, e.shop)).or_default().push((e.offer, e.ts));
    }
    let mut out = Vec::new();
    for ((user, shop), h) in histories {
        for (index, offers) in segment_sessions(&h, delta).into_iter().enumerate() {
            out.push(Session {
                user,
                shop,
                index,
                offers,
            });
        }
    }
    out
}

/// Most recent session per (user, shop).
pub fn last_sessions(log: &EventLog, delta: u64) -> BTreeMap<(UserId, ShopId), Session> {
    let mut out = BTreeMap::new();
    for s in sessions_from_log(log, delta) {
        out.insert((s.user, s.shop), s);
    }
    out
}
