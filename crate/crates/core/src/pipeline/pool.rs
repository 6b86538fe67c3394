use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::context::ScoringContext;
use super::popular::{sample_negatives, PopularityIndex};
use crate::datamodel::{Action, EventLog, OfferId, ShopId, Timestamp, UserId};
use crate::gbm::TrainPool;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolRow {
    pub user: UserId,
    pub shop: ShopId,
    pub offer: OfferId,
    pub label: u8,
}

#[derive(Clone, Debug)]
pub struct BuiltPool {
    pub rows: Vec<PoolRow>,
    pub pool: TrainPool,
}

/// Rejects stores that have seen anything at or after `boundary`.
pub fn check_no_leakage(ctx: &ScoringContext, boundary: Timestamp) -> Result<()> {
    let store = ctx.store();
    if store.as_of() > boundary {
        return Err(Error::Leakage(format!(
            "tracker store aggregated up to {} but labels start at {boundary}",
            store.as_of()
        )));
    }
    if let Some(ts) = store.max_recorded_ts() {
        if ts >= boundary {
            return Err(Error::Leakage(format!(
                "tracker store holds an event at {ts}, not before the label boundary {boundary}"
            )));
        }
    }
    Ok(())
}

/// One positive row per future click plus up to `n_neg` negatives drawn
/// from the shop's `n_popular` most popular offers, excluding everything
/// the user clicks in the future window. Features come only from `ctx`,
/// which must predate `boundary`.
pub fn build_pool<R: Rng>(
    future: &EventLog,
    ctx: &ScoringContext,
    popular: &PopularityIndex,
    n_popular: usize,
    n_neg: usize,
    boundary: Timestamp,
    rng: &mut R,
) -> Result<BuiltPool> {
    check_no_leakage(ctx, boundary)?;
    if let Some(e) = future.iter().find(|e| e.ts < boundary) {
        return Err(Error::Leakage(format!("label event at {} precedes the boundary {boundary}", e.ts)));
    }
    let mut future_clicks: HashMap<UserId, HashSet<OfferId>> = HashMap::new();
    for e in future.iter().filter(|e| e.action == Action::Click) {
        future_clicks.entry(e.user).or_default().insert(e.offer);
    }
    let mut top_cache: HashMap<ShopId, Vec<OfferId>> = HashMap::new();
    let mut rows = Vec::new();
    for e in future.iter().filter(|e| e.action == Action::Click) {
        rows.push(PoolRow {
            user: e.user,
            shop: e.shop,
            offer: e.offer,
            label: 1,
        });
        let top = match top_cache.get(&e.shop) {
            Some(t) => t,
            None => {
                let t = match popular.top(e.shop, n_popular) {
                    Ok(t) => t,
                    Err(Error::UnknownShop(_)) => Vec::new(),
                    Err(err) => return Err(err),
                };
                top_cache.entry(e.shop).or_insert(t)
            }
        };
        for o in sample_negatives(e.offer, top, n_neg, &future_clicks[&e.user], rng) {
            rows.push(PoolRow {
                user: e.user,
                shop: e.shop,
                offer: o,
                label: 0,
            });
        }
    }
    let vectors: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|r| ctx.features(r.user, r.offer).map(|v| v.0))
        .collect::<Result<_>>()?;
    let mut pool = TrainPool::new(ctx.schema().len());
    for (r, v) in rows.iter().zip(&vectors) {
        pool.push(r.label, v)?;
    }
    Ok(BuiltPool { rows, pool })
}

/// Holds out a `fraction` of users (with all their rows) as an evaluation
/// pool. Returns (train, eval).
pub fn split_by_user<R: Rng>(built: &BuiltPool, fraction: f64, rng: &mut R) -> (TrainPool, TrainPool) {
    let mut users: Vec<UserId> = built.rows.iter().map(|r| r.user).collect::<BTreeSet<_>>().into_iter().collect();
    users.shuffle(rng);
    let n_eval = ((users.len() as f64) * fraction).round() as usize;
    let eval_users: HashSet<UserId> = users.into_iter().take(n_eval).collect();
    let (mut tr, mut ev) = (Vec::new(), Vec::new());
    for (i, r) in built.rows.iter().enumerate() {
        if eval_users.contains(&r.user) {
            ev.push(i);
        } else {
            tr.push(i);
        }
    }
    (built.pool.select(&tr), built.pool.select(&ev))
}
