//! Brute-force recount oracles for tracker aggregation and session
//! segmentation. Shared by the core integration tests and the acceptance
//! target, which includes this file by path.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use boostjet::datamodel::{Action, Catalog, Event, EventLog, OfferId, OfferMeta, RegionId, ShopId, UserId, SECONDS_PER_DAY};
use boostjet::offer2vec::{segment_sessions, sessions_from_log};
use boostjet::trackers::{
    aggregate_sharded, price_bin, ActionFilter, Dim, DimSet, RegionBins, TimeStat, TrackerKey, TrackerKind,
    TrackerSpec, TrackerStore, Window,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type History = Vec<(OfferId, u64)>;

const BRANDS: [&str; 3] = ["acme", "bolt", "corex"];
const CATS: [&str; 4] = ["audio", "cables", "phones", "tv"];
const PRICES: [f64; 8] = [0.0, 0.5, 5.0, 50.0, 999.0, 1000.0, 123_456.0, 2e7];

pub struct World {
    pub log: EventLog,
    pub catalog: Catalog,
    pub bins: RegionBins,
    pub as_of: u64,
}

pub fn random_world(rng: &mut ChaCha8Rng) -> World {
    let n_shops = rng.random_range(1..=3u64);
    let n_offers = rng.random_range(1..=8u64);
    let offers: Vec<OfferMeta> = (0..n_offers)
        .map(|o| {
            let mut cats: Vec<String> = CATS
                .iter()
                .filter(|_| rng.random_bool(0.35))
                .map(|c| c.to_string())
                .collect();
            cats.shuffle(rng);
            OfferMeta {
                offer: OfferId(o * 7 + 3),
                shop: ShopId(rng.random_range(0..n_shops)),
                name: format!("offer {o}"),
                name_cats: cats,
                brand: BRANDS[rng.random_range(0..BRANDS.len())].to_string(),
                market_model: rng.random_range(0..3),
                market_category: rng.random_range(0..3),
                market_vendor: rng.random_range(0..3),
                price: PRICES[rng.random_range(0..PRICES.len())],
            }
        })
        .collect();
    let as_of = 100 * SECONDS_PER_DAY;
    // timestamps cluster on window edges, where off-by-one errors live
    let edges = [0, 1, SECONDS_PER_DAY, 7 * SECONDS_PER_DAY, 30 * SECONDS_PER_DAY];
    let n_events = rng.random_range(0..=60);
    let events: Vec<Event> = (0..n_events)
        .map(|_| {
            let meta = &offers[rng.random_range(0..offers.len())];
            let back = if rng.random_bool(0.3) {
                let e = edges[rng.random_range(0..edges.len())];
                (e as i64 + rng.random_range(-1..=1i64)).max(0) as u64
            } else {
                rng.random_range(0..45 * SECONDS_PER_DAY)
            };
            Event {
                ts: as_of - back,
                user: UserId(rng.random_range(0..5)),
                shop: meta.shop,
                offer: meta.offer,
                action: Action::ALL[rng.random_range(0..4)],
                region: RegionId(rng.random_range(0..4)),
                price: if rng.random_bool(0.8) { meta.price } else { PRICES[rng.random_range(0..PRICES.len())] },
            }
        })
        .collect();
    World {
        log: EventLog::from_events(events),
        catalog: Catalog::new(offers).unwrap(),
        bins: RegionBins::new(RegionId(1), RegionId(2)),
        as_of,
    }
}

/// Text attributes coded by rank among the sorted distinct values.
fn code_of(values: impl Iterator<Item = String>, v: &str) -> u64 {
    let set: BTreeSet<String> = values.collect();
    set.iter().position(|x| x == v).unwrap() as u64
}

/// Does `e` fall under `tuple` over `dims`? Name categories match when the
/// tuple's category is any of the offer's categories.
fn event_matches(w: &World, dims: &DimSet, e: &Event, tuple: &[u64]) -> bool {
    let meta = w.catalog.get(e.offer).unwrap();
    dims.dims().iter().zip(tuple).all(|(d, &v)| match d {
        Dim::ShopId => e.shop.0 == v,
        Dim::UserId => e.user.0 == v,
        Dim::OfferId => e.offer.0 == v,
        Dim::OfferBrand => code_of(w.catalog.offers().iter().map(|o| o.brand.clone()), &meta.brand) == v,
        Dim::OfferNameCat => meta.name_cats.iter().any(|c| {
            code_of(w.catalog.offers().iter().flat_map(|o| o.name_cats.clone()), c) == v
        }),
        Dim::MarketModel => meta.market_model == v,
        Dim::MarketCategory => meta.market_category == v,
        Dim::MarketVendor => meta.market_vendor == v,
        Dim::RegionBin => w.bins.bin(e.region) as u64 == v,
        Dim::PriceBin => price_bin(e.price) == Some(v),
    })
}

fn in_window(window: Window, ts: u64, as_of: u64) -> bool {
    match window {
        Window::LastDay => ts < as_of && as_of - ts <= SECONDS_PER_DAY,
        Window::LastWeek => ts < as_of && as_of - ts <= 7 * SECONDS_PER_DAY,
        Window::LastMonth => ts < as_of && as_of - ts <= 30 * SECONDS_PER_DAY,
        Window::AllTime => true,
    }
}

fn recount(w: &World, key: &TrackerKey, tuple: &[u64]) -> u64 {
    w.log
        .iter()
        .filter(|e| key.action.matches(e.action))
        .filter(|e| in_window(key.effective_window(), e.ts, w.as_of))
        .filter(|e| event_matches(w, &key.dims, e, tuple))
        .count() as u64
}

fn recompute(w: &World, spec: &TrackerSpec, tuple: &[u64]) -> f64 {
    match &spec.kind {
        TrackerKind::Count(k) => recount(w, k, tuple) as f64,
        TrackerKind::Ratio(n, d) => {
            let num = recount(w, n, tuple);
            let sub: Vec<u64> = d
                .dims
                .dims()
                .iter()
                .map(|x| tuple[n.dims.dims().iter().position(|y| y == x).unwrap()])
                .collect();
            let den = recount(w, d, &sub);
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        }
        TrackerKind::TimeDelta(k) => {
            let ts = w
                .log
                .iter()
                .filter(|e| k.action.matches(e.action) && event_matches(w, &k.dims, e, tuple))
                .map(|e| e.ts);
            let t = match k.time_stat.unwrap() {
                TimeStat::SinceFirstTime => ts.min(),
                TimeStat::SincePrevTime => ts.max(),
            };
            t.map_or(f64::NAN, |t| (w.as_of - t) as f64)
        }
    }
}

/// Every tuple over `dims` that some event produces, plus one that none does.
fn probe_tuples(w: &World, dims: &DimSet) -> Vec<Vec<u64>> {
    let mut out: BTreeSet<Vec<u64>> = BTreeSet::new();
    let cats = |o: OfferId| -> Vec<u64> {
        w.catalog
            .get(o)
            .unwrap()
            .name_cats
            .iter()
            .map(|c| code_of(w.catalog.offers().iter().flat_map(|o| o.name_cats.clone()), c))
            .collect()
    };
    for e in w.log.iter() {
        let meta = w.catalog.get(e.offer).unwrap();
        let mut partial: Vec<Vec<u64>> = vec![vec![]];
        for d in dims.dims() {
            let vals: Vec<u64> = match d {
                Dim::ShopId => vec![e.shop.0],
                Dim::UserId => vec![e.user.0],
                Dim::OfferId => vec![e.offer.0],
                Dim::OfferBrand => vec![code_of(w.catalog.offers().iter().map(|o| o.brand.clone()), &meta.brand)],
                Dim::OfferNameCat => cats(e.offer),
                Dim::MarketModel => vec![meta.market_model],
                Dim::MarketCategory => vec![meta.market_category],
                Dim::MarketVendor => vec![meta.market_vendor],
                Dim::RegionBin => vec![w.bins.bin(e.region) as u64],
                Dim::PriceBin => price_bin(e.price).into_iter().collect(),
            };
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out.extend(partial);
    }
    out.insert(vec![999_999; dims.len()]);
    out.into_iter().collect()
}

fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> DimSet {
    let mut all = Dim::ALL.to_vec();
    all.shuffle(rng);
    let n = rng.random_range(1..=max);
    DimSet::new(all[..n].to_vec()).unwrap()
}

/// A random count key and, over the same dims, every window, both time
/// statistics and a ratio against a random coarser denominator.
fn random_specs(rng: &mut ChaCha8Rng) -> (TrackerKey, Vec<TrackerSpec>) {
    let action = ActionFilter::ALL[rng.random_range(0..5)];
    let dims = random_dims(rng, 3);
    let window = Window::ALL[rng.random_range(0..4)];
    let key = TrackerKey::count(action, dims.clone(), window);
    let mut specs = vec![TrackerSpec::new(TrackerKind::Count(key.clone())).unwrap()];
    for a in ActionFilter::ALL {
        for w in Window::ALL {
            specs.push(TrackerSpec::new(TrackerKind::Count(TrackerKey::count(a, dims.clone(), w))).unwrap());
        }
    }
    for stat in [TimeStat::SinceFirstTime, TimeStat::SincePrevTime] {
        specs.push(TrackerSpec::new(TrackerKind::TimeDelta(TrackerKey::time(action, dims.clone(), stat))).unwrap());
    }
    let keep: Vec<Dim> = dims.dims().iter().copied().filter(|_| rng.random_bool(0.5)).collect();
    if !keep.is_empty() {
        let den_action = if rng.random_bool(0.5) { ActionFilter::Any } else { action };
        let den_window = Window::ALL[rng.random_range(window.index()..4)];
        let den = TrackerKey::count(den_action, DimSet::new(keep).unwrap(), den_window);
        specs.push(TrackerSpec::new(TrackerKind::Ratio(key.clone(), den)).unwrap());
    }
    (key, specs)
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

pub struct TrackerReport {
    pub cases: usize,
    pub lookups: usize,
}

/// Runs `cases` random (log, key, window) cases: every spec lookup must
/// equal the brute-force recount exactly, shorter windows must never count
/// more than longer ones, and `any` must equal the sum over the actions.
pub fn tracker_oracle(cases: usize, seed: u64) -> Result<TrackerReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lookups = 0;
    for case in 0..cases {
        let w = random_world(&mut rng);
        let (key, specs) = random_specs(&mut rng);
        let shards = rng.random_range(1..=4);
        let store: TrackerStore = aggregate_sharded(&w.log, &w.catalog, w.bins, &specs, w.as_of, shards)
            .map_err(|e| format!("case {case}: {e}"))?;
        for tuple in probe_tuples(&w, &key.dims) {
            for spec in &specs {
                let got = store.lookup(spec, &tuple).map_err(|e| format!("case {case}: {e}"))?;
                let want = recompute(&w, spec, &tuple);
                if !same(got, want) {
                    return Err(format!("case {case}: {} at {tuple:?}: store {got}, recount {want}", spec.feature_name));
                }
                lookups += 1;
            }
            let count = |a: ActionFilter, win: Window| {
                store.count(&TrackerKey::count(a, key.dims.clone(), win), &tuple).unwrap()
            };
            for a in ActionFilter::ALL {
                let c: Vec<u64> = Window::ALL.iter().map(|&win| count(a, win)).collect();
                if c.windows(2).any(|p| p[0] > p[1]) {
                    return Err(format!("case {case}: window nesting broken for {} at {tuple:?}: {c:?}", a.token()));
                }
            }
            for win in Window::ALL {
                let parts: u64 = ActionFilter::ALL[..4].iter().map(|&a| count(a, win)).sum();
                if parts != count(ActionFilter::Any, win) {
                    return Err(format!("case {case}: any != sum of actions at {tuple:?} ({})", win.token()));
                }
            }
        }
    }
    Ok(TrackerReport { cases, lookups })
}

/// Session membership straight from the definition: two events of one
/// history share a session iff no gap between them exceeds `delta`.
fn same_session_by_definition(ts: &[u64], i: usize, j: usize, delta: u64) -> bool {
    (i + 1..=j).all(|k| ts[k] - ts[k - 1] <= delta)
}

fn check_history(history: &[(OfferId, u64)], delta: u64) -> Result<(), String> {
    let sessions = segment_sessions(history, delta);
    if sessions.iter().any(|s| s.is_empty()) {
        return Err("empty session".into());
    }
    let flat: Vec<(OfferId, u64)> = sessions.concat();
    if flat != history {
        return Err("sessions do not concatenate to the history".into());
    }
    let label: Vec<usize> = sessions
        .iter()
        .enumerate()
        .flat_map(|(s, v)| std::iter::repeat_n(s, v.len()))
        .collect();
    let ts: Vec<u64> = history.iter().map(|p| p.1).collect();
    for i in 0..ts.len() {
        for j in i..ts.len() {
            if (label[i] == label[j]) != same_session_by_definition(&ts, i, j, delta) {
                return Err(format!("events {i} and {j} of {ts:?} misgrouped at delta {delta}"));
            }
        }
    }
    Ok(())
}

/// Random histories against the pairwise definition, then a multi-user log
/// whose per-(user, shop) sessions must match segmenting each history alone.
pub fn session_oracle(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let delta = [0, 1, 30, 1800][rng.random_range(0..4)];
        let n = rng.random_range(0..40);
        let mut t = rng.random_range(0..100u64);
        let history: Vec<(OfferId, u64)> = (0..n)
            .map(|i| {
                let step = match rng.random_range(0..4) {
                    0 => 0,
                    1 => delta,
                    2 => delta + 1,
                    _ => rng.random_range(0..3 * delta + 2),
                };
                if i > 0 {
                    t += step;
                }
                (OfferId(rng.random_range(0..5)), t)
            })
            .collect();
        check_history(&history, delta).map_err(|e| format!("case {case}: {e}"))?;

        let events: Vec<Event> = (0..rng.random_range(0..50))
            .map(|_| Event {
                ts: rng.random_range(0..5000),
                user: UserId(rng.random_range(0..3)),
                shop: ShopId(rng.random_range(0..2)),
                offer: OfferId(rng.random_range(0..6)),
                action: Action::ALL[rng.random_range(0..4)],
                region: RegionId(0),
                price: 1.0,
            })
            .collect();
        let log = EventLog::from_events(events);
        let mut want: BTreeMap<(UserId, ShopId), Vec<History>> = BTreeMap::new();
        let mut hist: BTreeMap<(UserId, ShopId), Vec<(OfferId, u64)>> = BTreeMap::new();
        for e in log.iter() {
            hist.entry((e.user, e.shop)).or_default().push((e.offer, e.ts));
        }
        for (k, h) in &hist {
            check_history(h, delta).map_err(|e| format!("case {case}: {e}"))?;
            want.insert(*k, segment_sessions(h, delta));
        }
        let mut got: BTreeMap<(UserId, ShopId), Vec<History>> = BTreeMap::new();
        for s in sessions_from_log(&log, delta) {
            let v = got.entry((s.user, s.shop)).or_default();
            if s.index != v.len() {
                return Err(format!("case {case}: session index {} out of order", s.index));
            }
            v.push(s.offers);
        }
        if got != want {
            return Err(format!("case {case}: log sessions differ from per-history segmentation"));
        }
    }
    Ok(cases)
}
