//! Events, catalogs and the time-window split.

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use io::{load_catalog, load_event_log, read_catalog, read_event_log, write_catalog, write_event_log};
pub use synth::{synth_generate, SynthConfig};

/// Seconds since the epoch.
pub type Timestamp = u64;

pub const SECONDS_PER_DAY: u64 = 86_400;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

id_type!(UserId);
id_type!(ShopId);
id_type!(OfferId);
id_type!(RegionId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Click,
    Detail,
    Add,
    Purchase,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Click, Action::Detail, Action::Add, Action::Purchase];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            Action::Click => "click",
            Action::Detail => "detail",
            Action::Add => "add",
            Action::Purchase => "purchase",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "click" => Ok(Action::Click),
            "detail" => Ok(Action::Detail),
            "add" => Ok(Action::Add),
            "purchase" => Ok(Action::Purchase),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One timestamped user-offer interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub ts: Timestamp,
    pub user: UserId,
    pub shop: ShopId,
    pub offer: OfferId,
    pub action: Action,
    pub region: RegionId,
    pub price: f64,
}

impl Event {
    fn order_key(&self) -> (Timestamp, UserId, OfferId, Action) {
        (self.ts, self.user, self.offer, self.action)
    }
}

/// Events in canonical order: ascending timestamp, ties by
/// `(user, offer, action)`. Remaining ties keep their input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    /// Builds a log, stable-sorting the events into canonical order.
    pub fn from_events(mut events: Vec<Event>) -> Self {
        if !Self::sorted(&events) {
            events.sort_by_key(Event::order_key);
        }
        EventLog { events }
    }

    fn sorted(events: &[Event]) -> bool {
        events
            .windows(2)
            .all(|w| w[0].order_key() <= w[1].order_key())
    }

    pub fn is_sorted(&self) -> bool {
        Self::sorted(&self.events)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn first_ts(&self) -> Option<Timestamp> {
        self.events.first().map(|e| e.ts)
    }

    pub fn last_ts(&self) -> Option<Timestamp> {
        self.events.last().map(|e| e.ts)
    }

    /// Events with `from <= ts < to`, still in canonical order.
    pub fn range(&self, from: Timestamp, to: Timestamp) -> EventLog {
        let lo = self.events.partition_point(|e| e.ts < from);
        let hi = self.events.partition_point(|e| e.ts < to);
        EventLog {
            events: self.events[lo..hi.max(lo)].to_vec(),
        }
    }

    /// Per-user event lists, each in canonical order.
    pub fn by_user(&self) -> BTreeMap<UserId, Vec<&Event>> {
        let mut out: BTreeMap<UserId, Vec<&Event>> = BTreeMap::new();
        for e in &self.events {
            out.entry(e.user).or_default().push(e);
        }
        out
    }
}

impl<'a> IntoIterator for &'a EventLog {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;
    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfferMeta {
    pub offer: OfferId,
    pub shop: ShopId,
    pub name: String,
    pub name_cats: Vec<String>,
    pub brand: String,
    pub market_model: u64,
    pub market_category: u64,
    pub market_vendor: u64,
    pub price: f64,
}

/// Offer metadata indexed by id, with text attributes interned to stable
/// integer codes (sorted order) so they can take part in tracker tuples.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    offers: Vec<OfferMeta>,
    index: HashMap<OfferId, usize>,
    brand_codes: Vec<u64>,
    cat_codes: Vec<Vec<u64>>,
}

impl Catalog {
    pub fn new(mut offers: Vec<OfferMeta>) -> Result<Self> {
        offers.sort_by_key(|o| o.offer);
        let mut index = HashMap::with_capacity(offers.len());
        for (i, o) in offers.iter().enumerate() {
            if index.insert(o.offer, i).is_some() {
                return Err(Error::Config(format!("duplicate offer id {}", o.offer)));
            }
        }
        let brands: BTreeMap<&str, u64> = {
            let mut names: Vec<&str> = offers.iter().map(|o| o.brand.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            names.into_iter().zip(0..).collect()
        };
        let cats: BTreeMap<&str, u64> = {
            let mut names: Vec<&str> = offers
                .iter()
                .flat_map(|o| o.name_cats.iter().map(String::as_str))
                .collect();
            names.sort_unstable();
            names.dedup();
            names.into_iter().zip(0..).collect()
        };
        let brand_codes = offers.iter().map(|o| brands[o.brand.as_str()]).collect();
        let cat_codes = offers
            .iter()
            .map(|o| o.name_cats.iter().map(|c| cats[c.as_str()]).collect())
            .collect();
        Ok(Catalog {
            offers,
            index,
            brand_codes,
            cat_codes,
        })
    }

    pub fn offers(&self) -> &[OfferMeta] {
        &self.offers
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }

    pub fn position(&self, offer: OfferId) -> Option<usize> {
        self.index.get(&offer).copied()
    }

    pub fn get(&self, offer: OfferId) -> Option<&OfferMeta> {
        self.position(offer).map(|i| &self.offers[i])
    }

    pub fn brand_code(&self, pos: usize) -> u64 {
        self.brand_codes[pos]
    }

    pub fn cat_codes(&self, pos: usize) -> &[u64] {
        &self.cat_codes[pos]
    }
}

/// Past/future boundary. Events before `feature_end` feed features, events in
/// `[feature_end, train_end)` provide labels, later events are held out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeWindow {
    pub feature_end: Timestamp,
    pub train_end: Timestamp,
}

impl TimeWindow {
    pub fn new(feature_end: Timestamp, train_end: Timestamp) -> Result<Self> {
        if feature_end >= train_end {
            return Err(Error::Config(format!(
                "feature_end ({feature_end}) must precede train_end ({train_end})"
            )));
        }
        Ok(TimeWindow {
            feature_end,
            train_end,
        })
    }

    /// Splits `[start, end)` into feature/train/test spans in the given
    /// proportions (e.g. 12:1:1 weeks).
    pub fn from_ratios(
        start: Timestamp,
        end: Timestamp,
        feature_parts: u64,
        train_parts: u64,
        test_parts: u64,
    ) -> Result<Self> {
        let total = feature_parts + train_parts + test_parts;
        if total == 0 || train_parts == 0 || end <= start {
            return Err(Error::Config("degenerate window ratios".into()));
        }
        let span = (end - start) as u128;
        let feature_end = start + (span * feature_parts as u128 / total as u128) as u64;
        let train_end =
            start + (span * (feature_parts + train_parts) as u128 / total as u128) as u64;
        TimeWindow::new(feature_end, train_end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmptySide {
    Past,
    Future,
    Both,
}

#[derive(Clone, Debug)]
pub struct WindowSplit {
    pub past: EventLog,
    pub future: EventLog,
    /// Set when one side came out empty; the split is still usable.
    pub empty: Option<EmptySide>,
}

pub fn split_time_window(log: &EventLog, w: TimeWindow) -> WindowSplit {
    let mid = log.events.partition_point(|e| e.ts < w.feature_end);
    let end = log.events.partition_point(|e| e.ts < w.train_end);
    let past = EventLog {
        events: log.events[..mid].to_vec(),
    };
    let future = EventLog {
        events: log.events[mid..end.max(mid)].to_vec(),
    };
    let empty = match (past.is_empty(), future.is_empty()) {
        (true, true) => Some(EmptySide::Both),
        (true, false) => Some(EmptySide::Past),
        (false, true) => Some(EmptySide::Future),
        (false, false) => None,
    };
    if let Some(side) = empty {
        log::warn!("time window split left an empty partition: {side:?}");
    }
    WindowSplit {
        past,
        future,
        empty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ev(ts: u64, user: u64, offer: u64, action: Action) -> Event {
        Event {
            ts,
            user: UserId(user),
            shop: ShopId(1),
            offer: OfferId(offer),
            action,
            region: RegionId(0),
            price: 10.0,
        }
    }

    #[test]
    fn split_boundary_goes_to_future() {
        let log = EventLog::from_events(vec![
            ev(5, 1, 1, Action::Click),
            ev(10, 1, 1, Action::Click),
            ev(15, 1, 1, Action::Click),
        ]);
        let s = split_time_window(&log, TimeWindow::new(10, 20).unwrap());
        let ts = |l: &EventLog| l.iter().map(|e| e.ts).collect::<Vec<_>>();
        assert_eq!(ts(&s.past), vec![5]);
        assert_eq!(ts(&s.future), vec![10, 15]);
        assert_eq!(s.empty, None);
    }

    #[test]
    fn zero_feature_end_leaves_past_empty() {
        let log = EventLog::from_events(vec![ev(5, 1, 1, Action::Click)]);
        let s = split_time_window(&log, TimeWindow::new(0, 20).unwrap());
        assert!(s.past.is_empty());
        assert_eq!(s.empty, Some(EmptySide::Past));
    }

    #[test]
    fn window_rejects_inverted_bounds() {
        assert!(TimeWindow::new(10, 10).is_err());
        assert!(TimeWindow::new(11, 10).is_err());
    }

    #[test]
    fn ratios_follow_twelve_one_one() {
        let w = TimeWindow::from_ratios(0, 14 * 7 * SECONDS_PER_DAY, 12, 1, 1).unwrap();
        assert_eq!(w.feature_end, 12 * 7 * SECONDS_PER_DAY);
        assert_eq!(w.train_end, 13 * 7 * SECONDS_PER_DAY);
    }

    #[test]
    fn catalog_rejects_duplicates() {
        let o = OfferMeta {
            offer: OfferId(1),
            shop: ShopId(1),
            name: "x".into(),
            name_cats: vec![],
            brand: "b".into(),
            market_model: 0,
            market_category: 0,
            market_vendor: 0,
            price: 1.0,
        };
        assert!(Catalog::new(vec![o.clone(), o]).is_err());
    }

    fn arb_log() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u64..200, 0u64..5, 0u64..5, 0usize..4), 0..200).prop_map(|v| {
            v.into_iter()
                .map(|(ts, u, o, a)| ev(ts, u, o, Action::ALL[a]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn split_partitions_events_before_train_end(
            events in arb_log(),
            fe in 0u64..200,
            len in 1u64..100,
        ) {
            let log = EventLog::from_events(events);
            let w = TimeWindow::new(fe, fe + len).unwrap();
            let s = split_time_window(&log, w);
            let expected = log.iter().filter(|e| e.ts < w.train_end).count();
            prop_assert_eq!(s.past.len() + s.future.len(), expected);
            prop_assert!(s.past.is_sorted() && s.future.is_sorted());
            if let (Some(p), Some(f)) = (s.past.last_ts(), s.future.first_ts()) {
                prop_assert!(p < w.feature_end && w.feature_end <= f);
            }
            prop_assert!(s.future.iter().all(|e| e.ts >= w.feature_end && e.ts < w.train_end));
        }
    }
}
