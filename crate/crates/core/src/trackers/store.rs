//! Map-reduce aggregation of tracker keys into a keyed store.
//!
//! The map step emits, for every event and every distinct dimension set
//! required by the specs, the event's dimension tuple. The reduce step folds
//! all records of a tuple into an [`Aggregate`]: per-window, per-action
//! counts plus first and latest timestamps per action. All action filters
//! and windows of a dimension set are answered from the same aggregate.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use super::bins::{price_bin, RegionBin, RegionBins};
use super::key::{ActionFilter, Dim, DimSet, TimeStat, TrackerKey, TrackerKind, TrackerSpec, Window};
use crate::datamodel::{Catalog, Event, EventLog, RegionId, Timestamp, UserId};
use crate::error::{Error, Result};
use crate::MISSING;

const NO_TS: Timestamp = Timestamp::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Aggregate {
    /// `[window][action]`
    counts: [[u32; 4]; 4],
    first: [Timestamp; 4],
    last: [Timestamp; 4],
}

impl Default for Aggregate {
    fn default() -> Self {
        Aggregate {
            counts: [[0; 4]; 4],
            first: [NO_TS; 4],
            last: [NO_TS; 4],
        }
    }
}

impl Aggregate {
    fn record(&mut self, ts: Timestamp, action: usize, as_of: Timestamp) {
        for w in Window::ALL {
            if w.contains(ts, as_of) {
                self.counts[w.index()][action] += 1;
            }
        }
        if self.first[action] == NO_TS || ts < self.first[action] {
            self.first[action] = ts;
        }
        if self.last[action] == NO_TS || ts > self.last[action] {
            self.last[action] = ts;
        }
    }

    fn merge(&mut self, other: &Aggregate) {
        for w in 0..4 {
            for a in 0..4 {
                self.counts[w][a] += other.counts[w][a];
            }
        }
        for a in 0..4 {
            if other.first[a] != NO_TS && (self.first[a] == NO_TS || other.first[a] < self.first[a]) {
                self.first[a] = other.first[a];
            }
            if other.last[a] != NO_TS && (self.last[a] == NO_TS || other.last[a] > self.last[a]) {
                self.last[a] = other.last[a];
            }
        }
    }

    pub fn count(&self, action: ActionFilter, window: Window) -> u64 {
        let row = &self.counts[window.index()];
        match action.action_index() {
            Some(a) => row[a] as u64,
            None => row.iter().map(|&c| c as u64).sum(),
        }
    }

    pub fn first_ts(&self, action: ActionFilter) -> Option<Timestamp> {
        let v = match action.action_index() {
            Some(a) => self.first[a],
            None => self.first.iter().copied().min().unwrap_or(NO_TS),
        };
        (v != NO_TS).then_some(v)
    }

    pub fn last_ts(&self, action: ActionFilter) -> Option<Timestamp> {
        let v = match action.action_index() {
            Some(a) => self.last[a],
            None => self.last.iter().copied().filter(|&t| t != NO_TS).max().unwrap_or(NO_TS),
        };
        (v != NO_TS).then_some(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Group {
    dims: DimSet,
    table: HashMap<Box<[u64]>, Aggregate>,
}

/// Pre-aggregated tracker statistics as of a fixed timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerStore {
    as_of: Timestamp,
    region_bins: RegionBins,
    groups: Vec<Group>,
    /// Latest `(ts, region)` observed per user.
    users: HashMap<UserId, (Timestamp, RegionId)>,
}

/// Emits the dimension tuples of `event` for `dims` into `out`. Multi-valued
/// dimensions (name categories) fan out into one tuple per value; events
/// without a price bin emit nothing for price-binned sets.
fn emit_tuples(
    dims: &DimSet,
    event: &Event,
    catalog: &Catalog,
    bins: &RegionBins,
    out: &mut Vec<Vec<u64>>,
) -> Result<()> {
    out.clear();
    let pos = if dims.dims().iter().any(|d| d.needs_catalog()) {
        Some(catalog.position(event.offer).ok_or(Error::UnknownOffer(event.offer.0))?)
    } else {
        None
    };
    let mut base = Vec::with_capacity(dims.len());
    let mut fan_slot = None;
    for d in dims.dims() {
        let v = match d {
            Dim::ShopId => event.shop.0,
            Dim::UserId => event.user.0,
            Dim::OfferId => event.offer.0,
            Dim::OfferBrand => catalog.brand_code(pos.unwrap()),
            Dim::OfferNameCat => {
                fan_slot = Some(base.len());
                0
            }
            Dim::MarketModel => catalog.offers()[pos.unwrap()].market_model,
            Dim::MarketCategory => catalog.offers()[pos.unwrap()].market_category,
            Dim::MarketVendor => catalog.offers()[pos.unwrap()].market_vendor,
            Dim::RegionBin => bins.bin(event.region) as u64,
            Dim::PriceBin => match price_bin(event.price) {
                Some(b) => b,
                None => return Ok(()),
            },
        };
        base.push(v);
    }
    match fan_slot {
        None => out.push(base),
        Some(slot) => {
            for &cat in catalog.cat_codes(pos.unwrap()) {
                let mut t = base.clone();
                t[slot] = cat;
                out.push(t);
            }
        }
    }
    Ok(())
}

/// Distinct dimension sets referenced by `specs`, sorted.
pub fn required_dim_sets(specs: &[TrackerSpec]) -> Vec<DimSet> {
    let set: BTreeSet<DimSet> = specs
        .iter()
        .flat_map(|s| s.keys().into_iter().map(|k| k.dims.clone()))
        .collect();
    set.into_iter().collect()
}

fn aggregate_events(
    events: &[Event],
    catalog: &Catalog,
    bins: &RegionBins,
    dim_sets: &[DimSet],
    as_of: Timestamp,
) -> Result<TrackerStore> {
    let mut groups: Vec<Group> = dim_sets
        .iter()
        .map(|d| Group {
            dims: d.clone(),
            table: HashMap::new(),
        })
        .collect();
    let mut users: HashMap<UserId, (Timestamp, RegionId)> = HashMap::new();
    let mut tuples = Vec::new();
    for e in events {
        let action = e.action.index();
        for g in groups.iter_mut() {
            emit_tuples(&g.dims, e, catalog, bins, &mut tuples)?;
            for t in tuples.drain(..) {
                g.table
                    .entry(t.into_boxed_slice())
                    .or_default()
                    .record(e.ts, action, as_of);
            }
        }
        let cand = (e.ts, e.region);
        users
            .entry(e.user)
            .and_modify(|cur| *cur = (*cur).max(cand))
            .or_insert(cand);
    }
    Ok(TrackerStore {
        as_of,
        region_bins: *bins,
        groups,
        users,
    })
}

/// Single-pass aggregation of `past` for every key used by `specs`.
pub fn aggregate(
    past: &EventLog,
    catalog: &Catalog,
    bins: RegionBins,
    specs: &[TrackerSpec],
    as_of: Timestamp,
) -> Result<TrackerStore> {
    aggregate_sharded(past, catalog, bins, specs, as_of, 1)
}

/// Splits the events into `shards` contiguous chunks, aggregates them in
/// parallel and folds the partial stores with [`TrackerStore::combine`].
/// The result is identical to sequential aggregation for every shard count.
pub fn aggregate_sharded(
    past: &EventLog,
    catalog: &Catalog,
    bins: RegionBins,
    specs: &[TrackerSpec],
    as_of: Timestamp,
    shards: usize,
) -> Result<TrackerStore> {
    if let Some(last) = past.last_ts() {
        if last > as_of {
            return Err(Error::Leakage(format!(
                "event at {last} lies after the aggregation point {as_of}"
            )));
        }
    }
    let dim_sets = required_dim_sets(specs);
    let events = past.events();
    let shards = shards.max(1);
    let chunk = events.len().div_ceil(shards).max(1);
    let partials: Vec<TrackerStore> = events
        .par_chunks(chunk)
        .map(|c| aggregate_events(c, catalog, &bins, &dim_sets, as_of))
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let mut store = match iter.next() {
        Some(s) => s,
        None => aggregate_events(&[], catalog, &bins, &dim_sets, as_of)?,
    };
    for p in iter {
        store.combine(p)?;
    }
    Ok(store)
}

impl TrackerStore {
    pub fn as_of(&self) -> Timestamp {
        self.as_of
    }

    pub fn region_bins(&self) -> RegionBins {
        self.region_bins
    }

    pub fn dim_sets(&self) -> impl Iterator<Item = &DimSet> {
        self.groups.iter().map(|g| &g.dims)
    }

    /// Merges a partial store over a disjoint event shard: counts add,
    /// first timestamps take the minimum, latest timestamps the maximum.
    pub fn combine(&mut self, other: TrackerStore) -> Result<()> {
        if self.as_of != other.as_of || self.region_bins != other.region_bins {
            return Err(Error::Schema("cannot combine stores built for different settings".into()));
        }
        if self.groups.len() != other.groups.len()
            || self.groups.iter().zip(&other.groups).any(|(a, b)| a.dims != b.dims)
        {
            return Err(Error::Schema("cannot combine stores with different key sets".into()));
        }
        for (mine, theirs) in self.groups.iter_mut().zip(other.groups) {
            for (k, v) in theirs.table {
                mine.table.entry(k).or_default().merge(&v);
            }
        }
        for (u, cand) in other.users {
            self.users
                .entry(u)
                .and_modify(|cur| *cur = (*cur).max(cand))
                .or_insert(cand);
        }
        Ok(())
    }

    pub(crate) fn group_index(&self, dims: &DimSet) -> Option<usize> {
        self.groups.binary_search_by(|g| g.dims.cmp(dims)).ok()
    }

    fn require_group(&self, dims: &DimSet) -> Result<usize> {
        self.group_index(dims)
            .ok_or_else(|| Error::Schema(format!("dimension set [{dims}] was not aggregated")))
    }

    pub(crate) fn aggregate_at(&self, group: usize, tuple: &[u64]) -> Option<&Aggregate> {
        self.groups[group].table.get(tuple)
    }

    pub fn get(&self, dims: &DimSet, tuple: &[u64]) -> Option<&Aggregate> {
        self.group_index(dims).and_then(|g| self.aggregate_at(g, tuple))
    }

    /// All tuples of one dimension set.
    pub fn entries(&self, dims: &DimSet) -> Result<impl Iterator<Item = (&[u64], &Aggregate)>> {
        let g = self.require_group(dims)?;
        Ok(self.groups[g].table.iter().map(|(k, v)| (&k[..], v)))
    }

    pub fn user_region(&self, user: UserId) -> Option<RegionId> {
        self.users.get(&user).map(|&(_, r)| r)
    }

    pub fn user_region_bin(&self, user: UserId) -> RegionBin {
        self.user_region(user)
            .map(|r| self.region_bins.bin(r))
            .unwrap_or(RegionBin::Other)
    }

    /// Count for `key` at `tuple`; 0 when the tuple was never seen.
    pub fn count(&self, key: &TrackerKey, tuple: &[u64]) -> Result<u64> {
        if tuple.len() != key.dims.len() {
            return Err(Error::Arity {
                expected: key.dims.len(),
                got: tuple.len(),
            });
        }
        let g = self.require_group(&key.dims)?;
        Ok(self
            .aggregate_at(g, tuple)
            .map_or(0, |a| a.count(key.action, key.effective_window())))
    }

    /// Evaluates a spec at a tuple over the spec's lookup dimensions.
    pub fn lookup(&self, spec: &TrackerSpec, tuple: &[u64]) -> Result<f64> {
        let dims = spec.lookup_dims();
        if tuple.len() != dims.len() {
            return Err(Error::Arity {
                expected: dims.len(),
                got: tuple.len(),
            });
        }
        match &spec.kind {
            TrackerKind::Count(k) => self.count(k, tuple).map(|c| c as f64),
            TrackerKind::Ratio(num, den) => {
                let n = self.count(num, tuple)?;
                let projected = project(&num.dims, &den.dims, tuple);
                let d = self.count(den, &projected)?;
                Ok(ratio(n, d))
            }
            TrackerKind::TimeDelta(k) => {
                let g = self.require_group(&k.dims)?;
                Ok(self.time_delta(k, self.aggregate_at(g, tuple)))
            }
        }
    }

    pub(crate) fn time_delta(&self, key: &TrackerKey, agg: Option<&Aggregate>) -> f64 {
        let ts = agg.and_then(|a| match key.time_stat {
            Some(TimeStat::SinceFirstTime) => a.first_ts(key.action),
            Some(TimeStat::SincePrevTime) => a.last_ts(key.action),
            None => None,
        });
        ts.map_or(MISSING, |t| self.as_of.saturating_sub(t) as f64)
    }

    /// Latest timestamp recorded anywhere in the store.
    pub fn max_recorded_ts(&self) -> Option<Timestamp> {
        let groups = self
            .groups
            .iter()
            .flat_map(|g| g.table.values())
            .filter_map(|a| a.last_ts(ActionFilter::Any));
        let users = self.users.values().map(|&(t, _)| t);
        groups.chain(users).max()
    }

    #[cfg(test)]
    pub(crate) fn corrupt_latest_ts(&mut self, ts: Timestamp) {
        let agg = self.groups[0].table.values_mut().next().expect("non-empty store");
        agg.last[0] = ts;
    }

    /// Sorted text dump; [`TrackerStore::read_dump`] reproduces the store.
    pub fn write_dump<W: Write>(&self, mut w: W, comment: Option<&str>) -> std::io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "trackers v1")?;
        writeln!(w, "as_of {}", self.as_of)?;
        let opt = |r: Option<RegionId>| r.map_or("-".to_string(), |r| r.0.to_string());
        writeln!(w, "regions {} {}", opt(self.region_bins.bin_a), opt(self.region_bins.bin_b))?;
        let mut users: Vec<_> = self.users.iter().collect();
        users.sort_unstable_by_key(|(u, _)| **u);
        for (u, (t, r)) in users {
            writeln!(w, "user\t{u}\t{t}\t{r}")?;
        }
        let ts_list = |v: &[Timestamp; 4]| {
            v.iter()
                .map(|&t| if t == NO_TS { "-".to_string() } else { t.to_string() })
                .collect::<Vec<_>>()
                .join(",")
        };
        for g in &self.groups {
            writeln!(w, "group\t{}", g.dims)?;
            let mut rows: Vec<_> = g.table.iter().collect();
            rows.sort_unstable_by(|a, b| a.0.cmp(b.0));
            let mut line = String::new();
            for (tuple, agg) in rows {
                line.clear();
                for (i, v) in tuple.iter().enumerate() {
                    if i > 0 {
                        line.push(',');
                    }
                    write!(line, "{v}").unwrap();
                }
                line.push('\t');
                for (i, c) in agg.counts.iter().flatten().enumerate() {
                    if i > 0 {
                        line.push(',');
                    }
                    write!(line, "{c}").unwrap();
                }
                write!(line, "\t{}\t{}", ts_list(&agg.first), ts_list(&agg.last)).unwrap();
                writeln!(w, "{line}")?;
            }
        }
        w.flush()
    }

    pub fn read_dump<R: BufRead>(reader: R) -> Result<TrackerStore> {
        let mut lines = reader
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::parse(i + 1, 1, e.to_string())))
            .filter(|r| !matches!(r, Ok((_, l)) if l.starts_with('#')));
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines
                .next()
                .unwrap_or_else(|| Err(Error::parse(0, 1, format!("unexpected end of dump, expected {what}"))))
        };
        let (n, l) = next("version")?;
        if l != "trackers v1" {
            return Err(Error::parse(n, 1, "expected `trackers v1`"));
        }
        let (n, l) = next("as_of")?;
        let as_of = l
            .strip_prefix("as_of ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(n, 1, "expected `as_of <ts>`"))?;
        let (n, l) = next("regions")?;
        let parts: Vec<&str> = l.split(' ').collect();
        let region = |s: &str| -> Result<Option<RegionId>> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(|v| Some(RegionId(v))).map_err(|_| Error::parse(n, 2, "bad region"))
            }
        };
        if parts.len() != 3 || parts[0] != "regions" {
            return Err(Error::parse(n, 1, "expected `regions <a> <b>`"));
        }
        let region_bins = RegionBins {
            bin_a: region(parts[1])?,
            bin_b: region(parts[2])?,
        };
        let mut store = TrackerStore {
            as_of,
            region_bins,
            groups: Vec::new(),
            users: HashMap::new(),
        };
        let parse_u64 = |s: &str, n: usize, col: usize| -> Result<u64> {
            s.parse().map_err(|_| Error::parse(n, col, format!("invalid integer {s:?}")))
        };
        let parse_ts = |s: &str, n: usize, col: usize| -> Result<[Timestamp; 4]> {
            let v: Vec<&str> = s.split(',').collect();
            if v.len() != 4 {
                return Err(Error::parse(n, col, "expected 4 timestamps"));
            }
            let mut out = [NO_TS; 4];
            for (o, s) in out.iter_mut().zip(v) {
                if s != "-" {
                    *o = parse_u64(s, n, col)?;
                }
            }
            Ok(out)
        };
        for item in lines {
            let (n, l) = item?;
            let f: Vec<&str> = l.split('\t').collect();
            match f.as_slice() {
                ["user", u, t, r] => {
                    store.users.insert(
                        UserId(parse_u64(u, n, 2)?),
                        (parse_u64(t, n, 3)?, RegionId(parse_u64(r, n, 4)?)),
                    );
                }
                ["group", dims] => {
                    let dims: DimSet = dims.parse().map_err(|e: Error| Error::parse(n, 2, e.to_string()))?;
                    if store.groups.last().is_some_and(|g| g.dims >= dims) {
                        return Err(Error::parse(n, 2, "groups out of order"));
                    }
                    store.groups.push(Group {
                        dims,
                        table: HashMap::new(),
                    });
                }
                [tuple, counts, first, last] => {
                    let g = store
                        .groups
                        .last_mut()
                        .ok_or_else(|| Error::parse(n, 1, "row before any group"))?;
                    let tuple = tuple
                        .split(',')
                        .map(|v| parse_u64(v, n, 1))
                        .collect::<Result<Vec<_>>>()?;
                    if tuple.len() != g.dims.len() {
                        return Err(Error::parse(n, 1, "tuple arity does not match group"));
                    }
                    let c: Vec<&str> = counts.split(',').collect();
                    if c.len() != 16 {
                        return Err(Error::parse(n, 2, "expected 16 counts"));
                    }
                    let mut agg = Aggregate::default();
                    for (i, s) in c.iter().enumerate() {
                        agg.counts[i / 4][i % 4] = s
                            .parse()
                            .map_err(|_| Error::parse(n, 2, format!("invalid count {s:?}")))?;
                    }
                    agg.first = parse_ts(first, n, 3)?;
                    agg.last = parse_ts(last, n, 4)?;
                    g.table.insert(tuple.into_boxed_slice(), agg);
                }
                _ => return Err(Error::parse(n, 1, "unrecognized dump line")),
            }
        }
        Ok(store)
    }
}

/// Restricts `tuple` (over `from`) to the dimensions of `to` (a subset).
pub(crate) fn project(from: &DimSet, to: &DimSet, tuple: &[u64]) -> Vec<u64> {
    to.dims()
        .iter()
        .map(|d| {
            let i = from.dims().iter().position(|x| x == d).expect("subset dims");
            tuple[i]
        })
        .collect()
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
