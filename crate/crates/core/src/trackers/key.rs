//! Tracker keys, specs and the line-oriented spec grammar.
//!
//! ```text
//! count <action> <dims> [<window>]
//! ratio <action> <dims> [<window>] / <action> <dims> [<window>]
//! delta <action> <dims> <sincefirst|sinceprev>
//! pattern
//! ```
//!
//! `<action>` is one of `clicks details adds purchases any`, `<dims>` a
//! comma list over `shop user offer brand namecat model category vendor
//! region pricebin`, and `<window>` one of `lastday lastweek lastmonth
//! alltime` (default `alltime`).

use std::fmt;
use std::str::FromStr;

use crate::datamodel::{Action, SECONDS_PER_DAY};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionFilter {
    Click,
    Detail,
    Add,
    Purchase,
    Any,
}

impl ActionFilter {
    pub const ALL: [ActionFilter; 5] = [
        ActionFilter::Click,
        ActionFilter::Detail,
        ActionFilter::Add,
        ActionFilter::Purchase,
        ActionFilter::Any,
    ];

    pub fn matches(self, action: Action) -> bool {
        match self {
            ActionFilter::Any => true,
            ActionFilter::Click => action == Action::Click,
            ActionFilter::Detail => action == Action::Detail,
            ActionFilter::Add => action == Action::Add,
            ActionFilter::Purchase => action == Action::Purchase,
        }
    }

    /// Index into per-action arrays; `None` for `Any`.
    pub fn action_index(self) -> Option<usize> {
        match self {
            ActionFilter::Click => Some(0),
            ActionFilter::Detail => Some(1),
            ActionFilter::Add => Some(2),
            ActionFilter::Purchase => Some(3),
            ActionFilter::Any => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            ActionFilter::Click => "clicks",
            ActionFilter::Detail => "details",
            ActionFilter::Add => "adds",
            ActionFilter::Purchase => "purchases",
            ActionFilter::Any => "any",
        }
    }

    fn covers(self, other: ActionFilter) -> bool {
        self == ActionFilter::Any || self == other
    }
}

impl FromStr for ActionFilter {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ActionFilter::ALL
            .into_iter()
            .find(|a| a.token() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// Dimension selectors. Declaration order is the canonical sort order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dim {
    ShopId,
    UserId,
    OfferId,
    OfferBrand,
    OfferNameCat,
    MarketModel,
    MarketCategory,
    MarketVendor,
    RegionBin,
    PriceBin,
}

impl Dim {
    pub const ALL: [Dim; 10] = [
        Dim::ShopId,
        Dim::UserId,
        Dim::OfferId,
        Dim::OfferBrand,
        Dim::OfferNameCat,
        Dim::MarketModel,
        Dim::MarketCategory,
        Dim::MarketVendor,
        Dim::RegionBin,
        Dim::PriceBin,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Dim::ShopId => "shop",
            Dim::UserId => "user",
            Dim::OfferId => "offer",
            Dim::OfferBrand => "brand",
            Dim::OfferNameCat => "namecat",
            Dim::MarketModel => "model",
            Dim::MarketCategory => "category",
            Dim::MarketVendor => "vendor",
            Dim::RegionBin => "region",
            Dim::PriceBin => "pricebin",
        }
    }

    /// Whether the value comes from catalog metadata rather than the event.
    pub fn needs_catalog(self) -> bool {
        matches!(
            self,
            Dim::OfferBrand | Dim::OfferNameCat | Dim::MarketModel | Dim::MarketCategory | Dim::MarketVendor
        )
    }
}

impl FromStr for Dim {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Dim::ALL
            .into_iter()
            .find(|d| d.token() == s)
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

/// Sorted, duplicate-free, non-empty list of dimensions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DimSet(Vec<Dim>);

impl DimSet {
    pub fn new(mut dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Schema("tracker key needs at least one dimension".into()));
        }
        let n = dims.len();
        dims.sort_unstable();
        dims.dedup();
        if dims.len() != n {
            return Err(Error::Schema("duplicate dimension in tracker key".into()));
        }
        Ok(DimSet(dims))
    }

    pub fn dims(&self) -> &[Dim] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, d: Dim) -> bool {
        self.0.contains(&d)
    }

    pub fn is_subset_of(&self, other: &DimSet) -> bool {
        self.0.iter().all(|d| other.contains(*d))
    }
}

impl fmt::Display for DimSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(d.token())?;
        }
        Ok(())
    }
}

impl FromStr for DimSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(',')
            .map(|t| Dim::from_str(t.trim()).map_err(Error::Schema))
            .collect::<Result<Vec<_>>>()?;
        DimSet::new(dims)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Window {
    LastDay,
    LastWeek,
    LastMonth,
    AllTime,
}

impl Window {
    pub const ALL: [Window; 4] = [Window::LastDay, Window::LastWeek, Window::LastMonth, Window::AllTime];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Length in seconds, `None` for all-time.
    pub fn span(self) -> Option<u64> {
        match self {
            Window::LastDay => Some(SECONDS_PER_DAY),
            Window::LastWeek => Some(7 * SECONDS_PER_DAY),
            Window::LastMonth => Some(30 * SECONDS_PER_DAY),
            Window::AllTime => None,
        }
    }

    /// Rolling window `[as_of - span, as_of)`; all-time accepts everything.
    pub fn contains(self, ts: u64, as_of: u64) -> bool {
        match self.span() {
            Some(span) => ts < as_of && ts >= as_of.saturating_sub(span),
            None => true,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Window::LastDay => "lastday",
            Window::LastWeek => "lastweek",
            Window::LastMonth => "lastmonth",
            Window::AllTime => "alltime",
        }
    }
}

impl FromStr for Window {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Window::ALL
            .into_iter()
            .find(|w| w.token() == s)
            .ok_or_else(|| format!("unknown window {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeStat {
    SinceFirstTime,
    SincePrevTime,
}

impl TimeStat {
    pub fn token(self) -> &'static str {
        match self {
            TimeStat::SinceFirstTime => "sincefirst",
            TimeStat::SincePrevTime => "sinceprev",
        }
    }
}

impl FromStr for TimeStat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sincefirst" => Ok(TimeStat::SinceFirstTime),
            "sinceprev" => Ok(TimeStat::SincePrevTime),
            _ => Err(format!("unknown time statistic {s:?}")),
        }
    }
}

/// Canonical aggregate descriptor. An explicit all-time window is stored as
/// `None` so that every key has exactly one serialization.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackerKey {
    pub action: ActionFilter,
    pub dims: DimSet,
    pub window: Option<Window>,
    pub time_stat: Option<TimeStat>,
}

impl TrackerKey {
    pub fn count(action: ActionFilter, dims: DimSet, window: Window) -> Self {
        TrackerKey {
            action,
            dims,
            window: (window != Window::AllTime).then_some(window),
            time_stat: None,
        }
    }

    pub fn time(action: ActionFilter, dims: DimSet, stat: TimeStat) -> Self {
        TrackerKey {
            action,
            dims,
            window: None,
            time_stat: Some(stat),
        }
    }

    pub fn effective_window(&self) -> Window {
        self.window.unwrap_or(Window::AllTime)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.is_some() && self.time_stat.is_some() {
            return Err(Error::Schema(format!("{self}: window and time statistic are exclusive")));
        }
        if self.window == Some(Window::AllTime) {
            return Err(Error::Schema(format!("{self}: all-time window must be implicit")));
        }
        Ok(())
    }

    pub fn is_temporal(&self) -> bool {
        self.window.is_some() || self.time_stat.is_some()
    }
}

impl fmt::Display for TrackerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.action.token(), self.dims)?;
        if let Some(w) = self.window {
            write!(f, "@{}", w.token())?;
        }
        if let Some(t) = self.time_stat {
            write!(f, "~{}", t.token())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TrackerKind {
    Count(TrackerKey),
    Ratio(TrackerKey, TrackerKey),
    TimeDelta(TrackerKey),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrackerSpec {
    pub kind: TrackerKind,
    pub feature_name: String,
}

impl TrackerSpec {
    pub fn new(kind: TrackerKind) -> Result<Self> {
        match &kind {
            TrackerKind::Count(k) => {
                k.validate()?;
                if k.time_stat.is_some() {
                    return Err(Error::Schema(format!("count {k} carries a time statistic")));
                }
            }
            TrackerKind::TimeDelta(k) => {
                k.validate()?;
                if k.time_stat.is_none() {
                    return Err(Error::Schema(format!("delta {k} needs a time statistic")));
                }
            }
            TrackerKind::Ratio(num, den) => {
                num.validate()?;
                den.validate()?;
                if num.time_stat.is_some() || den.time_stat.is_some() {
                    return Err(Error::Schema("ratio terms must be counts".into()));
                }
                // Numerator events must be a subset of denominator events.
                if !den.dims.is_subset_of(&num.dims) {
                    return Err(Error::Schema(format!(
                        "ratio {num} / {den}: denominator dims must be a subset of numerator dims"
                    )));
                }
                if !den.action.covers(num.action) {
                    return Err(Error::Schema(format!(
                        "ratio {num} / {den}: denominator action must cover numerator action"
                    )));
                }
                if num.effective_window() > den.effective_window() {
                    return Err(Error::Schema(format!(
                        "ratio {num} / {den}: numerator window must nest in denominator window"
                    )));
                }
            }
        }
        let feature_name = match &kind {
            TrackerKind::Count(k) | TrackerKind::TimeDelta(k) => k.to_string(),
            TrackerKind::Ratio(n, d) => format!("{n}/{d}"),
        };
        Ok(TrackerSpec { kind, feature_name })
    }

    /// Keys whose aggregates must be materialized to evaluate this spec.
    pub fn keys(&self) -> Vec<&TrackerKey> {
        match &self.kind {
            TrackerKind::Count(k) | TrackerKind::TimeDelta(k) => vec![k],
            TrackerKind::Ratio(n, d) => vec![n, d],
        }
    }

    /// Dimensions whose values must be supplied at lookup.
    pub fn lookup_dims(&self) -> &DimSet {
        match &self.kind {
            TrackerKind::Count(k) | TrackerKind::TimeDelta(k) | TrackerKind::Ratio(k, _) => &k.dims,
        }
    }

    pub fn to_line(&self) -> String {
        let count_terms = |k: &TrackerKey| {
            let mut s = format!("{} {}", k.action.token(), k.dims);
            if let Some(w) = k.window {
                s.push(' ');
                s.push_str(w.token());
            }
            s
        };
        match &self.kind {
            TrackerKind::Count(k) => format!("count {}", count_terms(k)),
            TrackerKind::Ratio(n, d) => format!("ratio {} / {}", count_terms(n), count_terms(d)),
            TrackerKind::TimeDelta(k) => format!(
                "delta {} {} {}",
                k.action.token(),
                k.dims,
                k.time_stat.map(TimeStat::token).unwrap_or_default()
            ),
        }
    }
}

fn parse_count_term(tokens: &[&str]) -> std::result::Result<TrackerKey, String> {
    match tokens {
        [action, dims] | [action, dims, _] => {
            let action = ActionFilter::from_str(action)?;
            let dims = DimSet::from_str(dims).map_err(|e| e.to_string())?;
            let window = match tokens.get(2) {
                Some(w) => Window::from_str(w)?,
                None => Window::AllTime,
            };
            Ok(TrackerKey::count(action, dims, window))
        }
        _ => Err(format!("expected `<action> <dims> [<window>]`, got {:?}", tokens.join(" "))),
    }
}

/// One parsed schema line.
#[derive(Clone, Debug, PartialEq)]
pub enum SpecLine {
    Tracker(TrackerSpec),
    Pattern,
}

pub fn parse_spec_line(line: &str) -> std::result::Result<Option<SpecLine>, String> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let kind = match tokens[0] {
        "pattern" if tokens.len() == 1 => return Ok(Some(SpecLine::Pattern)),
        "count" => TrackerKind::Count(parse_count_term(&tokens[1..])?),
        "ratio" => {
            let slash = tokens
                .iter()
                .position(|t| *t == "/")
                .ok_or_else(|| "ratio needs `/` between terms".to_string())?;
            TrackerKind::Ratio(
                parse_count_term(&tokens[1..slash])?,
                parse_count_term(&tokens[slash + 1..])?,
            )
        }
        "delta" => match &tokens[1..] {
            [action, dims, stat] => TrackerKind::TimeDelta(TrackerKey::time(
                ActionFilter::from_str(action)?,
                DimSet::from_str(dims).map_err(|e| e.to_string())?,
                TimeStat::from_str(stat)?,
            )),
            _ => return Err("expected `delta <action> <dims> <sincefirst|sinceprev>`".into()),
        },
        other => return Err(format!("unknown spec kind {other:?}")),
    };
    TrackerSpec::new(kind)
        .map(|s| Some(SpecLine::Tracker(s)))
        .map_err(|e| e.to_string())
}
