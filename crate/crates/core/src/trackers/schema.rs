//! Ordered feature schema: tracker specs plus the session pattern feature.

use std::fmt;
use std::str::FromStr;

use super::key::{parse_spec_line, Dim, SpecLine, TrackerSpec};
use crate::error::{Error, Result};
use crate::rng::short_hash;

pub const PATTERN_FEATURE: &str = "pattern[offer2vec]";

/// Number of tracker features kept by [`FeatureSchema::default_schema`].
pub const DEFAULT_TRACKER_FEATURES: usize = 249;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureType {
    Content,
    Temporal,
    Demographic,
    Price,
    Pattern,
}

impl FeatureType {
    pub const ALL: [FeatureType; 5] = [
        FeatureType::Content,
        FeatureType::Temporal,
        FeatureType::Demographic,
        FeatureType::Price,
        FeatureType::Pattern,
    ];

    pub fn token(self) -> &'static str {
        match self {
            FeatureType::Content => "content",
            FeatureType::Temporal => "temporal",
            FeatureType::Demographic => "demographic",
            FeatureType::Price => "price",
            FeatureType::Pattern => "pattern",
        }
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for FeatureType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FeatureType::ALL
            .into_iter()
            .find(|t| t.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature type {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Tracker(TrackerSpec),
    Pattern,
}

impl Feature {
    pub fn name(&self) -> &str {
        match self {
            Feature::Tracker(s) => &s.feature_name,
            Feature::Pattern => PATTERN_FEATURE,
        }
    }

    /// Temporal wins over demographic, which wins over price; whatever is
    /// left is content.
    pub fn feature_type(&self) -> FeatureType {
        let spec = match self {
            Feature::Pattern => return FeatureType::Pattern,
            Feature::Tracker(s) => s,
        };
        let keys = spec.keys();
        if keys.iter().any(|k| k.is_temporal()) {
            FeatureType::Temporal
        } else if keys.iter().any(|k| k.dims.contains(Dim::RegionBin)) {
            FeatureType::Demographic
        } else if keys.iter().any(|k| k.dims.contains(Dim::PriceBin)) {
            FeatureType::Price
        } else {
            FeatureType::Content
        }
    }

    /// User-dependent features: anything keyed by the user or the user's
    /// region, plus the session pattern.
    pub fn is_personalized(&self) -> bool {
        match self {
            Feature::Pattern => true,
            Feature::Tracker(s) => s
                .keys()
                .iter()
                .any(|k| k.dims.contains(Dim::UserId) || k.dims.contains(Dim::RegionBin)),
        }
    }

    fn to_line(&self) -> String {
        match self {
            Feature::Tracker(s) => s.to_line(),
            Feature::Pattern => "pattern".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut names: Vec<&str> = features.iter().map(Feature::name).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate feature {}", w[0])));
        }
        if features.is_empty() {
            return Err(Error::Schema("empty feature schema".into()));
        }
        Ok(FeatureSchema { features })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        for (i, line) in text.lines().enumerate() {
            match parse_spec_line(line).map_err(|r| Error::parse(i + 1, 1, r))? {
                Some(SpecLine::Tracker(s)) => features.push(Feature::Tracker(s)),
                Some(SpecLine::Pattern) => features.push(Feature::Pattern),
                None => {}
            }
        }
        FeatureSchema::new(features)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&f.to_line());
            out.push('\n');
        }
        out
    }

    /// 249 generated tracker features followed by the pattern feature.
    pub fn default_schema() -> Self {
        FeatureSchema::parse(&default_schema_text()).expect("built-in schema is valid")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name().to_string()).collect()
    }

    pub fn tracker_specs(&self) -> Vec<TrackerSpec> {
        self.features
            .iter()
            .filter_map(|f| match f {
                Feature::Tracker(s) => Some(s.clone()),
                Feature::Pattern => None,
            })
            .collect()
    }

    pub fn pattern_index(&self) -> Option<usize> {
        self.features.iter().position(|f| *f == Feature::Pattern)
    }

    /// Schema minus every feature of the given type.
    pub fn without_type(&self, t: FeatureType) -> Result<Self> {
        FeatureSchema::new(
            self.features
                .iter()
                .filter(|f| f.feature_type() != t)
                .cloned()
                .collect(),
        )
    }

    pub fn hash(&self) -> String {
        short_hash(self.to_text().as_bytes())
    }
}

const OFFER_DIMS: &[&str] = &[
    "shop,offer",
    "shop,brand",
    "shop,category",
    "shop,vendor",
    "shop,model",
    "shop,namecat",
    "shop,pricebin",
    "shop,offer,region",
    "shop,region",
    "shop,pricebin,region",
    "shop,category,region",
];

const USER_DIMS: &[&str] = &[
    "shop,user",
    "shop,user,brand",
    "shop,user,category",
    "shop,user,pricebin",
    "shop,user,offer",
    "shop,user,vendor",
    "shop,user,namecat",
    "user",
    "user,category",
];

/// Crosses actions, dimension sets and windows into ratio, delta and count
/// trackers (in that priority order), truncated to
/// [`DEFAULT_TRACKER_FEATURES`], then appends `pattern`.
pub fn default_schema_text() -> String {
    let mut lines: Vec<String> = Vec::new();

    for a in ["any", "clicks", "purchases"] {
        for (num, den) in [
            ("shop,offer,brand", "shop,brand"),
            ("shop,offer,category", "shop,category"),
            ("shop,offer,region", "shop,region"),
            ("shop,offer", "shop"),
            ("shop,offer,pricebin", "shop,pricebin"),
            ("shop,user,category", "shop,user"),
            ("shop,user,brand", "shop,user"),
            ("shop,user,pricebin", "shop,user"),
            ("shop,user,offer", "shop,user"),
        ] {
            lines.push(format!("ratio {a} {num} / {a} {den}"));
        }
    }
    for a in ["any", "clicks"] {
        for (dims, w1, w2) in [
            ("shop,offer", "lastday", "lastweek"),
            ("shop,offer", "lastweek", "lastmonth"),
            ("shop,offer", "lastmonth", "alltime"),
            ("shop,category", "lastweek", "alltime"),
            ("shop,user", "lastweek", "alltime"),
        ] {
            lines.push(format!("ratio {a} {dims} {w1} / {a} {dims} {w2}"));
        }
    }
    for (num, den) in [
        ("purchases shop,offer", "any shop,offer"),
        ("clicks shop,offer", "any shop,offer"),
        ("adds shop,offer", "any shop,offer"),
        ("clicks shop,user", "any shop,user"),
        ("purchases shop,user,category", "any shop,user,category"),
    ] {
        lines.push(format!("ratio {num} / {den}"));
    }
    for a in ["any", "clicks"] {
        for dims in [
            "shop,user",
            "shop,user,brand",
            "shop,user,category",
            "shop,user,offer",
            "shop,offer",
            "shop,user,pricebin",
        ] {
            for stat in ["sinceprev", "sincefirst"] {
                lines.push(format!("delta {a} {dims} {stat}"));
            }
        }
    }
    let all_dims = || OFFER_DIMS.iter().chain(USER_DIMS);
    for dims in all_dims() {
        for (a, w) in [
            ("any", "alltime"),
            ("any", "lastweek"),
            ("clicks", "alltime"),
            ("clicks", "lastweek"),
            ("purchases", "alltime"),
            ("adds", "alltime"),
        ] {
            lines.push(format!("count {a} {dims} {w}"));
        }
    }
    for dims in all_dims() {
        for w in ["lastday", "lastmonth"] {
            lines.push(format!("count any {dims} {w}"));
        }
    }
    for dims in all_dims() {
        for (a, w) in [
            ("details", "alltime"),
            ("clicks", "lastmonth"),
            ("purchases", "lastweek"),
            ("adds", "lastweek"),
        ] {
            lines.push(format!("count {a} {dims} {w}"));
        }
    }
    assert!(lines.len() >= DEFAULT_TRACKER_FEATURES);
    lines.truncate(DEFAULT_TRACKER_FEATURES);
    lines.push("pattern".into());
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Marks which features take part in a restricted (candidate-selection)
/// scoring view: all non-personalized features plus `keep`.
pub fn restricted_mask(schema: &FeatureSchema, keep: &[usize]) -> Vec<bool> {
    schema
        .features()
        .iter()
        .enumerate()
        .map(|(i, f)| !f.is_personalized() || keep.contains(&i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_250_unique_features() {
        let s = FeatureSchema::default_schema();
        assert_eq!(s.len(), 250);
        assert_eq!(s.pattern_index(), Some(249));
        let reparsed = FeatureSchema::parse(&s.to_text()).unwrap();
        assert_eq!(reparsed, s);
        for t in FeatureType::ALL {
            assert!(
                s.features().iter().any(|f| f.feature_type() == t),
                "no feature of type {t}"
            );
        }
    }

    #[test]
    fn ablating_temporal_drops_windows_and_deltas() {
        let s = FeatureSchema::default_schema();
        let ablated = s.without_type(FeatureType::Temporal).unwrap();
        assert!(ablated.len() < s.len());
        for f in ablated.tracker_specs() {
            assert!(f.keys().iter().all(|k| k.window.is_none() && k.time_stat.is_none()));
        }
    }

    #[test]
    fn personalized_covers_user_region_and_pattern() {
        let s = FeatureSchema::parse(
            "count clicks shop,user\ncount any shop,offer\ncount any shop,offer,region\npattern\n",
        )
        .unwrap();
        let p: Vec<bool> = s.features().iter().map(Feature::is_personalized).collect();
        assert_eq!(p, vec![true, false, true, true]);
        assert_eq!(restricted_mask(&s, &[0]), vec![true, true, false, false]);
    }

    #[test]
    fn duplicate_features_rejected() {
        assert!(FeatureSchema::parse("count any shop\ncount any shop alltime\n").is_err());
    }
}
