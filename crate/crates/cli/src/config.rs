//! Flat `key = value` run configuration.
//!
//! Precedence is CLI flag > config file > built-in default. The effective
//! configuration is written back in the same format, so an echoed config can
//! be fed to a later run unchanged.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use boostjet::datamodel::{RegionId, SynthConfig};
use boostjet::pipeline::RunSettings;
use boostjet::trackers::{FeatureSchema, PRICE_BINS};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub work_dir: PathBuf,
    /// Event log; `<work_dir>/events.tsv` when unset.
    pub events: Option<PathBuf>,
    /// Offer catalog; `<work_dir>/catalog.tsv` when unset.
    pub catalog: Option<PathBuf>,
    /// Feature schema file; the built-in 250-feature schema when unset.
    pub schema_path: Option<PathBuf>,
    pub synth: SynthConfig,
    pub settings: RunSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            work_dir: PathBuf::from("work"),
            events: None,
            catalog: None,
            schema_path: None,
            synth: SynthConfig::default(),
            settings: RunSettings::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_or_dash(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("-".into(), |p| p.display().to_string())
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (v != "-" && !v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn events_path(&self) -> PathBuf {
        self.events.clone().unwrap_or_else(|| self.work_dir.join("events.tsv"))
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.catalog.clone().unwrap_or_else(|| self.work_dir.join("catalog.tsv"))
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed
    }

    /// Applies one setting. `preset` rewrites the candidate sizes and should
    /// come before the keys it would otherwise override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let s = &mut self.settings;
        let p = &mut s.pipeline;
        match key {
            "seed" => {
                s.seed = parse(key, value)?;
                self.synth.seed = s.seed;
            }
            "work_dir" => self.work_dir = PathBuf::from(value),
            "events" => self.events = opt_path(value),
            "catalog" => self.catalog = opt_path(value),
            "schema" => self.schema_path = opt_path(value),
            "preset" => match value {
                "desk" => {
                    p.k_init = 2000;
                    p.k_final = 500;
                    p.n_pers = 5;
                }
                "production" => {
                    p.k_init = 20_000;
                    p.k_final = 5000;
                    p.n_pers = 5;
                }
                _ => return Err(CliError::Config(format!("preset: unknown preset {value:?}"))),
            },
            "synth.n_users" => self.synth.n_users = parse(key, value)?,
            "synth.n_offers" => self.synth.n_offers = parse(key, value)?,
            "synth.n_shops" => self.synth.n_shops = parse(key, value)?,
            "synth.n_regions" => self.synth.n_regions = parse(key, value)?,
            "synth.duration_days" => self.synth.duration_days = parse(key, value)?,
            "synth.n_events" => self.synth.n_events = parse(key, value)?,
            "synth.latent_dim" => self.synth.latent_dim = parse(key, value)?,
            "synth.action_mix" => {
                let v: Vec<f64> = parse_list(key, value)?;
                self.synth.action_mix = v
                    .try_into()
                    .map_err(|_| CliError::Config("synth.action_mix: expected 4 values".into()))?;
            }
            "window.parts" => {
                let v: Vec<u64> = parse_list(key, value)?;
                let [a, b, c] = v[..] else {
                    return Err(CliError::Config("window.parts: expected 3 values".into()));
                };
                p.window_parts = (a, b, c);
            }
            "regions" => {
                p.region_bins = if value == "auto" {
                    None
                } else {
                    let v: Vec<u64> = parse_list(key, value)?;
                    let [a, b] = v[..] else {
                        return Err(CliError::Config("regions: expected \"auto\" or two region ids".into()));
                    };
                    Some((RegionId(a), RegionId(b)))
                }
            }
            "price_bins" => {
                let m: u64 = parse(key, value)?;
                if m != PRICE_BINS {
                    return Err(CliError::Config(format!("price_bins: only {PRICE_BINS} is supported")));
                }
            }
            "k_init" => p.k_init = parse(key, value)?,
            "k_final" => p.k_final = parse(key, value)?,
            "n_pers" => p.n_pers = parse(key, value)?,
            "n_neg" => p.n_neg = parse(key, value)?,
            "neg_popular" => p.neg_popular = parse(key, value)?,
            "session_gap" => p.session_gap = parse(key, value)?,
            "eval_fraction" => p.eval_fraction = parse(key, value)?,
            "top_k" => p.top_k = parse(key, value)?,
            "shards" => p.shards = parse(key, value)?,
            "dm.dim" => s.dm.dim = parse(key, value)?,
            "dm.window" => s.dm.window = parse(key, value)?,
            "dm.negatives" => s.dm.negatives = parse(key, value)?,
            "dm.epochs" => s.dm.epochs = parse(key, value)?,
            "dm.alpha" => s.dm.alpha = parse(key, value)?,
            "dm.min_alpha" => s.dm.min_alpha = parse(key, value)?,
            "dm.noise_exponent" => s.dm.noise_exponent = parse(key, value)?,
            "dm.min_count" => s.dm.min_count = parse(key, value)?,
            "dm.per_shop" => s.dm.per_shop = parse(key, value)?,
            "gbm.iterations" => s.gbm.iterations = parse(key, value)?,
            "gbm.shrinkage" => s.gbm.shrinkage = parse(key, value)?,
            "gbm.depth" => s.gbm.depth = parse(key, value)?,
            "gbm.subsample" => s.gbm.subsample = parse(key, value)?,
            "gbm.bins" => s.gbm.bins = parse(key, value)?,
            "gbm.exact" => s.gbm.exact = parse(key, value)?,
            "gbm.min_samples_leaf" => s.gbm.min_samples_leaf = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Loads the schema file if one is configured and validates everything.
    pub fn finish(&mut self) -> Result<(), CliError> {
        if let Some(p) = &self.schema_path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read schema {}: {e}", p.display())))?;
            self.settings.schema = FeatureSchema::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.settings.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Every setting in a fixed order. Floats print in shortest round-trip
    /// form, so parsing the echo reproduces the config exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.settings;
        let p = &s.pipeline;
        let y = &self.synth;
        vec![
            ("seed", s.seed.to_string()),
            ("work_dir", self.work_dir.display().to_string()),
            ("events", path_or_dash(&self.events)),
            ("catalog", path_or_dash(&self.catalog)),
            ("schema", path_or_dash(&self.schema_path)),
            ("synth.n_users", y.n_users.to_string()),
            ("synth.n_offers", y.n_offers.to_string()),
            ("synth.n_shops", y.n_shops.to_string()),
            ("synth.n_regions", y.n_regions.to_string()),
            ("synth.duration_days", y.duration_days.to_string()),
            ("synth.n_events", y.n_events.to_string()),
            ("synth.latent_dim", y.latent_dim.to_string()),
            ("synth.action_mix", list(&y.action_mix)),
            (
                "window.parts",
                list(&[p.window_parts.0, p.window_parts.1, p.window_parts.2]),
            ),
            (
                "regions",
                p.region_bins.map_or("auto".into(), |(a, b)| format!("{},{}", a.0, b.0)),
            ),
            ("price_bins", PRICE_BINS.to_string()),
            ("k_init", p.k_init.to_string()),
            ("k_final", p.k_final.to_string()),
            ("n_pers", p.n_pers.to_string()),
            ("n_neg", p.n_neg.to_string()),
            ("neg_popular", p.neg_popular.to_string()),
            ("session_gap", p.session_gap.to_string()),
            ("eval_fraction", p.eval_fraction.to_string()),
            ("top_k", p.top_k.to_string()),
            ("shards", p.shards.to_string()),
            ("dm.dim", s.dm.dim.to_string()),
            ("dm.window", s.dm.window.to_string()),
            ("dm.negatives", s.dm.negatives.to_string()),
            ("dm.epochs", s.dm.epochs.to_string()),
            ("dm.alpha", s.dm.alpha.to_string()),
            ("dm.min_alpha", s.dm.min_alpha.to_string()),
            ("dm.noise_exponent", s.dm.noise_exponent.to_string()),
            ("dm.min_count", s.dm.min_count.to_string()),
            ("dm.per_shop", s.dm.per_shop.to_string()),
            ("gbm.iterations", s.gbm.iterations.to_string()),
            ("gbm.shrinkage", s.gbm.shrinkage.to_string()),
            ("gbm.depth", s.gbm.depth.to_string()),
            ("gbm.subsample", s.gbm.subsample.to_string()),
            ("gbm.bins", s.gbm.bins.to_string()),
            ("gbm.exact", s.gbm.exact.to_string()),
            ("gbm.min_samples_leaf", s.gbm.min_samples_leaf.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Hash over the named settings plus extra parts (upstream hashes,
    /// content digests). Keys ending in `.` select a whole group; `""`
    /// selects everything.
    pub fn hash_of(&self, keys: &[&str], extra: &[&str]) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if keys
                .iter()
                .any(|sel| sel.is_empty() || if sel.ends_with('.') { k.starts_with(sel) } else { k == *sel })
            {
                h.update(format!("{k}={v}\n"));
            }
        }
        for e in extra {
            h.update(format!("+{e}\n"));
        }
        hex::encode(&h.finalize()[..16])
    }
}
