//! File-backed pipeline stages. Each stage reads its inputs from the work
//! directory, checks their header hashes against the current configuration
//! and writes its own artifacts.

use std::cell::OnceCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use boostjet::datamodel::{load_catalog, load_event_log, Catalog, EventLog, OfferId, UserId};
use boostjet::gbm::{self, GbmModel, ImportanceKind, TrainPool};
use boostjet::offer2vec::{self, last_sessions, EmbeddingModel};
use boostjet::pipeline::{
    build_pool, build_store, choose_region_bins, dcg, evaluate, fit_pool, split_phases, split_pool, test_cases,
    train_embedding, Phases, PopularityIndex, ScoringContext, System, TestCase,
};
use boostjet::rng::substream;
use boostjet::trackers::{RegionBins, TrackerStore};

use crate::artifacts::{expect_header, file_digest, header, open, write_atomic};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Trackers,
    Embed,
    Pool,
    Train,
    Recommend,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Trackers,
        Stage::Embed,
        Stage::Pool,
        Stage::Train,
        Stage::Recommend,
        Stage::Eval,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Stage::Trackers => "trackers",
            Stage::Embed => "embed",
            Stage::Pool => "pool",
            Stage::Train => "train",
            Stage::Recommend => "recommend",
            Stage::Eval => "eval",
        }
    }

    pub fn exit_code(self) -> i32 {
        11 + self as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Stage {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Stage::ALL
            .into_iter()
            .find(|x| x.token() == s)
            .ok_or_else(|| CliError::Config(format!("unknown stage {s:?}")))
    }
}

/// `--stages` value: one stage means that stage and everything after it; a
/// comma list means exactly those stages, in pipeline order.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>, CliError> {
    let mut v: Vec<Stage> = list.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
    if v.len() == 1 {
        let first = v[0];
        return Ok(Stage::ALL.into_iter().filter(|s| *s >= first).collect());
    }
    v.sort();
    v.dedup();
    Ok(v)
}

pub const TRACKERS_TRAIN: &str = "trackers_train.txt";
pub const TRACKERS_EVAL: &str = "trackers_eval.txt";
pub const EMBEDDING: &str = "embedding.txt";
pub const POOL_TRAIN: &str = "pool_train.tsv";
pub const POOL_EVAL: &str = "pool_eval.tsv";
pub const MODEL: &str = "model.txt";
pub const CURVE: &str = "curve.tsv";
pub const IMPORTANCE: &str = "importance.tsv";
pub const TRAIN_SUMMARY: &str = "train_summary.tsv";
pub const RECOMMENDATIONS: &str = "recommendations.tsv";
pub const METRICS: &str = "metrics.tsv";

pub fn per_user_file(system: System) -> String {
    format!("per_user_{}.tsv", system.token())
}

fn stage_err(stage: Stage) -> impl Fn(boostjet::Error) -> CliError {
    move |e| CliError::from_core(stage.exit_code(), stage.token(), e)
}

fn write_err(path: PathBuf) -> impl Fn(std::io::Error) -> CliError {
    move |e| CliError::Io { path: path.clone(), source: e }
}

/// Lazily loaded inputs and stage hashes for one invocation.
pub struct Workspace<'a> {
    pub cfg: &'a RunConfig,
    data_hash: OnceCell<String>,
    inputs: OnceCell<(EventLog, Catalog, Phases)>,
}

impl<'a> Workspace<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Workspace {
            cfg,
            data_hash: OnceCell::new(),
            inputs: OnceCell::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.work_dir.join(name)
    }

    fn data_hash(&self) -> Result<&str, CliError> {
        if self.data_hash.get().is_none() {
            let h = format!(
                "{}:{}",
                file_digest(&self.cfg.events_path())?,
                file_digest(&self.cfg.catalog_path())?
            );
            let _ = self.data_hash.set(h);
        }
        Ok(self.data_hash.get().unwrap())
    }

    fn inputs(&self) -> Result<&(EventLog, Catalog, Phases), CliError> {
        if self.inputs.get().is_none() {
            let data = |e: boostjet::Error| CliError::from_core(3, "input", e);
            let log = load_event_log(self.cfg.events_path()).map_err(data)?;
            let catalog = Catalog::new(load_catalog(self.cfg.catalog_path()).map_err(data)?).map_err(data)?;
            let phases = split_phases(&log, self.cfg.settings.pipeline.window_parts).map_err(data)?;
            let _ = self.inputs.set((log, catalog, phases));
        }
        Ok(self.inputs.get().unwrap())
    }

    pub fn hash(&self, stage: Stage) -> Result<String, CliError> {
        let c = self.cfg;
        Ok(match stage {
            Stage::Trackers => c.hash_of(
                &["window.parts", "regions", "price_bins"],
                &[self.data_hash()?, &c.settings.schema.hash()],
            ),
            Stage::Embed => c.hash_of(&["window.parts", "session_gap", "dm.", "seed"], &[self.data_hash()?]),
            Stage::Pool => c.hash_of(
                &["n_neg", "neg_popular", "eval_fraction", "seed", "session_gap"],
                &[&self.hash(Stage::Trackers)?, &self.hash(Stage::Embed)?],
            ),
            Stage::Train => c.hash_of(&["gbm.", "seed"], &[&self.hash(Stage::Pool)?]),
            Stage::Recommend => c.hash_of(
                &["k_init", "k_final", "n_pers", "top_k", "session_gap"],
                &[&self.hash(Stage::Train)?],
            ),
            Stage::Eval => c.hash_of(&["top_k", "session_gap"], &[&self.hash(Stage::Recommend)?]),
        })
    }

    /// Checks the header of an upstream artifact and opens it.
    fn open_checked(&self, name: &str, stage: Stage) -> Result<std::io::BufReader<std::fs::File>, CliError> {
        let p = self.path(name);
        expect_header(&p, stage.token(), &self.hash(stage)?)?;
        open(&p)
    }

    fn load_store(&self, name: &str, by: Stage) -> Result<TrackerStore, CliError> {
        TrackerStore::read_dump(self.open_checked(name, Stage::Trackers)?).map_err(stage_err(by))
    }

    fn load_embedding(&self, by: Stage) -> Result<EmbeddingModel, CliError> {
        offer2vec::read_model(self.open_checked(EMBEDDING, Stage::Embed)?).map_err(stage_err(by))
    }

    fn load_model(&self, by: Stage) -> Result<GbmModel, CliError> {
        gbm::read_model(self.open_checked(MODEL, Stage::Train)?).map_err(stage_err(by))
    }

    fn load_pool(&self, name: &str, by: Stage) -> Result<TrainPool, CliError> {
        Ok(gbm::read_pool(self.open_checked(name, Stage::Pool)?).map_err(stage_err(by))?.0)
    }

    fn test_cases(&self, by: Stage) -> Result<Vec<TestCase>, CliError> {
        let (_, _, phases) = self.inputs()?;
        test_cases(&phases.before_test, &phases.held_out, self.cfg.settings.pipeline.session_gap).map_err(stage_err(by))
    }

    pub fn run(&self, stage: Stage) -> Result<(), CliError> {
        log::info!("stage {stage}");
        match stage {
            Stage::Trackers => self.trackers(),
            Stage::Embed => self.embed(),
            Stage::Pool => self.pool(),
            Stage::Train => self.train(),
            Stage::Recommend => self.recommend(),
            Stage::Eval => self.eval(),
        }
    }

    fn trackers(&self) -> Result<(), CliError> {
        let s = &self.cfg.settings;
        let (_, catalog, phases) = self.inputs()?;
        let bins = match s.pipeline.region_bins {
            Some((a, b)) => RegionBins::new(a, b),
            None => choose_region_bins(&phases.past),
        };
        let head = header(Stage::Trackers.token(), &self.hash(Stage::Trackers)?);
        let w = phases.window;
        for (name, log, as_of) in [
            (TRACKERS_TRAIN, &phases.past, w.feature_end),
            (TRACKERS_EVAL, &phases.before_test, w.train_end),
        ] {
            let store = build_store(log, catalog, &s.schema, bins, as_of, s.pipeline.shards)
                .map_err(stage_err(Stage::Trackers))?;
            write_atomic(&self.path(name), |f| store.write_dump(f, Some(&head)))?;
        }
        Ok(())
    }

    fn embed(&self) -> Result<(), CliError> {
        let s = &self.cfg.settings;
        let (_, _, phases) = self.inputs()?;
        let model =
            train_embedding(&phases.past, &s.seeded_dm(), s.pipeline.session_gap).map_err(stage_err(Stage::Embed))?;
        let head = header(Stage::Embed.token(), &self.hash(Stage::Embed)?);
        write_atomic(&self.path(EMBEDDING), |f| offer2vec::write_model(f, &model, Some(&head)))
    }

    fn pool(&self) -> Result<(), CliError> {
        let s = &self.cfg.settings;
        let p = &s.pipeline;
        let err = stage_err(Stage::Pool);
        let (_, catalog, phases) = self.inputs()?;
        let store = self.load_store(TRACKERS_TRAIN, Stage::Pool)?;
        let emb = self.load_embedding(Stage::Pool)?;
        let recent = last_sessions(&phases.past, p.session_gap);
        let ctx = ScoringContext::new(&s.schema, &store, catalog, Some(&emb), &recent).map_err(&err)?;
        let popular = PopularityIndex::new(&store).map_err(&err)?;
        let mut rng = substream(s.seed, "pool/negatives");
        let built = build_pool(
            &phases.future,
            &ctx,
            &popular,
            p.neg_popular,
            p.n_neg,
            phases.window.feature_end,
            &mut rng,
        )
        .map_err(&err)?;
        let (train, eval) = split_pool(&built, s);
        log::info!(
            "pool: {} rows ({} positive), {} held out",
            built.pool.len(),
            built.pool.n_positive(),
            eval.len()
        );
        let head = header(Stage::Pool.token(), &self.hash(Stage::Pool)?);
        let names = s.schema.names();
        write_atomic(&self.path(POOL_TRAIN), |f| gbm::write_pool(f, &train, &names, Some(&head)))?;
        write_atomic(&self.path(POOL_EVAL), |f| gbm::write_pool(f, &eval, &names, Some(&head)))
    }

    fn train(&self) -> Result<(), CliError> {
        let s = &self.cfg.settings;
        let train = self.load_pool(POOL_TRAIN, Stage::Train)?;
        let eval = self.load_pool(POOL_EVAL, Stage::Train)?;
        let report = fit_pool(&train, &eval, &s.seeded_gbm(), &s.schema).map_err(stage_err(Stage::Train))?;
        let head = header(Stage::Train.token(), &self.hash(Stage::Train)?);
        write_atomic(&self.path(MODEL), |f| gbm::write_model(f, &report.model, Some(&head)))?;
        write_atomic(&self.path(CURVE), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "iteration\ttrain_loss\teval_llp\ttrain_llp")?;
            for (i, l) in report.train_loss.iter().enumerate() {
                let e = report.eval_llp.get(i).map_or(String::new(), |v| v.to_string());
                writeln!(f, "{}\t{l}\t{e}\t{}", i + 1, report.train_llp[i])?;
            }
            Ok(())
        })?;
        let imp = report.model.feature_importance(ImportanceKind::Frequency);
        write_atomic(&self.path(IMPORTANCE), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "feature\ttype\timportance")?;
            for (feat, v) in s.schema.features().iter().zip(&imp) {
                writeln!(f, "{}\t{}\t{v}", feat.name(), feat.feature_type())?;
            }
            Ok(())
        })?;
        write_atomic(&self.path(TRAIN_SUMMARY), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "rows\t{}", train.len())?;
            writeln!(f, "initial_loss\t{}", report.initial_loss)?;
            writeln!(f, "train_loss\t{}", report.train_loss.last().copied().unwrap_or(f64::NAN))?;
            writeln!(f, "train_llp\t{}", report.train_llp.last().copied().unwrap_or(f64::NAN))?;
            match report.eval_llp.last() {
                Some(v) => writeln!(f, "eval_llp\t{v}"),
                None => writeln!(f, "eval_llp\t"),
            }
        })?;
        log::info!(
            "train: loss {:.6} -> {:.6}",
            report.initial_loss,
            report.train_loss.last().copied().unwrap_or(f64::NAN)
        );
        Ok(())
    }

    fn recommend(&self) -> Result<(), CliError> {
        let s = &self.cfg.settings;
        let p = &s.pipeline;
        let err = stage_err(Stage::Recommend);
        let (_, catalog, phases) = self.inputs()?;
        let store = self.load_store(TRACKERS_EVAL, Stage::Recommend)?;
        let emb = self.load_embedding(Stage::Recommend)?;
        let model = self.load_model(Stage::Recommend)?;
        if model.schema_hash != s.schema.hash() {
            return Err(CliError::Stale {
                path: self.path(MODEL),
                expected: format!("schema {}", s.schema.hash()),
                found: format!("schema {}", model.schema_hash),
            });
        }
        let recent = last_sessions(&phases.before_test, p.session_gap);
        let ctx = ScoringContext::new(&s.schema, &store, catalog, Some(&emb), &recent).map_err(&err)?;
        let popular = PopularityIndex::new(&store).map_err(&err)?;
        let cases = self.test_cases(Stage::Recommend)?;
        let mut results = Vec::new();
        for system in System::ALL {
            let r = evaluate(system, &cases, &ctx, &model, &popular, p.candidates(), p.top_k).map_err(&err)?;
            log::info!("recommend: {system} for {} users", r.n_users());
            results.push(r);
        }
        let head = header(Stage::Recommend.token(), &self.hash(Stage::Recommend)?);
        write_atomic(&self.path(RECOMMENDATIONS), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "system\tuser\tshop\trank\toffer")?;
            for r in &results {
                for (case, list) in cases.iter().zip(&r.recommendations) {
                    for (rank, o) in list.iter().enumerate() {
                        writeln!(f, "{}\t{}\t{}\t{}\t{}", r.system, case.user, case.shop, rank + 1, o)?;
                    }
                }
            }
            Ok(())
        })
    }

    fn eval(&self) -> Result<(), CliError> {
        let path = self.path(RECOMMENDATIONS);
        let reader = self.open_checked(RECOMMENDATIONS, Stage::Recommend)?;
        let mut lists: HashMap<(System, UserId), Vec<(usize, OfferId)>> = HashMap::new();
        use std::io::BufRead;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(write_err(path.clone()))?;
            if line.starts_with('#') || line.starts_with("system\t") {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || CliError::Stage {
                stage: Stage::Eval.token().into(),
                code: Stage::Eval.exit_code(),
                message: format!("{}:{}: malformed recommendation row", path.display(), i + 1),
            };
            if f.len() != 5 {
                return Err(bad());
            }
            let system: System = f[0].parse().map_err(|_| bad())?;
            let user = UserId(f[1].parse().map_err(|_| bad())?);
            let rank: usize = f[3].parse().map_err(|_| bad())?;
            let offer = OfferId(f[4].parse().map_err(|_| bad())?);
            lists.entry((system, user)).or_default().push((rank, offer));
        }
        let cases = self.test_cases(Stage::Eval)?;
        let head = header(Stage::Eval.token(), &self.hash(Stage::Eval)?);
        let mut summary: BTreeMap<System, (f64, usize)> = BTreeMap::new();
        for system in System::ALL {
            let per_user: Vec<(UserId, f64)> = cases
                .iter()
                .map(|c| {
                    let mut l = lists.remove(&(system, c.user)).unwrap_or_default();
                    l.sort_unstable();
                    (c.user, dcg(l.into_iter().map(|p| p.1), &c.relevant))
                })
                .collect();
            let mean = per_user.iter().map(|p| p.1).sum::<f64>() / per_user.len() as f64;
            summary.insert(system, (mean, per_user.len()));
            write_atomic(&self.path(&per_user_file(system)), |f| {
                writeln!(f, "# {head}")?;
                writeln!(f, "user_id\tdcg")?;
                for (u, d) in &per_user {
                    writeln!(f, "{u}\t{d}")?;
                }
                Ok(())
            })?;
        }
        write_atomic(&self.path(METRICS), |f| {
            writeln!(f, "# {head}")?;
            writeln!(f, "system\tmean_dcg\tn_users")?;
            for (system, (mean, n)) in &summary {
                writeln!(f, "{system}\t{mean}\t{n}")?;
            }
            Ok(())
        })?;
        for (system, (mean, n)) in &summary {
            println!("{system}\t{mean:.6}\t{n}");
        }
        Ok(())
    }
}

/// Reads `metrics.tsv` back as `(system, mean_dcg, n_users)` rows.
pub fn read_metrics(path: &std::path::Path) -> Result<Vec<(System, f64, usize)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(write_err(path.to_owned()))?;
    let bad = || CliError::Config(format!("{}: malformed metrics file", path.display()));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("system\t"))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_lists() {
        assert_eq!(parse_stages("train").unwrap(), vec![Stage::Train, Stage::Recommend, Stage::Eval]);
        assert_eq!(parse_stages("eval,pool").unwrap(), vec![Stage::Pool, Stage::Eval]);
        assert!(matches!(parse_stages("fit"), Err(CliError::Config(_))));
        let codes: Vec<i32> = Stage::ALL.iter().map(|s| s.exit_code()).collect();
        assert_eq!(codes, vec![11, 12, 13, 14, 15, 16]);
    }
}
