use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use super::context::ScoringContext;
use super::eval::{evaluate, test_cases, EvalResult, System, TestCase};
use super::pool::{build_pool, split_by_user, BuiltPool};
use super::popular::{popularity_spec, PopularityIndex};
use super::rank::CandidateConfig;
use crate::datamodel::{split_time_window, Catalog, EventLog, RegionId, ShopId, TimeWindow, UserId};
use crate::gbm::{fit_with_eval, llp, FitReport, GbmModel, GbmTrainConfig, ImportanceKind, TrainPool};
use crate::offer2vec::{last_sessions, sessions_from_log, train_dm_sessions, DmTrainConfig, EmbeddingModel, Session};
use crate::rng::substream;
use crate::trackers::{aggregate_sharded, FeatureSchema, FeatureType, RegionBins, TrackerStore};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Popular offers per shop entering candidate selection.
    pub k_init: usize,
    /// Candidates kept for final ranking.
    pub k_final: usize,
    /// Personalized features used while selecting candidates.
    pub n_pers: usize,
    /// Negatives per positive in the training pool.
    pub n_neg: usize,
    /// Popular offers per shop that negatives are drawn from.
    pub neg_popular: usize,
    /// Session gap δ in seconds.
    pub session_gap: u64,
    /// Share of pool users held out to measure LLP.
    pub eval_fraction: f64,
    pub top_k: usize,
    /// Feature : train : test span proportions.
    pub window_parts: (u64, u64, u64),
    /// Explicit region bins; the two busiest regions otherwise.
    pub region_bins: Option<(RegionId, RegionId)>,
    pub shards: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_init: 2000,
            k_final: 500,
            n_pers: 5,
            n_neg: 25,
            neg_popular: 2000,
            session_gap: super::super::offer2vec::DEFAULT_SESSION_GAP,
            eval_fraction: 0.1,
            top_k: 10,
            window_parts: (12, 1, 1),
            region_bins: None,
            shards: 8,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("pipeline: {m}")));
        if self.k_init == 0 || self.k_final == 0 || self.top_k == 0 {
            return bad("k_init, k_final and top_k must be >= 1");
        }
        if self.k_final > self.k_init {
            return bad("k_final must not exceed k_init");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)");
        }
        if self.window_parts.1 == 0 || self.window_parts.2 == 0 {
            return bad("train and test spans must be non-empty");
        }
        Ok(())
    }

    pub fn candidates(&self) -> CandidateConfig {
        CandidateConfig {
            k_init: self.k_init,
            k_final: self.k_final,
            n_pers: self.n_pers,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub pipeline: PipelineConfig,
    pub dm: DmTrainConfig,
    pub gbm: GbmTrainConfig,
    pub schema: FeatureSchema,
    pub seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            pipeline: PipelineConfig::default(),
            dm: DmTrainConfig::default(),
            gbm: GbmTrainConfig::default(),
            schema: FeatureSchema::default_schema(),
            seed: 0,
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.dm.validate()?;
        self.gbm.validate()
    }

    /// Stage configs with the global seed applied.
    pub fn seeded_dm(&self) -> DmTrainConfig {
        DmTrainConfig {
            seed: self.seed,
            ..self.dm.clone()
        }
    }

    pub fn seeded_gbm(&self) -> GbmTrainConfig {
        GbmTrainConfig {
            seed: self.seed,
            ..self.gbm.clone()
        }
    }
}

/// Event spans of one run: features before `feature_end`, labels in
/// `[feature_end, train_end)`, held-out test sessions after.
#[derive(Clone, Debug)]
pub struct Phases {
    pub window: TimeWindow,
    pub past: EventLog,
    pub future: EventLog,
    /// Everything before `train_end` (features at evaluation time).
    pub before_test: EventLog,
    pub held_out: EventLog,
}

pub fn split_phases(log: &EventLog, parts: (u64, u64, u64)) -> Result<Phases> {
    let (first, last) = match (log.first_ts(), log.last_ts()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config("event log is empty".into())),
    };
    let window = TimeWindow::from_ratios(first, last + 1, parts.0, parts.1, parts.2)?;
    let split = split_time_window(log, window);
    Ok(Phases {
        window,
        past: split.past,
        future: split.future,
        before_test: log.range(first, window.train_end),
        held_out: log.range(window.train_end, last + 1),
    })
}

/// The two regions with the most events (ties to the lower id).
pub fn choose_region_bins(log: &EventLog) -> RegionBins {
    let mut counts: HashMap<RegionId, u64> = HashMap::new();
    for e in log {
        *counts.entry(e.region).or_default() += 1;
    }
    let mut v: Vec<(RegionId, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let a = v.first().map_or(RegionId(0), |p| p.0);
    let b = v.get(1).map_or(RegionId(1), |p| p.0);
    RegionBins::new(a, b)
}

/// Aggregates every tracker of `schema` plus the popularity counter.
pub fn build_store(
    log: &EventLog,
    catalog: &Catalog,
    schema: &FeatureSchema,
    bins: RegionBins,
    as_of: u64,
    shards: usize,
) -> Result<TrackerStore> {
    let mut specs = schema.tracker_specs();
    specs.push(popularity_spec());
    aggregate_sharded(log, catalog, bins, &specs, as_of, shards)
}

pub fn train_embedding(log: &EventLog, dm: &DmTrainConfig, gap: u64) -> Result<EmbeddingModel> {
    let sessions = sessions_from_log(log, gap);
    Ok(train_dm_sessions(&sessions, dm)?.model)
}

/// Stage outputs shared by every model trained on one corpus.
pub struct Prepared {
    pub phases: Phases,
    pub bins: RegionBins,
    pub train_store: TrackerStore,
    pub eval_store: TrackerStore,
    pub embedding: Option<EmbeddingModel>,
    pub train_recent: BTreeMap<(UserId, ShopId), Session>,
    pub eval_recent: BTreeMap<(UserId, ShopId), Session>,
    pub train_popular: PopularityIndex,
    pub eval_popular: PopularityIndex,
    pub cases: Vec<TestCase>,
}

/// Trackers at both time points, the embedding (trained on the feature
/// span only and reused at evaluation time) and the test users.
pub fn prepare(log: &EventLog, catalog: &Catalog, s: &RunSettings) -> Result<Prepared> {
    s.validate()?;
    let p = &s.pipeline;
    let phases = split_phases(log, p.window_parts)?;
    let bins = match p.region_bins {
        Some((a, b)) => RegionBins::new(a, b),
        None => choose_region_bins(&phases.past),
    };
    let w = phases.window;
    let train_store = build_store(&phases.past, catalog, &s.schema, bins, w.feature_end, p.shards)?;
    let eval_store = build_store(&phases.before_test, catalog, &s.schema, bins, w.train_end, p.shards)?;
    let embedding = match s.schema.pattern_index() {
        Some(_) => Some(train_embedding(&phases.past, &s.seeded_dm(), p.session_gap)?),
        None => None,
    };
    let cases = test_cases(&phases.before_test, &phases.held_out, p.session_gap)?;
    Ok(Prepared {
        train_recent: last_sessions(&phases.past, p.session_gap),
        eval_recent: last_sessions(&phases.before_test, p.session_gap),
        train_popular: PopularityIndex::new(&train_store)?,
        eval_popular: PopularityIndex::new(&eval_store)?,
        phases,
        bins,
        train_store,
        eval_store,
        embedding,
        cases,
    })
}

impl Prepared {
    pub fn train_context<'a>(&'a self, schema: &'a FeatureSchema, catalog: &'a Catalog) -> Result<ScoringContext<'a>> {
        ScoringContext::new(schema, &self.train_store, catalog, self.embedding.as_ref(), &self.train_recent)
    }

    pub fn eval_context<'a>(&'a self, schema: &'a FeatureSchema, catalog: &'a Catalog) -> Result<ScoringContext<'a>> {
        ScoringContext::new(schema, &self.eval_store, catalog, self.embedding.as_ref(), &self.eval_recent)
    }

    pub fn pool(&self, schema: &FeatureSchema, catalog: &Catalog, n_neg: usize, s: &RunSettings) -> Result<BuiltPool> {
        let ctx = self.train_context(schema, catalog)?;
        let mut rng = substream(s.seed, "pool/negatives");
        build_pool(
            &self.phases.future,
            &ctx,
            &self.train_popular,
            s.pipeline.neg_popular,
            n_neg,
            self.phases.window.feature_end,
            &mut rng,
        )
    }

    pub fn evaluate(
        &self,
        schema: &FeatureSchema,
        catalog: &Catalog,
        model: &GbmModel,
        system: System,
        s: &RunSettings,
    ) -> Result<EvalResult> {
        let ctx = self.eval_context(schema, catalog)?;
        evaluate(
            system,
            &self.cases,
            &ctx,
            model,
            &self.eval_popular,
            s.pipeline.candidates(),
            s.pipeline.top_k,
        )
    }
}

/// Splits a built pool into train/eval parts with the run's seed.
pub fn split_pool(built: &BuiltPool, s: &RunSettings) -> (TrainPool, TrainPool) {
    let mut rng = substream(s.seed, "pool/split");
    split_by_user(built, s.pipeline.eval_fraction, &mut rng)
}

/// Fits on the train part, tracking LLP on the held-out part when it has
/// positives.
pub fn fit_pool(train: &TrainPool, eval: &TrainPool, gbm: &GbmTrainConfig, schema: &FeatureSchema) -> Result<FitReport> {
    let eval = (eval.n_positive() > 0).then_some(eval);
    let mut r = fit_with_eval(train, eval, gbm)?;
    r.model.schema_hash = schema.hash();
    Ok(r)
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub fit: FitReport,
    pub pool_rows: usize,
    /// LLP of the final model on the held-out pool users.
    pub eval_llp: Option<f64>,
    pub results: Vec<EvalResult>,
}

impl RunSummary {
    pub fn result(&self, system: System) -> Option<&EvalResult> {
        self.results.iter().find(|r| r.system == system)
    }
}

fn train_and_evaluate(
    prep: &Prepared,
    catalog: &Catalog,
    schema: &FeatureSchema,
    s: &RunSettings,
    n_neg: usize,
    systems: &[System],
) -> Result<RunSummary> {
    let built = prep.pool(schema, catalog, n_neg, s)?;
    let (train, eval) = split_pool(&built, s);
    let fit = fit_pool(&train, &eval, &s.seeded_gbm(), schema)?;
    let eval_llp = if eval.n_positive() > 0 {
        Some(llp(&fit.model.predict_pool(&eval)?, eval.labels())?)
    } else {
        None
    };
    let results = systems
        .iter()
        .map(|&sys| prep.evaluate(schema, catalog, &fit.model, sys, s))
        .collect::<Result<_>>()?;
    Ok(RunSummary {
        fit,
        pool_rows: built.pool.len(),
        eval_llp,
        results,
    })
}

/// End-to-end run in memory, evaluating all three systems.
pub fn run_in_memory(log: &EventLog, catalog: &Catalog, s: &RunSettings) -> Result<RunSummary> {
    let prep = prepare(log, catalog, s)?;
    train_and_evaluate(&prep, catalog, &s.schema, s, s.pipeline.n_neg, &System::ALL)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Negatives per positive ∈ {5, 15, 25} at γ = 0.03.
    Neg,
    /// Shrinkage ∈ {0.3, 0.1, 0.03, 0.01}.
    Gamma,
    /// Retrain without each feature type.
    Ablation,
    /// Personalized vs popular candidates vs plain popularity.
    Candidates,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Neg,
        ExperimentKind::Gamma,
        ExperimentKind::Ablation,
        ExperimentKind::Candidates,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ExperimentKind::Neg => "neg",
            ExperimentKind::Gamma => "gamma",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::Candidates => "candidates",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_owned()))
    }
}

pub const NEG_SWEEP: [usize; 3] = [5, 15, 25];
pub const NEG_SWEEP_SHRINKAGE: f64 = 0.03;
pub const GAMMA_SWEEP: [f64; 4] = [0.3, 0.1, 0.03, 0.01];
/// Fraction of the slowest run's total improvement that defines the common
/// convergence threshold of a sweep.
pub const CONVERGENCE_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub label: String,
    pub system: System,
    pub mean_dcg: f64,
    pub n_users: usize,
    pub eval_llp: Option<f64>,
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub train_loss: Vec<f64>,
    pub train_llp: Vec<f64>,
    pub eval_llp: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub rows: Vec<ExperimentRow>,
    pub curves: Vec<Curve>,
    /// Common convergence threshold of a sweep (train loss for γ, train LLP
    /// for #neg).
    pub threshold: Option<f64>,
    /// Summed frequency importance per feature type of the full model.
    pub type_importance: Vec<(FeatureType, f64)>,
}

/// First iteration (1-based) whose value reaches `threshold`.
pub fn iterations_to_threshold(curve: &[f64], threshold: f64, decreasing: bool) -> Option<usize> {
    curve
        .iter()
        .position(|&v| if decreasing { v <= threshold } else { v >= threshold })
        .map(|i| i + 1)
}

fn curve(label: &str, fit: &FitReport) -> Curve {
    Curve {
        label: label.to_owned(),
        train_loss: fit.train_loss.clone(),
        train_llp: fit.train_llp.clone(),
        eval_llp: fit.eval_llp.clone(),
    }
}

fn row(label: String, run: &RunSummary, system: System) -> ExperimentRow {
    let r = run.result(system).expect("system evaluated");
    ExperimentRow {
        label,
        system,
        mean_dcg: r.mean_dcg,
        n_users: r.n_users(),
        eval_llp: run.eval_llp,
        iterations_to_threshold: None,
    }
}

pub fn type_importance(schema: &FeatureSchema, model: &GbmModel) -> Vec<(FeatureType, f64)> {
    let imp = model.feature_importance(ImportanceKind::Frequency);
    FeatureType::ALL
        .iter()
        .map(|&t| {
            let s = schema
                .features()
                .iter()
                .zip(&imp)
                .filter(|(f, _)| f.feature_type() == t)
                .map(|(_, v)| v)
                .sum();
            (t, s)
        })
        .collect()
}

pub fn run_experiment(kind: ExperimentKind, log: &EventLog, catalog: &Catalog, s: &RunSettings) -> Result<ExperimentOutput> {
    let prep = prepare(log, catalog, s)?;
    run_experiment_prepared(kind, &prep, catalog, s)
}

pub fn run_experiment_prepared(
    kind: ExperimentKind,
    prep: &Prepared,
    catalog: &Catalog,
    s: &RunSettings,
) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput {
        kind,
        rows: Vec::new(),
        curves: Vec::new(),
        threshold: None,
        type_importance: Vec::new(),
    };
    match kind {
        ExperimentKind::Neg => {
            let mut runs = Vec::new();
            for n in NEG_SWEEP {
                let mut si = s.clone();
                si.gbm.shrinkage = NEG_SWEEP_SHRINKAGE;
                log::info!("neg sweep: {n} negatives per positive");
                runs.push((n, train_and_evaluate(prep, catalog, &s.schema, &si, n, &[System::BoostJet])?));
            }
            // every run reaches half of the weakest run's final train LLP
            let tau = CONVERGENCE_FRACTION
                * runs
                    .iter()
                    .map(|(_, r)| *r.fit.train_llp.last().unwrap())
                    .fold(f64::INFINITY, f64::min);
            out.threshold = Some(tau);
            for (n, r) in &runs {
                let label = format!("neg={n}");
                let mut row = row(label.clone(), r, System::BoostJet);
                row.iterations_to_threshold = iterations_to_threshold(&r.fit.train_llp, tau, false);
                out.rows.push(row);
                out.curves.push(curve(&label, &r.fit));
            }
        }
        ExperimentKind::Gamma => {
            let mut runs = Vec::new();
            for g in GAMMA_SWEEP {
                let mut si = s.clone();
                si.gbm.shrinkage = g;
                log::info!("gamma sweep: shrinkage {g}");
                runs.push((g, train_and_evaluate(prep, catalog, &s.schema, &si, s.pipeline.n_neg, &[System::BoostJet])?));
            }
            // the same pool for every γ, so one absolute loss threshold
            let l0 = runs[0].1.fit.initial_loss;
            let worst = runs
                .iter()
                .map(|(_, r)| *r.fit.train_loss.last().unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let tau = l0 - CONVERGENCE_FRACTION * (l0 - worst);
            out.threshold = Some(tau);
            for (g, r) in &runs {
                let label = format!("gamma={g}");
                let mut row = row(label.clone(), r, System::BoostJet);
                row.iterations_to_threshold = iterations_to_threshold(&r.fit.train_loss, tau, true);
                out.rows.push(row);
                out.curves.push(curve(&label, &r.fit));
            }
        }
        ExperimentKind::Ablation => {
            let full = train_and_evaluate(prep, catalog, &s.schema, s, s.pipeline.n_neg, &[System::BoostJet])?;
            out.type_importance = type_importance(&s.schema, &full.fit.model);
            out.rows.push(row("all".into(), &full, System::BoostJet));
            out.curves.push(curve("all", &full.fit));
            for t in FeatureType::ALL {
                let schema = match s.schema.without_type(t) {
                    Ok(sc) if sc.len() < s.schema.len() => sc,
                    _ => continue,
                };
                log::info!("ablation: without {} features", t.token());
                let r = train_and_evaluate(prep, catalog, &schema, s, s.pipeline.n_neg, &[System::BoostJet])?;
                let label = format!("without-{}", t.token());
                out.rows.push(row(label.clone(), &r, System::BoostJet));
                out.curves.push(curve(&label, &r.fit));
            }
        }
        ExperimentKind::Candidates => {
            let r = train_and_evaluate(prep, catalog, &s.schema, s, s.pipeline.n_neg, &System::ALL)?;
            for sys in System::ALL {
                out.rows.push(row(sys.token().into(), &r, sys));
            }
            out.curves.push(curve("boostjet", &r.fit));
        }
    }
    Ok(out)
}
