//! Shared fixtures for the criterion benches: a small synthetic corpus and
//! the artifacts each stage consumes.

use boostjet::datamodel::{synth_generate, Catalog, EventLog, SynthConfig};
use boostjet::gbm::TrainPool;
use boostjet::pipeline::{prepare, split_pool, Prepared, RunSettings};

pub struct Fixture {
    pub log: EventLog,
    pub catalog: Catalog,
    pub settings: RunSettings,
    pub prepared: Prepared,
    pub pool: TrainPool,
}

/// 1,000 users, 400 offers, 4 shops, 20,000 events over 60 days.
pub fn small_corpus() -> (EventLog, Catalog) {
    let cfg = SynthConfig {
        n_users: 1_000,
        n_offers: 400,
        n_shops: 4,
        n_events: 20_000,
        duration_days: 60,
        seed: 1,
        ..Default::default()
    };
    let (log, offers) = synth_generate(&cfg).expect("valid synth config");
    (log, Catalog::new(offers).expect("unique offer ids"))
}

pub fn fixture() -> Fixture {
    let (log, catalog) = small_corpus();
    let mut settings = RunSettings::default();
    settings.pipeline.k_init = 100;
    settings.pipeline.k_final = 30;
    settings.gbm.iterations = 20;
    let prepared = prepare(&log, &catalog, &settings).expect("prepare");
    let built = prepared
        .pool(&settings.schema, &catalog, settings.pipeline.n_neg, &settings)
        .expect("pool");
    let (pool, _) = split_pool(&built, &settings);
    Fixture {
        log,
        catalog,
        settings,
        prepared,
        pool,
    }
}
