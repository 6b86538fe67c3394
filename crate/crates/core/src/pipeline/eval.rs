use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::context::ScoringContext;
use super::popular::PopularityIndex;
use super::rank::{dcg, popular_candidates, recommend, CandidateConfig, CandidateGenerator};
use crate::datamodel::{Action, EventLog, OfferId, ShopId, UserId};
use crate::gbm::GbmModel;
use crate::offer2vec::sessions_from_log;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum System {
    /// Personalized candidates, full-model ranking.
    BoostJet,
    /// Most popular candidates, full-model ranking.
    BoostJetPop,
    /// Most popular unseen offers, no model.
    Popularity,
}

impl System {
    pub const ALL: [System; 3] = [System::BoostJet, System::BoostJetPop, System::Popularity];

    pub fn token(self) -> &'static str {
        match self {
            System::BoostJet => "boostjet",
            System::BoostJetPop => "boostjet-pop",
            System::Popularity => "popularity",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for System {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        System::ALL
            .into_iter()
            .find(|x| x.token() == s)
            .ok_or_else(|| Error::Config(format!("unknown system {s:?}")))
    }
}

/// A test user: the shop and clicked offers of their last held-out session,
/// and every offer they touched before the held-out span.
#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub user: UserId,
    pub shop: ShopId,
    pub relevant: HashSet<OfferId>,
    pub seen: HashSet<OfferId>,
}

/// Users whose last held-out session (latest-ending δ-session over all
/// shops) contains at least one click.
pub fn test_cases(before: &EventLog, held_out: &EventLog, delta: u64) -> Result<Vec<TestCase>> {
    let mut last: BTreeMap<UserId, (u64, ShopId, BTreeSet<OfferId>)> = BTreeMap::new();
    let clicks: HashSet<(UserId, ShopId, OfferId, u64)> = held_out
        .iter()
        .filter(|e| e.action == Action::Click)
        .map(|e| (e.user, e.shop, e.offer, e.ts))
        .collect();
    for s in sessions_from_log(held_out, delta) {
        let end = s.offers.last().map(|&(_, t)| t).unwrap_or(0);
        let clicked: BTreeSet<OfferId> = s
            .offers
            .iter()
            .filter(|&&(o, t)| clicks.contains(&(s.user, s.shop, o, t)))
            .map(|&(o, _)| o)
            .collect();
        let newer = last.get(&s.user).is_none_or(|(t, shop, _)| (end, s.shop) > (*t, *shop));
        if newer {
            last.insert(s.user, (end, s.shop, clicked));
        }
    }
    let mut seen: BTreeMap<UserId, HashSet<OfferId>> = BTreeMap::new();
    for e in before {
        seen.entry(e.user).or_default().insert(e.offer);
    }
    let cases: Vec<TestCase> = last
        .into_iter()
        .filter(|(_, (_, _, rel))| !rel.is_empty())
        .map(|(user, (_, shop, rel))| TestCase {
            user,
            shop,
            relevant: rel.into_iter().collect(),
            seen: seen.remove(&user).unwrap_or_default(),
        })
        .collect();
    if cases.is_empty() {
        return Err(Error::NoTestUsers);
    }
    Ok(cases)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub system: System,
    pub mean_dcg: f64,
    pub per_user: Vec<(UserId, f64)>,
    /// Top-10 lists, aligned with `per_user`.
    pub recommendations: Vec<Vec<OfferId>>,
}

impl EvalResult {
    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }
}

/// Mean per-user DCG@`top_k` of one system. Users whose shop has no popular
/// offers or no unseen candidates score 0.
pub fn evaluate(
    system: System,
    cases: &[TestCase],
    ctx: &ScoringContext,
    model: &GbmModel,
    popular: &PopularityIndex,
    cfg: CandidateConfig,
    top_k: usize,
) -> Result<EvalResult> {
    if cases.is_empty() {
        return Err(Error::NoTestUsers);
    }
    let generator = match system {
        System::BoostJet => Some(CandidateGenerator::new(ctx, model, popular, cfg)?),
        _ => None,
    };
    let lists: Vec<Vec<OfferId>> = cases
        .par_iter()
        .map(|c| -> Result<Vec<OfferId>> {
            let cands = match system {
                System::BoostJet => match generator.as_ref().unwrap().generate(c.user, c.shop, &c.seen) {
                    Ok(s) => s,
                    Err(Error::UnknownShop(_)) => return Ok(Vec::new()),
                    Err(e) => return Err(e),
                },
                System::BoostJetPop | System::Popularity => {
                    let k = if system == System::Popularity { top_k } else { cfg.k_final };
                    match popular_candidates(popular, c.user, c.shop, k, &c.seen) {
                        Ok(s) => s,
                        Err(Error::UnknownShop(_)) => return Ok(Vec::new()),
                        Err(e) => return Err(e),
                    }
                }
            };
            if cands.offers.is_empty() {
                return Ok(Vec::new());
            }
            if system == System::Popularity {
                return Ok(cands.offers);
            }
            Ok(recommend(&cands, ctx, model, top_k)?.offers().collect())
        })
        .collect::<Result<_>>()?;
    let per_user: Vec<(UserId, f64)> = cases
        .iter()
        .zip(&lists)
        .map(|(c, l)| (c.user, dcg(l.iter().copied(), &c.relevant)))
        .collect();
    let mean_dcg = per_user.iter().map(|p| p.1).sum::<f64>() / per_user.len() as f64;
    Ok(EvalResult {
        system,
        mean_dcg,
        per_user,
        recommendations: lists,
    })
}
