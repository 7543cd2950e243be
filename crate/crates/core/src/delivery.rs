//! Survey delivery: who answers, and how much of the network they cover.
//!
//! A site is covered when at least `n_min` respondents each spend at least
//! `xi * T` there. Random delivery samples respondents uniformly; optimized
//! delivery solves the budgeted maximum-coverage problem, greedily at
//! production scale and exactly (branch-and-bound) on small instances.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::VisitMatrix;

/// Default candidate limit for [`exact_max_coverage`].
pub const EXACT_USER_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Optimized,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Optimized => "optimized",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "rd" => Ok(Strategy::Random),
            "optimized" | "od" => Ok(Strategy::Optimized),
            other => Err(Error::param("strategy", format!("unknown delivery strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryConfig {
    pub budget: usize,
    pub strategy: Strategy,
    pub xi: f64,
    pub n_min: usize,
}

impl DeliveryConfig {
    pub fn validate(&self, users: usize) -> Result<()> {
        if self.budget == 0 || self.budget > users {
            return Err(Error::param(
                "budget",
                format!("need 1 <= B <= N, got B={} with N={users}", self.budget),
            ));
        }
        check_xi(self.xi)?;
        if self.n_min == 0 {
            return Err(Error::param("n_min", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::param("xi", format!("must lie in (0, 1), got {xi}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyAssignment {
    /// Respondent user ids, ascending.
    pub respondents: Vec<usize>,
    /// Covered site ids, ascending.
    pub covered_sites: Vec<usize>,
    /// `covered_sites.len() / M`.
    pub coverage: f64,
}

impl SurveyAssignment {
    fn new(mut respondents: Vec<usize>, coverage: &CoverageInstance) -> Self {
        respondents.sort_unstable();
        let covered_sites = coverage.covered_by(&respondents);
        let ratio = if coverage.sites == 0 {
            0.0
        } else {
            covered_sites.len() as f64 / coverage.sites as f64
        };
        SurveyAssignment {
            respondents,
            covered_sites,
            coverage: ratio,
        }
    }

    pub fn is_respondent(&self, user: usize) -> bool {
        self.respondents.binary_search(&user).is_ok()
    }
}

/// For every user, the sites where they spend at least `xi * T`.
#[derive(Debug, Clone)]
pub struct CoverageInstance {
    qualifying: Vec<Vec<usize>>,
    sites: usize,
    n_min: usize,
}

impl CoverageInstance {
    pub fn new(visits: &VisitMatrix, xi: f64, n_min: usize) -> Result<Self> {
        check_xi(xi)?;
        if n_min == 0 {
            return Err(Error::param("n_min", "must be at least 1"));
        }
        let threshold = xi * visits.horizon();
        let qualifying = visits
            .rows()
            .map(|row| (0..row.len()).filter(|&j| row[j] >= threshold).collect())
            .collect();
        Ok(CoverageInstance {
            qualifying,
            sites: visits.sites(),
            n_min,
        })
    }

    pub fn users(&self) -> usize {
        self.qualifying.len()
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn qualifying(&self, user: usize) -> &[usize] {
        &self.qualifying[user]
    }

    fn covered_by(&self, respondents: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.sites];
        for &i in respondents {
            for &j in &self.qualifying[i] {
                counts[j] += 1;
            }
        }
        (0..self.sites).filter(|&j| counts[j] >= self.n_min).collect()
    }

    /// Sites that every user together could cover.
    pub fn coverable_sites(&self) -> Vec<usize> {
        let all: Vec<usize> = (0..self.users()).collect();
        self.covered_by(&all)
    }
}

/// Sites with at least `n_min` respondents spending at least `xi * T` there.
pub fn coverage_indicator(visits: &VisitMatrix, respondents: &[usize], xi: f64, n_min: usize) -> Result<Vec<usize>> {
    if let Some(&i) = respondents.iter().find(|&&i| i >= visits.users()) {
        return Err(Error::param("respondents", format!("user id {i} out of range")));
    }
    Ok(CoverageInstance::new(visits, xi, n_min)?.covered_by(respondents))
}

/// Uniform sample of `budget` distinct respondents.
pub fn random_delivery<R: Rng + ?Sized>(
    visits: &VisitMatrix,
    budget: usize,
    xi: f64,
    n_min: usize,
    rng: &mut R,
) -> Result<SurveyAssignment> {
    let n = visits.users();
    if budget > n {
        return Err(Error::param("budget", format!("B={budget} exceeds N={n}")));
    }
    let instance = CoverageInstance::new(visits, xi, n_min)?;
    let respondents = index::sample(rng, n, budget).into_vec();
    Ok(SurveyAssignment::new(respondents, &instance))
}

/// Greedy budgeted maximum coverage.
///
/// Each step adds the user with the largest number of newly covered sites;
/// ties go to the largest progress toward `n_min` on not-yet-covered sites,
/// then the most qualifying sites overall, then the lowest id. Stops after
/// `budget` users or once no user makes progress on any site.
pub fn greedy_max_coverage(visits: &VisitMatrix, budget: usize, xi: f64, n_min: usize) -> Result<SurveyAssignment> {
    let instance = CoverageInstance::new(visits, xi, n_min)?;
    Ok(greedy_on(&instance, budget))
}

pub(crate) fn greedy_on(instance: &CoverageInstance, budget: usize) -> SurveyAssignment {
    let n_min = instance.n_min;
    let mut counts = vec![0usize; instance.sites];
    let mut candidates: Vec<usize> = (0..instance.users())
        .filter(|&i| !instance.qualifying[i].is_empty())
        .collect();
    let mut chosen = Vec::new();
    while chosen.len() < budget {
        let gain = |i: usize| {
            let mut newly = 0usize;
            let mut progress = 0usize;
            for &j in &instance.qualifying[i] {
                if counts[j] < n_min {
                    progress += 1;
                    if counts[j] + 1 == n_min {
                        newly += 1;
                    }
                }
            }
            (newly, progress)
        };
        candidates.retain(|&i| gain(i).1 > 0);
        let best = candidates
            .par_iter()
            .map(|&i| {
                let (newly, progress) = gain(i);
                ((newly, progress, instance.qualifying[i].len(), Reverse(i)), i)
            })
            .max_by_key(|(key, _)| *key);
        let Some((_, user)) = best else { break };
        for &j in &instance.qualifying[user] {
            counts[j] += 1;
        }
        chosen.push(user);
        candidates.retain(|&i| i != user);
    }
    SurveyAssignment::new(chosen, instance)
}

/// Optimal budgeted maximum coverage by depth-first branch-and-bound.
///
/// Only users with at least one qualifying site can be selected. Fails with
/// [`Error::Intractable`] when more than `user_limit` such users exist.
pub fn exact_max_coverage(
    visits: &VisitMatrix,
    budget: usize,
    xi: f64,
    n_min: usize,
    user_limit: usize,
) -> Result<SurveyAssignment> {
    let instance = CoverageInstance::new(visits, xi, n_min)?;
    exact_on(&instance, budget, user_limit)
}

pub(crate) fn exact_on(instance: &CoverageInstance, budget: usize, user_limit: usize) -> Result<SurveyAssignment> {
    let mut order: Vec<usize> = (0..instance.users())
        .filter(|&i| !instance.qualifying[i].is_empty())
        .collect();
    if order.len() > user_limit {
        return Err(Error::Intractable {
            users: order.len(),
            limit: user_limit,
        });
    }
    order.sort_by_key(|&i| (Reverse(instance.qualifying[i].len()), i));

    let m = instance.sites;
    // remaining[k][j]: candidates at positions >= k that qualify for site j.
    let mut remaining = vec![vec![0usize; m]; order.len() + 1];
    for k in (0..order.len()).rev() {
        remaining[k] = remaining[k + 1].clone();
        for &j in &instance.qualifying[order[k]] {
            remaining[k][j] += 1;
        }
    }

    let mut search = BranchAndBound {
        instance,
        order: &order,
        remaining: &remaining,
        counts: vec![0; m],
        covered: 0,
        selected: Vec::new(),
        best_covered: 0,
        best: Vec::new(),
    };
    search.descend(0, budget.min(order.len()));
    let best = search.best;
    Ok(SurveyAssignment::new(best, instance))
}

struct BranchAndBound<'a> {
    instance: &'a CoverageInstance,
    order: &'a [usize],
    remaining: &'a [Vec<usize>],
    counts: Vec<usize>,
    covered: usize,
    selected: Vec<usize>,
    best_covered: usize,
    best: Vec<usize>,
}

impl BranchAndBound<'_> {
    /// Upper bound on sites coverable from this node: an uncovered site can
    /// only be completed if enough later candidates qualify for it, and each
    /// newly covered site needs at least one of the (at most `budget`)
    /// additional users to qualify for it.
    fn bound(&self, pos: usize, budget: usize) -> usize {
        let n_min = self.instance.n_min;
        let completable: Vec<bool> = (0..self.instance.sites)
            .map(|j| self.counts[j] < n_min && self.counts[j] + self.remaining[pos][j] >= n_min)
            .collect();
        let n_completable = completable.iter().filter(|c| **c).count();
        let mut per_user: Vec<usize> = self.order[pos..]
            .iter()
            .map(|&i| self.instance.qualifying[i].iter().filter(|&&j| completable[j]).count())
            .collect();
        per_user.sort_unstable_by(|a, b| b.cmp(a));
        let top: usize = per_user.iter().take(budget).sum();
        self.covered + n_completable.min(top)
    }

    fn descend(&mut self, pos: usize, budget: usize) {
        if self.covered > self.best_covered {
            self.best_covered = self.covered;
            self.best = self.selected.clone();
        }
        if pos == self.order.len() || budget == 0 {
            return;
        }
        if self.bound(pos, budget) <= self.best_covered {
            return;
        }
        let user = self.order[pos];
        let n_min = self.instance.n_min;

        for &j in &self.instance.qualifying[user] {
            self.counts[j] += 1;
            if self.counts[j] == n_min {
                self.covered += 1;
            }
        }
        self.selected.push(user);
        self.descend(pos + 1, budget - 1);
        self.selected.pop();
        for &j in &self.instance.qualifying[user] {
            if self.counts[j] == n_min {
                self.covered -= 1;
            }
            self.counts[j] -= 1;
        }

        self.descend(pos + 1, budget);
    }
}

/// Run the configured strategy.
pub fn deliver<R: Rng + ?Sized>(
    visits: &VisitMatrix,
    config: &DeliveryConfig,
    rng: &mut R,
) -> Result<SurveyAssignment> {
    config.validate(visits.users())?;
    match config.strategy {
        Strategy::Random => random_delivery(visits, config.budget, config.xi, config.n_min, rng),
        Strategy::Optimized => greedy_max_coverage(visits, config.budget, config.xi, config.n_min),
    }
}
