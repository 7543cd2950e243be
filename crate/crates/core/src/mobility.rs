//! Exploration / preferential-return mobility and the visit-time matrix.
//!
//! Each user starts at a uniformly chosen site and alternates between a
//! fat-tailed wait and a move. A move explores with probability
//! `rho * S^-gamma` (a jump of fat-tailed length in a uniform direction,
//! snapped to the nearest site) and otherwise returns to an already visited
//! site with probability proportional to its visit count. Waiting time is
//! credited to the site being waited at until the horizon is reached.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{SeedPath, SimRng};
use crate::topology::{nearest_site, Topology};

/// Named parameter sets for the two reference mobility scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Exploration exponent fitted on large phone-trace datasets.
    S1,
    /// Strongly home-bound users.
    S2,
}

impl Preset {
    pub const RHO: f64 = 0.6;
    pub const ALPHA: f64 = 0.55;
    pub const BETA: f64 = 0.8;

    pub fn gamma(self) -> f64 {
        match self {
            Preset::S1 => 0.21,
            Preset::S2 => 3.0,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Preset::S1),
            "s2" => Ok(Preset::S2),
            other => Err(Error::param("preset", format!("unknown mobility preset `{other}`"))),
        }
    }
}

/// Default shortest wait, as a fraction of the horizon.
pub const WAIT_MIN_FRACTION: f64 = 0.003;
/// Default longest wait, as a fraction of the horizon.
pub const WAIT_MAX_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityParams {
    pub rho: f64,
    pub gamma: f64,
    /// Tail exponent of the jump-length law.
    pub alpha: f64,
    /// Tail exponent of the waiting-time law.
    pub beta: f64,
    pub jump_min: f64,
    pub jump_max: f64,
    pub wait_min: f64,
    pub wait_max: f64,
    pub horizon: f64,
}

impl MobilityParams {
    /// Parameters with truncation bounds derived from the layout: jumps span
    /// the median nearest-neighbour distance to the extent diagonal, waits
    /// span `0.003 * horizon` to `0.3 * horizon`.
    pub fn with_default_bounds(topology: &Topology, rho: f64, gamma: f64, alpha: f64, beta: f64, horizon: f64) -> Self {
        let (jump_min, jump_max) = default_jump_bounds(topology);
        MobilityParams {
            rho,
            gamma,
            alpha,
            beta,
            jump_min,
            jump_max,
            wait_min: horizon * WAIT_MIN_FRACTION,
            wait_max: horizon * WAIT_MAX_FRACTION,
            horizon,
        }
    }

    pub fn preset(preset: Preset, topology: &Topology) -> Self {
        Self::with_default_bounds(topology, Preset::RHO, preset.gamma(), Preset::ALPHA, Preset::BETA, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(Error::param("rho", format!("must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(
                "gamma",
                format!("must be finite and >= 0, got {}", self.gamma),
            ));
        }
        TruncatedPareto::new(self.alpha, self.jump_min, self.jump_max)?;
        TruncatedPareto::new(self.beta, self.wait_min, self.wait_max)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(
                "horizon",
                format!("must be positive, got {}", self.horizon),
            ));
        }
        Ok(())
    }
}

fn default_jump_bounds(topology: &Topology) -> (f64, f64) {
    let diag = topology.extent().diagonal();
    let nn = topology.median_nearest_neighbor_distance();
    let lo = if nn > 0.0 { nn } else { (diag * 1e-3).max(1e-6) };
    let hi = if diag > lo { diag } else { lo * 10.0 };
    (lo, hi)
}

/// `rho * S^-gamma`, clamped to `[0, 1]`.
pub fn exploration_probability(rho: f64, gamma: f64, distinct_visited: usize) -> Result<f64> {
    if distinct_visited == 0 {
        return Err(Error::param("S", "distinct visited count must be at least 1"));
    }
    Ok((rho * (distinct_visited as f64).powf(-gamma)).clamp(0.0, 1.0))
}

/// Pareto law with density proportional to `v^(-1-exponent)` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedPareto {
    exponent: f64,
    lo: f64,
    hi: f64,
    lo_pow: f64,
    span: f64,
}

impl TruncatedPareto {
    pub fn new(exponent: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::param("exponent", format!("must be positive, got {exponent}")));
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::param("bounds", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
        }
        let lo_pow = lo.powf(-exponent);
        Ok(TruncatedPareto {
            exponent,
            lo,
            hi,
            lo_pow,
            span: lo_pow - hi.powf(-exponent),
        })
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lo {
            0.0
        } else if v >= self.hi {
            1.0
        } else {
            (self.lo_pow - v.powf(-self.exponent)) / self.span
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        (self.lo_pow - u * self.span)
            .powf(-1.0 / self.exponent)
            .clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

pub fn sample_power_law<R: Rng + ?Sized>(exponent: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    Ok(TruncatedPareto::new(exponent, lo, hi)?.sample(rng))
}

/// Choose a site with probability proportional to its visit count.
pub fn preferential_return_choice<R: Rng + ?Sized>(visit_counts: &[u32], rng: &mut R) -> Result<usize> {
    let visited: Vec<usize> = (0..visit_counts.len()).filter(|&j| visit_counts[j] > 0).collect();
    let total: u64 = visited.iter().map(|&j| visit_counts[j] as u64).sum();
    if total == 0 {
        return Err(Error::param(
            "visit_counts",
            "at least one site must have a positive count",
        ));
    }
    Ok(choose_visited(&visited, visit_counts, total, rng))
}

fn choose_visited<R: Rng + ?Sized>(visited: &[usize], counts: &[u32], total: u64, rng: &mut R) -> usize {
    let mut ticket = rng.random_range(0..total);
    for &j in visited {
        let c = counts[j] as u64;
        if ticket < c {
            return j;
        }
        ticket -= c;
    }
    unreachable!("ticket exceeds total visit count")
}

/// Per-user walk state.
#[derive(Debug, Clone)]
pub struct UserTrajectoryState {
    pub visit_counts: Vec<u32>,
    /// Visited sites in first-visit order.
    pub visited: Vec<usize>,
    pub current_site: usize,
    pub elapsed: f64,
    total_visits: u64,
}

impl UserTrajectoryState {
    fn start(sites: usize, initial: usize) -> Self {
        let mut visit_counts = vec![0; sites];
        visit_counts[initial] = 1;
        UserTrajectoryState {
            visit_counts,
            visited: vec![initial],
            current_site: initial,
            elapsed: 0.0,
            total_visits: 1,
        }
    }

    /// Number of distinct sites visited so far.
    pub fn distinct_visited(&self) -> usize {
        self.visited.len()
    }

    fn visit(&mut self, site: usize) {
        if self.visit_counts[site] == 0 {
            self.visited.push(site);
        }
        self.visit_counts[site] += 1;
        self.total_visits += 1;
        self.current_site = site;
    }
}

/// Per-user visit times, one dense row per user.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitMatrix {
    times: Vec<f64>,
    users: usize,
    sites: usize,
    horizon: f64,
}

impl VisitMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, sites: usize, horizon: f64) -> Result<Self> {
        let users = rows.len();
        let mut times = Vec::with_capacity(users * sites);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != sites {
                return Err(Error::param(
                    "visits",
                    format!("row {i} has {} entries, expected {sites}", row.len()),
                ));
            }
            times.extend(row);
        }
        Self::from_flat(times, users, sites, horizon)
    }

    pub fn from_flat(times: Vec<f64>, users: usize, sites: usize, horizon: f64) -> Result<Self> {
        if times.len() != users * sites {
            return Err(Error::param("visits", "flat buffer length does not match N x M"));
        }
        if let Some(pos) = times.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::param(
                "visits",
                format!(
                    "entry ({}, {}) is negative or not finite",
                    pos / sites.max(1),
                    pos % sites.max(1)
                ),
            ));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", "must be positive"));
        }
        Ok(VisitMatrix {
            times,
            users,
            sites,
            horizon,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.times[user * self.sites..(user + 1) * self.sites]
    }

    pub fn get(&self, user: usize, site: usize) -> f64 {
        self.times[user * self.sites + site]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.times.chunks(self.sites.max(1)).take(self.users)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.times
    }

    pub fn row_total(&self, user: usize) -> f64 {
        self.row(user).iter().sum()
    }

    /// Scale one user's times by `factor`. Row sums no longer equal the
    /// horizon afterwards; detection only uses per-user ratios.
    pub fn scale_user(&mut self, user: usize, factor: f64) {
        let s = self.sites;
        for t in &mut self.times[user * s..(user + 1) * s] {
            *t *= factor;
        }
    }

    /// Population average of each user's time share at their rank-r site,
    /// ranks sorted by decreasing share.
    pub fn mean_share_by_rank(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.sites];
        let mut buf = Vec::with_capacity(self.sites);
        for row in self.rows() {
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                continue;
            }
            buf.clear();
            buf.extend_from_slice(row);
            buf.sort_by(|a, b| b.total_cmp(a));
            for (a, t) in acc.iter_mut().zip(&buf) {
                *a += t / total;
            }
        }
        let n = self.users.max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Average share of time spent in each user's `k` most visited sites.
    pub fn mean_top_k_share(&self, k: usize) -> f64 {
        self.mean_share_by_rank().iter().take(k).sum()
    }
}

/// Walk one user until the horizon and return their visit-time row.
pub fn simulate_user(topology: &Topology, params: &MobilityParams, user_seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let walker = Walker::new(topology, params)?;
    Ok(walker.run(&mut SeedPath::master(user_seed).rng()))
}

/// Walk `users` independent users. User `i` draws from the stream
/// `SeedPath::master(seed).child(i)`, so the result does not depend on
/// scheduling.
pub fn simulate_population(
    topology: &Topology,
    params: &MobilityParams,
    users: usize,
    seed: u64,
) -> Result<VisitMatrix> {
    if users == 0 {
        return Err(Error::param("N", "population must have at least one user"));
    }
    params.validate()?;
    let walker = Walker::new(topology, params)?;
    let m = topology.len();
    let root = SeedPath::master(seed);
    let mut times = vec![0.0; users * m];
    times.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let out = walker.run(&mut root.child(i as u64).rng());
        row.copy_from_slice(&out);
    });
    VisitMatrix::from_flat(times, users, m, params.horizon)
}

/// Attempts at drawing an exploration jump that stays inside the extent.
const MAX_JUMP_REDRAWS: usize = 64;

struct Walker<'a> {
    topology: &'a Topology,
    rho: f64,
    gamma: f64,
    jump: TruncatedPareto,
    wait: TruncatedPareto,
    horizon: f64,
}

impl<'a> Walker<'a> {
    fn new(topology: &'a Topology, p: &MobilityParams) -> Result<Self> {
        if topology.is_empty() {
            return Err(Error::param("topology", "no sites"));
        }
        Ok(Walker {
            topology,
            rho: p.rho,
            gamma: p.gamma,
            jump: TruncatedPareto::new(p.alpha, p.jump_min, p.jump_max)?,
            wait: TruncatedPareto::new(p.beta, p.wait_min, p.wait_max)?,
            horizon: p.horizon,
        })
    }

    /// Landing point of an exploration jump. Jumps leaving the extent are
    /// redrawn, so boundary sites do not collect every long jump; after
    /// `MAX_JUMP_REDRAWS` failures the last point is clamped into the extent.
    fn landing(&self, from: usize, rng: &mut SimRng) -> (f64, f64) {
        let (x0, y0) = self.topology.position(from);
        let extent = self.topology.extent();
        let mut point = (x0, y0);
        for _ in 0..MAX_JUMP_REDRAWS {
            let theta = rng.random::<f64>() * TAU;
            let r = self.jump.sample(rng);
            point = (x0 + r * theta.cos(), y0 + r * theta.sin());
            if extent.contains(point.0, point.1) {
                return point;
            }
        }
        (
            point.0.clamp(extent.min_x, extent.max_x),
            point.1.clamp(extent.min_y, extent.max_y),
        )
    }

    fn run(&self, rng: &mut SimRng) -> Vec<f64> {
        let m = self.topology.len();
        let mut row = vec![0.0; m];
        let mut state = UserTrajectoryState::start(m, rng.random_range(0..m));
        loop {
            let dt = self.wait.sample(rng);
            let remaining = self.horizon - state.elapsed;
            if dt >= remaining {
                row[state.current_site] += remaining;
                state.elapsed = self.horizon;
                break;
            }
            row[state.current_site] += dt;
            state.elapsed += dt;

            let p_new = (self.rho * (state.distinct_visited() as f64).powf(-self.gamma)).min(1.0);
            let next = if rng.random::<f64>() < p_new {
                let (x, y) = self.landing(state.current_site, rng);
                nearest_site(self.topology, x, y)
            } else {
                choose_visited(&state.visited, &state.visit_counts, state.total_visits, rng)
            };
            state.visit(next);
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::topology::{generate_topology, Extent};
    use proptest::prelude::*;

    fn reference_topology(seed: u64) -> Topology {
        generate_topology(136, Extent::default(), seed).unwrap()
    }

    #[test]
    fn exploration_probability_values() {
        assert_eq!(exploration_probability(0.6, 0.21, 1).unwrap(), 0.6);
        assert!((exploration_probability(0.6, 3.0, 2).unwrap() - 0.075).abs() < 1e-15);
        assert!(exploration_probability(0.6, 0.21, 0).is_err());
        let mut prev = 1.0;
        for s in [1usize, 2, 5, 10, 100, 10_000, 1_000_000] {
            let p = exploration_probability(0.6, 0.21, s).unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(prev < 0.04);
        assert_eq!(exploration_probability(5.0, 0.0, 3).unwrap(), 1.0);
    }

    #[test]
    fn power_law_respects_bounds_and_rejects_bad_input() {
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let v = sample_power_law(0.55, 0.3, 17.0, &mut rng).unwrap();
            assert!((0.3..=17.0).contains(&v));
        }
        assert!(sample_power_law(0.55, 0.0, 1.0, &mut rng).is_err());
        assert!(sample_power_law(0.55, 2.0, 1.0, &mut rng).is_err());
        assert!(sample_power_law(0.0, 1.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn power_law_degenerate_support_concentrates() {
        let mut rng = rng_from_seed(2);
        let lo = 1.0;
        let hi = 1.0 + 1e-9;
        for _ in 0..1000 {
            let v = sample_power_law(0.8, lo, hi, &mut rng).unwrap();
            assert!((v - lo).abs() <= 1e-9);
        }
    }

    #[test]
    fn power_law_quantile_inverts_cdf() {
        let law = TruncatedPareto::new(0.8, 1e-4, 0.1).unwrap();
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert!((law.cdf(law.quantile(u)) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn preferential_return_ratios() {
        let mut rng = rng_from_seed(3);
        let counts = [3u32, 1];
        let draws = 100_000;
        let a = (0..draws)
            .filter(|_| preferential_return_choice(&counts, &mut rng).unwrap() == 0)
            .count() as f64
            / draws as f64;
        assert!((a - 0.75).abs() <= 0.01, "{a}");

        let even = [0u32, 1, 0, 1];
        let b = (0..draws)
            .filter(|_| preferential_return_choice(&even, &mut rng).unwrap() == 1)
            .count() as f64
            / draws as f64;
        assert!((b - 0.5).abs() <= 0.01, "{b}");

        for _ in 0..100 {
            assert_eq!(preferential_return_choice(&[0, 0, 5], &mut rng).unwrap(), 2);
        }
        assert!(preferential_return_choice(&[0, 0], &mut rng).is_err());
    }

    #[test]
    fn no_exploration_keeps_user_home() {
        let t = reference_topology(1);
        let mut p = MobilityParams::preset(Preset::S1, &t);
        p.rho = 0.0;
        for seed in 0..20 {
            let row = simulate_user(&t, &p, seed).unwrap();
            assert_eq!(row.iter().filter(|v| **v > 0.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn strong_exploration_decay_concentrates_time() {
        let t = reference_topology(2);
        let s1 = MobilityParams::preset(Preset::S1, &t);
        let s2 = MobilityParams::preset(Preset::S2, &t);
        let a = simulate_population(&t, &s1, 500, 9).unwrap();
        let b = simulate_population(&t, &s2, 500, 9).unwrap();
        assert!(b.mean_share_by_rank()[0] > a.mean_share_by_rank()[0]);
    }

    #[test]
    fn population_is_deterministic_and_rows_sum_to_horizon() {
        let t = reference_topology(3);
        let p = MobilityParams::preset(Preset::S1, &t);
        let a = simulate_population(&t, &p, 1000, 42).unwrap();
        let b = simulate_population(&t, &p, 1000, 42).unwrap();
        assert_eq!(a.as_flat(), b.as_flat());
        for i in 0..a.users() {
            assert!((a.row_total(i) - 1.0).abs() <= 1e-9);
        }
        let c = simulate_population(&t, &p, 1000, 43).unwrap();
        assert_ne!(a.as_flat(), c.as_flat());
    }

    #[test]
    fn user_rows_match_population_rows() {
        let t = reference_topology(4);
        let p = MobilityParams::preset(Preset::S2, &t);
        let pop = simulate_population(&t, &p, 8, 77).unwrap();
        let root = SeedPath::master(77);
        for i in 0..8 {
            let row = simulate_user(&t, &p, root.child(i as u64).value()).unwrap();
            assert_eq!(pop.row(i), row.as_slice());
        }
    }

    #[test]
    fn share_curve_is_non_increasing() {
        let t = reference_topology(5);
        let p = MobilityParams::preset(Preset::S1, &t);
        let v = simulate_population(&t, &p, 300, 1).unwrap();
        let curve = v.mean_share_by_rank();
        assert!(curve.windows(2).all(|w| w[0] >= w[1]));
        assert!((curve.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    fn lattice(side: usize) -> Topology {
        let sites = (0..side * side)
            .map(|i| crate::topology::Site {
                id: i,
                x: (i % side) as f64,
                y: (i / side) as f64,
            })
            .collect();
        Topology::from_sites(sites).unwrap()
    }

    /// Every move explores; the wait law is pinned so exactly 11 moves fit
    /// in the horizon.
    fn pure_exploration(t: &Topology, jump: (f64, f64)) -> MobilityParams {
        let mut p = MobilityParams::with_default_bounds(t, 1.0, 0.0, 0.55, 0.8, 1.0);
        p.jump_min = jump.0;
        p.jump_max = jump.1;
        p.wait_min = 0.09;
        p.wait_max = 0.09 + 1e-12;
        p
    }

    #[test]
    fn pure_exploration_distinct_count_approaches_k_plus_one() {
        let t = lattice(100);
        let p = pure_exploration(&t, (5.0, 30.0));
        let users = 200;
        let mean_distinct = (0..users)
            .map(|s| simulate_user(&t, &p, s).unwrap().iter().filter(|v| **v > 0.0).count())
            .sum::<usize>() as f64
            / users as f64;
        assert!(mean_distinct <= 12.0);
        assert!(mean_distinct >= 0.95 * 12.0, "{mean_distinct}");
    }

    #[test]
    fn pure_exploration_saturates_small_topology() {
        let t = lattice(2);
        let mut p = pure_exploration(&t, (0.5, 2.0));
        // About 110 moves.
        p.wait_min = 0.009;
        p.wait_max = 0.009 + 1e-12;
        let users = 200;
        let mean_distinct = (0..users)
            .map(|s| simulate_user(&t, &p, s).unwrap().iter().filter(|v| **v > 0.0).count())
            .sum::<usize>() as f64
            / users as f64;
        assert!(mean_distinct <= 4.0);
        assert!(mean_distinct >= 3.95, "{mean_distinct}");
    }

    #[test]
    fn invalid_params_rejected() {
        let t = reference_topology(6);
        let mut p = MobilityParams::preset(Preset::S1, &t);
        p.rho = 1.5;
        assert!(p.validate().is_err());
        let mut p = MobilityParams::preset(Preset::S1, &t);
        p.wait_min = p.wait_max;
        assert!(p.validate().is_err());
        let p = MobilityParams::preset(Preset::S1, &t);
        assert!(simulate_population(&t, &p, 0, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rows_always_sum_to_horizon(
            seed in any::<u64>(),
            rho in 0.0f64..=1.0,
            gamma in 0.0f64..4.0,
            horizon in 0.5f64..50.0,
        ) {
            let t = reference_topology(seed % 7);
            let p = MobilityParams::with_default_bounds(&t, rho, gamma, 0.55, 0.8, horizon);
            let row = simulate_user(&t, &p, seed).unwrap();
            let total: f64 = row.iter().sum();
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!(((total - horizon) / horizon).abs() <= 1e-9);
        }
    }
}
