//! Invariant checks on one seeded repetition of a scenario.

use crate::classifier::{ClassifierSpec, GridPoint};
use crate::delivery::{exact_max_coverage, greedy_max_coverage, EXACT_USER_LIMIT};
use crate::detection::{rank_sites, DetectionMetrics, LabelSource};
use crate::error::Result;
use crate::mobility::VisitMatrix;

use super::config::{DeliveryMode, ScenarioConfig};
use super::run::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Run the invariant suite on repetition 0 of `config`.
pub fn validate_scenario(config: &ScenarioConfig) -> Result<Vec<Check>> {
    let mut cfg = config.clone();
    cfg.repetitions = 1;
    let scenario = Scenario::new(cfg.clone())?;
    let world = scenario.world(0)?;
    let visits = &world.visits;
    let mut out = Vec::new();

    let omega = scenario.omega();
    let ju = &world.underperforming;
    let distinct = ju.windows(2).all(|w| w[0] < w[1]);
    out.push(check(
        "planted-sites",
        ju.len() == omega && distinct && ju.iter().all(|&j| j < visits.sites()),
        format!("{} sites planted, expected {omega}", ju.len()),
    ));

    let horizon = visits.horizon();
    let worst = (0..visits.users())
        .map(|i| (visits.row_total(i) - horizon).abs())
        .fold(0.0, f64::max);
    let negative = visits.as_flat().iter().any(|&t| t < 0.0);
    out.push(check(
        "visit-rows-sum-to-horizon",
        worst <= 1e-9 * horizon.max(1.0) && !negative,
        format!("max |row total - T| = {worst:.3e}"),
    ));

    let shares = visits.mean_share_by_rank();
    out.push(check(
        "visit-shares-non-increasing",
        shares.windows(2).all(|w| w[0] >= w[1] - 1e-12),
        format!("top-5 share {:.4}", shares.iter().take(5).sum::<f64>()),
    ));

    let truth = scenario.truth(&world, cfg.profile.mu)?;
    let fraction = truth.satisfaction.dissatisfied_fraction();
    let (passed, detail) = match cfg.profile.calibrate {
        Some([lo, hi]) => (
            (lo..=hi).contains(&fraction),
            format!("fraction {fraction:.4}, target [{lo}, {hi}], sigma {:.4}", truth.sigma),
        ),
        None => (true, format!("fraction {fraction:.4} at sigma {}", truth.sigma)),
    };
    out.push(check("dissatisfied-fraction", passed, detail));

    let exposure_free_dissatisfied =
        (0..visits.users()).any(|i| truth.satisfaction.labels[i] && ju.iter().all(|&j| visits.get(i, j) == 0.0));
    out.push(check(
        "no-exposure-no-complaint",
        cfg.profile.psi > 0.0 || !exposure_free_dissatisfied,
        "users never in a planted site are satisfied",
    ));

    let xi = cfg.detection.xi;
    let ranking = rank_sites(visits, &truth.satisfaction.labels, xi, LabelSource::FullTruth)?;
    let mut sorted = ranking.ranked_ids.clone();
    sorted.sort_unstable();
    let permutation = sorted == (0..visits.sites()).collect::<Vec<_>>();
    let ordered = ranking.ranked_ids.windows(2).all(|w| {
        ranking.scores[w[0]] > ranking.scores[w[1]] || (ranking.scores[w[0]] == ranking.scores[w[1]] && w[0] < w[1])
    });
    out.push(check(
        "ranking-order",
        permutation && ordered,
        "scores descending, ties by id",
    ));

    let metrics = DetectionMetrics::compute(&ranking.ranked_ids, ju)?;
    let recall_monotone = metrics.recall_at_k.windows(2).all(|w| w[0] <= w[1]);
    let full_recall = metrics.recall_at_k.last().copied() == Some(1.0);
    out.push(check(
        "recall-curve",
        recall_monotone && full_recall && (0.0..=1.0).contains(&metrics.auc_pr),
        format!("AUC {:.4}, R@Omega {:.4}", metrics.auc_pr, metrics.recall_at_omega),
    ));

    let mode = match cfg.delivery.strategy {
        DeliveryMode::Full => DeliveryMode::Random,
        other => other,
    };
    let zero = GridPoint {
        spec: ClassifierSpec::ALL_SATISFIED,
        in_reference_grid: true,
    };
    let pair = scenario.evaluate(&world, &truth, mode, xi, &[zero])?;
    let same = pair[0].recall_at_k == pair[1].recall_at_k && pair[0].auc_pr == pair[1].auc_pr;
    out.push(check(
        "gt-only-equals-silent-classifier",
        same,
        format!("{} delivery", mode.as_str()),
    ));

    out.push(greedy_against_exact(visits, cfg.delivery.xi.unwrap_or(xi))?);

    let again = Scenario::new(cfg.clone())?.run()?;
    let first = scenario.run()?;
    let strip = |mut rs: Vec<super::run::RunRecord>| {
        rs.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
        rs
    };
    out.push(check(
        "deterministic-rerun",
        strip(first) == strip(again),
        "two runs from the same seed",
    ));
    Ok(out)
}

/// Greedy against branch and bound on the first users that qualify
/// somewhere, at `n_min = 1` where the greedy bound holds.
fn greedy_against_exact(visits: &VisitMatrix, xi: f64) -> Result<Check> {
    let threshold = xi * visits.horizon();
    let picked: Vec<usize> = (0..visits.users())
        .filter(|&i| visits.row(i).iter().any(|&t| t >= threshold))
        .take(EXACT_USER_LIMIT.min(14))
        .collect();
    if picked.is_empty() {
        return Ok(check("greedy-approximation", true, "no user qualifies anywhere"));
    }
    let rows: Vec<Vec<f64>> = picked.iter().map(|&i| visits.row(i).to_vec()).collect();
    let sub = VisitMatrix::from_rows(rows, visits.sites(), visits.horizon())?;
    let budget = 3.min(sub.users());
    let greedy = greedy_max_coverage(&sub, budget, xi, 1)?;
    let exact = exact_max_coverage(&sub, budget, xi, 1, EXACT_USER_LIMIT)?;
    let ratio = if exact.covered_sites.is_empty() {
        1.0
    } else {
        greedy.covered_sites.len() as f64 / exact.covered_sites.len() as f64
    };
    Ok(check(
        "greedy-approximation",
        ratio >= 1.0 - (-1.0f64).exp() - 1e-9,
        format!(
            "greedy {} / optimal {} sites on a {}-user sub-instance",
            greedy.covered_sites.len(),
            exact.covered_sites.len(),
            sub.users()
        ),
    ))
}
