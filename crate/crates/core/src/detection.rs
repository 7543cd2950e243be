//! Site ranking from satisfaction labels, and detection quality metrics.
//!
//! A dissatisfied user blames every site where they spend strictly more
//! than `xi` of their own total time; the site's score is the sum of those
//! users' time shares there. Sites are ranked by decreasing score.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::VisitMatrix;

/// Which labels fed the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GtOnly,
    GtPlusPredicted,
    FullTruth,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::GtOnly => "gt_only",
            LabelSource::GtPlusPredicted => "gt_plus_predicted",
            LabelSource::FullTruth => "full_truth",
        }
    }
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt_only" => Ok(LabelSource::GtOnly),
            "gt_plus_predicted" => Ok(LabelSource::GtPlusPredicted),
            "full_truth" => Ok(LabelSource::FullTruth),
            other => Err(Error::param("label_source", format!("unknown label source `{other}`"))),
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Score per site id.
    pub scores: Vec<f64>,
    /// All site ids by decreasing score, ties by ascending id.
    pub ranked_ids: Vec<usize>,
    pub labels_used: LabelSource,
}

impl RankingResult {
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.ranked_ids[..k.min(self.ranked_ids.len())]
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::param("xi", format!("must lie in (0, 1), got {xi}")));
    }
    Ok(())
}

fn check_labels(visits: &VisitMatrix, labels: &[bool]) -> Result<()> {
    if labels.len() != visits.users() {
        return Err(Error::param(
            "labels",
            format!("expected {} labels, got {}", visits.users(), labels.len()),
        ));
    }
    Ok(())
}

/// Dissatisfied users spending strictly more than `xi` of their own time at `site`.
pub fn dissatisfied_visitors(visits: &VisitMatrix, labels: &[bool], site: usize, xi: f64) -> Result<Vec<usize>> {
    check_xi(xi)?;
    check_labels(visits, labels)?;
    if site >= visits.sites() {
        return Err(Error::param("site", format!("site id {site} out of range")));
    }
    Ok((0..visits.users())
        .filter(|&i| labels[i] && visits.get(i, site) > xi * visits.row_total(i))
        .collect())
}

pub fn rank_sites(visits: &VisitMatrix, labels: &[bool], xi: f64, source: LabelSource) -> Result<RankingResult> {
    check_xi(xi)?;
    check_labels(visits, labels)?;
    let mut scores = vec![0.0; visits.sites()];
    for (row, _) in visits.rows().zip(labels).filter(|(_, l)| **l) {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let threshold = xi * total;
        for (score, &t) in scores.iter_mut().zip(row) {
            if t > threshold {
                *score += t / total;
            }
        }
    }
    let mut ranked_ids: Vec<usize> = (0..scores.len()).collect();
    ranked_ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(RankingResult {
        scores,
        ranked_ids,
        labels_used: source,
    })
}

fn truth_set(underperforming: &[usize]) -> Result<HashSet<usize>> {
    if underperforming.is_empty() {
        return Err(Error::param(
            "underperforming",
            "needs at least one under-performing site",
        ));
    }
    Ok(underperforming.iter().copied().collect())
}

/// `(P@k, R@k)` for the first `k` ranked ids.
pub fn precision_recall_at_k(ranked_ids: &[usize], underperforming: &[usize], k: usize) -> Result<(f64, f64)> {
    if k == 0 || k > ranked_ids.len() {
        return Err(Error::param(
            "k",
            format!("need 1 <= k <= {}, got {k}", ranked_ids.len()),
        ));
    }
    let truth = truth_set(underperforming)?;
    let hits = ranked_ids[..k].iter().filter(|j| truth.contains(j)).count();
    Ok((hits as f64 / k as f64, hits as f64 / truth.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    /// Entry `k - 1` holds P@k.
    pub precision_at_k: Vec<f64>,
    /// Entry `k - 1` holds R@k.
    pub recall_at_k: Vec<f64>,
    pub auc_pr: f64,
    pub recall_at_omega: f64,
}

impl DetectionMetrics {
    pub fn compute(ranked_ids: &[usize], underperforming: &[usize]) -> Result<Self> {
        if ranked_ids.is_empty() {
            return Err(Error::param("ranked_ids", "ranking is empty"));
        }
        let truth = truth_set(underperforming)?;
        let omega = truth.len() as f64;
        let mut hits = 0usize;
        let mut precision_at_k = Vec::with_capacity(ranked_ids.len());
        let mut recall_at_k = Vec::with_capacity(ranked_ids.len());
        for (pos, j) in ranked_ids.iter().enumerate() {
            if truth.contains(j) {
                hits += 1;
            }
            precision_at_k.push(hits as f64 / (pos + 1) as f64);
            recall_at_k.push(hits as f64 / omega);
        }
        let auc_pr = pr_area(&precision_at_k, &recall_at_k);
        let omega_k = truth.len().min(ranked_ids.len());
        let recall_at_omega = recall_at_k[omega_k - 1];
        Ok(DetectionMetrics {
            precision_at_k,
            recall_at_k,
            auc_pr,
            recall_at_omega,
        })
    }
}

/// Trapezoidal area under precision over recall.
///
/// Each distinct recall value is represented by the precision at the first
/// rank reaching it, and the curve is extended to recall 0 at the precision
/// of its first point.
fn pr_area(precision: &[f64], recall: &[f64]) -> f64 {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut last_recall = 0.0;
    for (&p, &r) in precision.iter().zip(recall) {
        if r > last_recall {
            points.push((r, p));
            last_recall = r;
        }
    }
    let Some(&(_, first_p)) = points.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let mut prev = (0.0, first_p);
    for &(r, p) in &points {
        area += (r - prev.0) * 0.5 * (p + prev.1);
        prev = (r, p);
    }
    area
}

pub fn auc_precision_recall(ranked_ids: &[usize], underperforming: &[usize]) -> Result<f64> {
    Ok(DetectionMetrics::compute(ranked_ids, underperforming)?.auc_pr)
}

/// Labels handed to [`detect`].
#[derive(Debug, Clone, Copy)]
pub enum LabelInput<'a> {
    /// Respondent labels only; everybody else counts as satisfied.
    GtOnly { gt: &'a [(usize, bool)] },
    /// Respondent labels plus classifier predictions for non-respondents.
    GtPlusPredicted {
        gt: &'a [(usize, bool)],
        predicted: &'a [(usize, bool)],
    },
    /// True label of every user.
    FullTruth { labels: &'a [bool] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub ranking: RankingResult,
    /// The first `k` ranked sites.
    pub flagged: Vec<usize>,
}

pub fn assemble_labels(users: usize, input: &LabelInput<'_>) -> Result<(Vec<bool>, LabelSource)> {
    let mut labels = vec![false; users];
    let mut assigned = vec![false; users];
    let mut apply = |set: &[(usize, bool)]| -> Result<()> {
        for &(i, l) in set {
            if i >= users {
                return Err(Error::param("labels", format!("user id {i} out of range")));
            }
            if assigned[i] {
                return Err(Error::OverlappingLabels(i));
            }
            assigned[i] = true;
            labels[i] = l;
        }
        Ok(())
    };
    let source = match input {
        LabelInput::GtOnly { gt } => {
            apply(gt)?;
            LabelSource::GtOnly
        }
        LabelInput::GtPlusPredicted { gt, predicted } => {
            apply(gt)?;
            apply(predicted)?;
            LabelSource::GtPlusPredicted
        }
        LabelInput::FullTruth { labels: truth } => {
            if truth.len() != users {
                return Err(Error::param(
                    "labels",
                    format!("expected {users} labels, got {}", truth.len()),
                ));
            }
            labels.copy_from_slice(truth);
            LabelSource::FullTruth
        }
    };
    Ok((labels, source))
}

pub fn detect(visits: &VisitMatrix, input: LabelInput<'_>, xi: f64, k: usize) -> Result<Detection> {
    if k == 0 || k > visits.sites() {
        return Err(Error::param("k", format!("need 1 <= k <= {}, got {k}", visits.sites())));
    }
    let (labels, source) = assemble_labels(visits.users(), &input)?;
    let ranking = rank_sites(visits, &labels, xi, source)?;
    let flagged = ranking.top_k(k).to_vec();
    Ok(Detection { ranking, flagged })
}

/// Mean of the population-average time shares at users' first and second
/// most visited sites.
pub fn suggested_xi(visits: &VisitMatrix) -> f64 {
    let shares = visits.mean_share_by_rank();
    let first = shares.first().copied().unwrap_or(0.0);
    let second = shares.get(1).copied().unwrap_or(0.0);
    (0.5 * (first + second)).clamp(1e-6, 1.0 - 1e-6)
}
