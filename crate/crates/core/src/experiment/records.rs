//! Column layouts of every emitted table.

use crate::classifier::ClassifierSpec;
use crate::error::Result;

use super::config::DeliveryMode;
use super::run::RunRecord;
use super::sweep::{CloudPoint, DensityRow, Summary, XiMuCell};
use super::table::{Cell, Row, Tabular};

fn summary(row: &Row<'_>, prefix: &str) -> Result<Summary> {
    Ok(Summary {
        count: row.get(&format!("{prefix}_n"))?,
        mean: row.float(&format!("{prefix}_mean"))?,
        sd: row.float(&format!("{prefix}_sd"))?,
    })
}

fn count(n: usize) -> Cell {
    Cell::Int(n as u64)
}

impl Tabular for RunRecord {
    const KIND: &'static str = "runs";
    const COLUMNS: &'static [&'static str] = &[
        "config_hash",
        "repetition",
        "seed",
        "users",
        "sites",
        "omega",
        "mu",
        "sigma",
        "dissatisfied_fraction",
        "strategy",
        "budget",
        "respondents",
        "coverage",
        "xi",
        "label_source",
        "fpr",
        "tpr",
        "auc_pr",
        "recall_at_omega",
        "precision_at_k",
        "recall_at_k",
        "wall_time_ms",
    ];
    const VOLATILE: &'static [&'static str] = &["wall_time_ms"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.config_hash.clone()),
            count(self.repetition),
            Cell::Int(self.seed),
            count(self.users),
            count(self.sites),
            count(self.omega),
            Cell::Float(self.mu),
            Cell::Float(self.sigma),
            Cell::Float(self.dissatisfied_fraction),
            Cell::Text(self.strategy.as_str().into()),
            count(self.budget),
            count(self.respondents),
            Cell::Float(self.coverage),
            Cell::Float(self.xi),
            Cell::Text(self.label_source.as_str().into()),
            Cell::OptFloat(self.fpr),
            Cell::OptFloat(self.tpr),
            Cell::Float(self.auc_pr),
            Cell::Float(self.recall_at_omega),
            Cell::Floats(self.precision_at_k.clone()),
            Cell::Floats(self.recall_at_k.clone()),
            Cell::Float(self.wall_time_ms),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(RunRecord {
            config_hash: row.raw("config_hash")?.to_string(),
            repetition: row.get("repetition")?,
            seed: row.get("seed")?,
            users: row.get("users")?,
            sites: row.get("sites")?,
            omega: row.get("omega")?,
            mu: row.float("mu")?,
            sigma: row.float("sigma")?,
            dissatisfied_fraction: row.float("dissatisfied_fraction")?,
            strategy: row.get("strategy")?,
            budget: row.get("budget")?,
            respondents: row.get("respondents")?,
            coverage: row.float("coverage")?,
            xi: row.float("xi")?,
            label_source: row.get("label_source")?,
            fpr: row.opt_float("fpr")?,
            tpr: row.opt_float("tpr")?,
            auc_pr: row.float("auc_pr")?,
            recall_at_omega: row.float("recall_at_omega")?,
            precision_at_k: row.floats("precision_at_k")?,
            recall_at_k: row.floats("recall_at_k")?,
            wall_time_ms: row.float_or_nan("wall_time_ms")?,
        })
    }
}

impl Tabular for XiMuCell {
    const KIND: &'static str = "auc-vs-xi";
    const COLUMNS: &'static [&'static str] = &[
        "mu",
        "xi",
        "auc_n",
        "auc_mean",
        "auc_sd",
        "sigma_mean",
        "dissatisfied_mean",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Float(self.mu),
            Cell::Float(self.xi),
            count(self.auc.count),
            Cell::Float(self.auc.mean),
            Cell::Float(self.auc.sd),
            Cell::Float(self.mean_sigma),
            Cell::Float(self.mean_dissatisfied),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(XiMuCell {
            mu: row.float("mu")?,
            xi: row.float("xi")?,
            auc: summary(row, "auc")?,
            mean_sigma: row.float("sigma_mean")?,
            mean_dissatisfied: row.float("dissatisfied_mean")?,
        })
    }
}

impl Tabular for CloudPoint {
    const KIND: &'static str = "performance-cloud";
    const COLUMNS: &'static [&'static str] = &[
        "label_source",
        "fpr",
        "tpr",
        "in_reference_grid",
        "recall_n",
        "recall_mean",
        "recall_sd",
        "coverage_mean",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.label_source.as_str().into()),
            Cell::OptFloat(self.spec.map(|s| s.fpr)),
            Cell::OptFloat(self.spec.map(|s| s.tpr)),
            Cell::Bool(self.in_reference_grid),
            count(self.recall_at_omega.count),
            Cell::Float(self.recall_at_omega.mean),
            Cell::Float(self.recall_at_omega.sd),
            Cell::Float(self.coverage),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        let spec = match (row.opt_float("fpr")?, row.opt_float("tpr")?) {
            (Some(fpr), Some(tpr)) => Some(ClassifierSpec { fpr, tpr }),
            _ => None,
        };
        Ok(CloudPoint {
            spec,
            in_reference_grid: row.get("in_reference_grid")?,
            label_source: row.get("label_source")?,
            recall_at_omega: summary(row, "recall")?,
            coverage: row.float("coverage_mean")?,
        })
    }
}

impl Tabular for DensityRow {
    const KIND: &'static str = "density-tradeoff";
    const COLUMNS: &'static [&'static str] = &[
        "density",
        "tag",
        "users",
        "budget",
        "strategy",
        "coverage_n",
        "coverage_mean",
        "coverage_sd",
        "recall_gt_n",
        "recall_gt_mean",
        "recall_gt_sd",
        "recall_c_n",
        "recall_c_mean",
        "recall_c_sd",
        "best_fpr",
        "best_tpr",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Float(self.density),
            Cell::Text(self.tag.as_str().into()),
            count(self.users),
            count(self.budget),
            Cell::Text(self.strategy.as_str().into()),
            count(self.coverage.count),
            Cell::Float(self.coverage.mean),
            Cell::Float(self.coverage.sd),
            count(self.recall_gt.count),
            Cell::Float(self.recall_gt.mean),
            Cell::Float(self.recall_gt.sd),
            count(self.recall_classifier.count),
            Cell::Float(self.recall_classifier.mean),
            Cell::Float(self.recall_classifier.sd),
            Cell::Float(self.best_spec.fpr),
            Cell::Float(self.best_spec.tpr),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(DensityRow {
            density: row.float("density")?,
            tag: row.get("tag")?,
            users: row.get("users")?,
            budget: row.get("budget")?,
            strategy: row.get::<DeliveryMode>("strategy")?,
            coverage: summary(row, "coverage")?,
            recall_gt: summary(row, "recall_gt")?,
            recall_classifier: summary(row, "recall_c")?,
            best_spec: ClassifierSpec {
                fpr: row.float("best_fpr")?,
                tpr: row.float("best_tpr")?,
            },
        })
    }
}

/// One `(k, P@k, R@k)` line of a run's precision/recall curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PrRow {
    pub repetition: usize,
    pub label_source: crate::detection::LabelSource,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Long-form precision/recall rows of `records`, in record order.
pub fn pr_rows(records: &[RunRecord]) -> Vec<PrRow> {
    records
        .iter()
        .flat_map(|r| {
            r.precision_at_k
                .iter()
                .zip(&r.recall_at_k)
                .enumerate()
                .map(move |(i, (&precision, &recall))| PrRow {
                    repetition: r.repetition,
                    label_source: r.label_source,
                    fpr: r.fpr,
                    tpr: r.tpr,
                    k: i + 1,
                    precision,
                    recall,
                })
        })
        .collect()
}

impl Tabular for PrRow {
    const KIND: &'static str = "pr-curve";
    const COLUMNS: &'static [&'static str] = &["repetition", "label_source", "fpr", "tpr", "k", "precision", "recall"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            count(self.repetition),
            Cell::Text(self.label_source.as_str().into()),
            Cell::OptFloat(self.fpr),
            Cell::OptFloat(self.tpr),
            count(self.k),
            Cell::Float(self.precision),
            Cell::Float(self.recall),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(PrRow {
            repetition: row.get("repetition")?,
            label_source: row.get("label_source")?,
            fpr: row.opt_float("fpr")?,
            tpr: row.opt_float("tpr")?,
            k: row.get("k")?,
            precision: row.float("precision")?,
            recall: row.float("recall")?,
        })
    }
}

/// Mean share of time in each user's rank-th most visited site.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareRow {
    pub rank: usize,
    pub share: f64,
}

pub fn share_rows(shares: &[f64]) -> Vec<ShareRow> {
    shares
        .iter()
        .enumerate()
        .map(|(i, &share)| ShareRow { rank: i + 1, share })
        .collect()
}

impl Tabular for ShareRow {
    const KIND: &'static str = "visit-shares";
    const COLUMNS: &'static [&'static str] = &["rank", "share"];

    fn cells(&self) -> Vec<Cell> {
        vec![count(self.rank), Cell::Float(self.share)]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(ShareRow {
            rank: row.get("rank")?,
            share: row.float("share")?,
        })
    }
}

/// Site, score and 1-based rank of one detection ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub site: usize,
    pub score: f64,
    pub rank: usize,
}

pub fn rank_rows(ranking: &crate::detection::RankingResult) -> Vec<RankRow> {
    ranking
        .ranked_ids
        .iter()
        .enumerate()
        .map(|(i, &site)| RankRow {
            site,
            score: ranking.scores[site],
            rank: i + 1,
        })
        .collect()
}

impl Tabular for RankRow {
    const KIND: &'static str = "ranking";
    const COLUMNS: &'static [&'static str] = &["site", "score", "rank"];

    fn cells(&self) -> Vec<Cell> {
        vec![count(self.site), Cell::Float(self.score), count(self.rank)]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(RankRow {
            site: row.get("site")?,
            score: row.float("score")?,
            rank: row.get("rank")?,
        })
    }
}

/// One user's label and tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SatisfactionRow {
    pub user: usize,
    pub dissatisfied: bool,
    pub tolerance: f64,
}

pub fn satisfaction_rows(s: &crate::satisfaction::SatisfactionVector) -> Vec<SatisfactionRow> {
    s.labels
        .iter()
        .zip(&s.tolerances)
        .enumerate()
        .map(|(user, (&dissatisfied, &tolerance))| SatisfactionRow {
            user,
            dissatisfied,
            tolerance,
        })
        .collect()
}

impl Tabular for SatisfactionRow {
    const KIND: &'static str = "satisfaction";
    const COLUMNS: &'static [&'static str] = &["user", "dissatisfied", "tolerance"];

    fn cells(&self) -> Vec<Cell> {
        vec![
            count(self.user),
            Cell::Bool(self.dissatisfied),
            Cell::Float(self.tolerance),
        ]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(SatisfactionRow {
            user: row.get("user")?,
            dissatisfied: row.get("dissatisfied")?,
            tolerance: row.float("tolerance")?,
        })
    }
}

/// Respondent id of a survey assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RespondentRow {
    pub user: usize,
}

impl Tabular for RespondentRow {
    const KIND: &'static str = "assignment";
    const COLUMNS: &'static [&'static str] = &["user"];

    fn cells(&self) -> Vec<Cell> {
        vec![count(self.user)]
    }

    fn from_row(row: &Row<'_>) -> Result<Self> {
        Ok(RespondentRow { user: row.get("user")? })
    }
}
