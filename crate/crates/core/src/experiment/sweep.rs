use crate::classifier::{ClassifierSpec, GridPoint};
use crate::detection::LabelSource;
use crate::error::{Error, Result};

use super::config::{ClassifierSettings, DeliveryMode, ScenarioConfig};
use super::run::Scenario;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { count, mean, sd }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sd / (self.count as f64).sqrt()
        }
    }
}

/// One `(xi, mu)` cell of the full-truth robustness sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct XiMuCell {
    pub xi: f64,
    pub mu: f64,
    pub auc: Summary,
    pub mean_sigma: f64,
    pub mean_dissatisfied: f64,
}

/// Mean AUC per `(xi, mu)` with every user's true label known. Cells are
/// ordered by `mu`, then `xi`, as given. Trajectories and planted sites
/// are shared by all cells of a repetition.
pub fn sweep_xi_mu(config: &ScenarioConfig, xi_values: &[f64], mu_values: &[f64]) -> Result<Vec<XiMuCell>> {
    if xi_values.is_empty() || mu_values.is_empty() {
        return Err(Error::param("grid", "xi and mu grids must be non-empty"));
    }
    let mut config = config.clone();
    config.delivery.strategy = DeliveryMode::Full;
    config.classifier = ClassifierSettings::None;
    for &mu in mu_values {
        let mut probe = config.clone();
        probe.profile.mu = mu;
        probe.validate()?;
    }
    for &xi in xi_values {
        let mut probe = config.clone();
        probe.detection.xi = xi;
        probe.validate()?;
    }
    let scenario = Scenario::new(config.clone())?;
    let cells = mu_values.len() * xi_values.len();
    let mut auc = vec![Vec::with_capacity(config.repetitions); cells];
    let mut sigma = vec![0.0; mu_values.len()];
    let mut dissatisfied = vec![0.0; mu_values.len()];
    for rep in 0..config.repetitions {
        let world = scenario.world(rep)?;
        for (m, &mu) in mu_values.iter().enumerate() {
            let truth = scenario.truth(&world, mu)?;
            sigma[m] += truth.sigma;
            dissatisfied[m] += truth.satisfaction.dissatisfied_fraction();
            for (x, &xi) in xi_values.iter().enumerate() {
                let record = scenario
                    .evaluate(&world, &truth, DeliveryMode::Full, xi, &[])?
                    .remove(0);
                auc[m * xi_values.len() + x].push(record.auc_pr);
            }
        }
    }
    let reps = config.repetitions as f64;
    let mut out = Vec::with_capacity(cells);
    for (m, &mu) in mu_values.iter().enumerate() {
        for (x, &xi) in xi_values.iter().enumerate() {
            out.push(XiMuCell {
                xi,
                mu,
                auc: Summary::of(&auc[m * xi_values.len() + x]),
                mean_sigma: sigma[m] / reps,
                mean_dissatisfied: dissatisfied[m] / reps,
            });
        }
    }
    Ok(out)
}

/// Mean R@Omega at one classifier working point. The ground-truth-only
/// baseline has `spec == None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub spec: Option<ClassifierSpec>,
    pub in_reference_grid: bool,
    pub label_source: LabelSource,
    pub recall_at_omega: Summary,
    pub coverage: f64,
}

/// R@Omega over the full `(FPR, TPR)` grid for the configured delivery
/// strategy. The first entry is the ground-truth-only baseline, followed
/// by the grid in FPR-major order.
pub fn sweep_performance_cloud(config: &ScenarioConfig, grid_step: f64) -> Result<Vec<CloudPoint>> {
    if config.delivery.strategy == DeliveryMode::Full {
        return Err(Error::param(
            "delivery.strategy",
            "a performance cloud needs survey sampling (random or optimized)",
        ));
    }
    let mut config = config.clone();
    config.classifier = ClassifierSettings::Grid { step: grid_step };
    let scenario = Scenario::new(config.clone())?;
    let points = scenario.working_points().to_vec();
    let mut recall = vec![Vec::with_capacity(config.repetitions); points.len() + 1];
    let mut coverage = 0.0;
    for rep in 0..config.repetitions {
        let world = scenario.world(rep)?;
        let truth = scenario.truth(&world, config.profile.mu)?;
        let records = scenario.evaluate(&world, &truth, config.delivery.strategy, config.detection.xi, &points)?;
        coverage += records[0].coverage;
        for (slot, r) in recall.iter_mut().zip(&records) {
            slot.push(r.recall_at_omega);
        }
    }
    let coverage = coverage / config.repetitions as f64;
    let mut out = vec![CloudPoint {
        spec: None,
        in_reference_grid: false,
        label_source: LabelSource::GtOnly,
        recall_at_omega: Summary::of(&recall[0]),
        coverage,
    }];
    out.extend(points.iter().zip(&recall[1..]).map(|(p, r)| CloudPoint {
        spec: Some(p.spec),
        in_reference_grid: p.in_reference_grid,
        label_source: LabelSource::GtPlusPredicted,
        recall_at_omega: Summary::of(r),
        coverage,
    }));
    Ok(out)
}

/// Respondents per site, bucketed around the three reference densities
/// 0.0735, 0.735 and 7.35 (boundaries at their geometric midpoints).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityTag {
    Low,
    Medium,
    High,
}

impl DensityTag {
    pub fn of(density: f64) -> Self {
        let low_medium = (0.0735f64 * 0.735).sqrt();
        let medium_high = (0.735f64 * 7.35).sqrt();
        if density < low_medium {
            DensityTag::Low
        } else if density < medium_high {
            DensityTag::Medium
        } else {
            DensityTag::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DensityTag::Low => "low",
            DensityTag::Medium => "medium",
            DensityTag::High => "high",
        }
    }
}

impl std::str::FromStr for DensityTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(DensityTag::Low),
            "medium" => Ok(DensityTag::Medium),
            "high" => Ok(DensityTag::High),
            other => Err(Error::param("tag", format!("unknown density tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub density: f64,
    pub tag: DensityTag,
    pub users: usize,
    pub budget: usize,
    pub strategy: DeliveryMode,
    pub coverage: Summary,
    /// R@Omega with respondent labels only.
    pub recall_gt: Summary,
    /// R@Omega of the best working point (highest mean).
    pub recall_classifier: Summary,
    pub best_spec: ClassifierSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossover {
    pub strategy: DeliveryMode,
    /// Lowest swept density at which respondent labels alone match or beat
    /// the best classifier.
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub rows: Vec<DensityRow>,
    pub crossovers: Vec<Crossover>,
}

/// Population needed for `density` respondents per site.
pub fn users_for_density(density: f64, sites: usize, response_rate: f64) -> usize {
    (density * sites as f64 / response_rate).round() as usize
}

/// Ground-truth density trade-off. For each density the population is
/// `round(density * M / response_rate)`; rows are ordered by density, then
/// strategy, as given. Working points come from the configured classifier,
/// or the reference points when none is configured.
pub fn sweep_gt_density(
    config: &ScenarioConfig,
    densities: &[f64],
    strategies: &[DeliveryMode],
) -> Result<DensityTable> {
    if densities.is_empty() || strategies.is_empty() {
        return Err(Error::param("grid", "densities and strategies must be non-empty"));
    }
    if strategies.contains(&DeliveryMode::Full) {
        return Err(Error::param("strategies", "density sweeps need survey sampling"));
    }
    let mut config = config.clone();
    config.delivery.budget = None;
    if config.classifier == ClassifierSettings::None {
        config.classifier = ClassifierSettings::Reference;
    }
    let sites = config.build_topology()?.len();
    let mut rows = Vec::new();
    for &density in densities {
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::param("density", format!("must be positive, got {density}")));
        }
        let mut cfg = config.clone();
        cfg.users = users_for_density(density, sites, cfg.delivery.response_rate);
        let scenario = Scenario::new(cfg.clone()).map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name,
                reason: format!("{reason} (density {density} is not realizable)"),
            },
            other => other,
        })?;
        let points: Vec<GridPoint> = scenario.working_points().to_vec();
        let mut coverage = vec![Vec::new(); strategies.len()];
        let mut recall = vec![vec![Vec::new(); points.len() + 1]; strategies.len()];
        for rep in 0..cfg.repetitions {
            let world = scenario.world(rep)?;
            let truth = scenario.truth(&world, cfg.profile.mu)?;
            for (s, &strategy) in strategies.iter().enumerate() {
                let records = scenario.evaluate(&world, &truth, strategy, cfg.detection.xi, &points)?;
                coverage[s].push(records[0].coverage);
                for (slot, r) in recall[s].iter_mut().zip(&records) {
                    slot.push(r.recall_at_omega);
                }
            }
        }
        for (s, &strategy) in strategies.iter().enumerate() {
            let gt = Summary::of(&recall[s][0]);
            let (best, best_summary) = points
                .iter()
                .zip(&recall[s][1..])
                .map(|(p, r)| (p.spec, Summary::of(r)))
                .fold(None::<(ClassifierSpec, Summary)>, |acc, cur| match acc {
                    Some(a) if a.1.mean >= cur.1.mean => Some(a),
                    _ => Some(cur),
                })
                .ok_or_else(|| Error::param("classifier", "no working points configured"))?;
            rows.push(DensityRow {
                density,
                tag: DensityTag::of(density),
                users: cfg.users,
                budget: scenario.budget(),
                strategy,
                coverage: Summary::of(&coverage[s]),
                recall_gt: gt,
                recall_classifier: best_summary,
                best_spec: best,
            });
        }
    }
    let crossovers = strategies
        .iter()
        .map(|&strategy| {
            let mut stratum: Vec<&DensityRow> = rows.iter().filter(|r| r.strategy == strategy).collect();
            stratum.sort_by(|a, b| a.density.total_cmp(&b.density));
            Crossover {
                strategy,
                density: stratum
                    .iter()
                    .find(|r| r.recall_gt.mean >= r.recall_classifier.mean)
                    .map(|r| r.density),
            }
        })
        .collect();
    Ok(DensityTable { rows, crossovers })
}
