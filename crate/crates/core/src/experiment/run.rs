use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rayon::prelude::*;

use crate::classifier::{predict_labels, GridPoint};
use crate::delivery::{coverage_indicator, deliver, DeliveryConfig, SurveyAssignment};
use crate::detection::{rank_sites, DetectionMetrics, LabelSource};
use crate::error::{Error, Result};
use crate::mobility::{simulate_population, MobilityParams, VisitMatrix};
use crate::satisfaction::{
    apply_label_noise, calibrate_sigma, compute_satisfaction, draw_tolerances, nearest_sigma, SatisfactionVector,
};
use crate::seed::{SeedPath, Stage};
use crate::topology::{plant_underperforming, Topology};

use super::config::{DeliveryMode, InfeasiblePolicy, KPolicy, ScenarioConfig};

/// One evaluated ranking: a repetition, a label source and, when
/// predictions were used, a classifier working point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub repetition: usize,
    /// Seed of the repetition's stream family.
    pub seed: u64,
    pub users: usize,
    pub sites: usize,
    pub omega: usize,
    pub mu: f64,
    pub sigma: f64,
    pub dissatisfied_fraction: f64,
    pub strategy: DeliveryMode,
    pub budget: usize,
    pub respondents: usize,
    pub coverage: f64,
    pub xi: f64,
    pub label_source: LabelSource,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub auc_pr: f64,
    pub recall_at_omega: f64,
    pub precision_at_k: Vec<f64>,
    pub recall_at_k: Vec<f64>,
    /// Milliseconds spent on the repetition. Not reproducible, so emitted
    /// only on request.
    pub wall_time_ms: f64,
}

/// A configured scenario with its resolved layout and mobility law.
#[derive(Debug)]
pub struct Scenario {
    config: ScenarioConfig,
    hash: String,
    topology: Topology,
    mobility: MobilityParams,
    working_points: Vec<GridPoint>,
    shared_visits: OnceLock<Arc<VisitMatrix>>,
}

/// Per-repetition draws shared by every cell of a sweep.
#[derive(Debug, Clone)]
pub struct World {
    pub repetition: usize,
    pub seed: SeedPath,
    pub underperforming: Vec<usize>,
    pub visits: Arc<VisitMatrix>,
}

/// Ground-truth labels of one repetition for one tolerance mean.
#[derive(Debug, Clone)]
pub struct Truth {
    pub mu: f64,
    pub sigma: f64,
    pub satisfaction: SatisfactionVector,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let topology = config.build_topology()?;
        if config.omega_for(topology.len()) >= topology.len() {
            return Err(Error::param("omega_fraction", "leaves no healthy site"));
        }
        let mobility = config.mobility.resolve(&topology)?;
        let working_points = config.classifier.working_points()?;
        Ok(Scenario {
            hash: config.hash(),
            config,
            topology,
            mobility,
            working_points,
            shared_visits: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn mobility(&self) -> &MobilityParams {
        &self.mobility
    }

    pub fn working_points(&self) -> &[GridPoint] {
        &self.working_points
    }

    pub fn omega(&self) -> usize {
        self.config.omega_for(self.topology.len())
    }

    pub fn budget(&self) -> usize {
        self.config.delivery.budget_for(self.config.users)
    }

    fn master(&self) -> SeedPath {
        SeedPath::master(self.config.seed)
    }

    /// Planted sites and trajectories of repetition `rep`.
    pub fn world(&self, rep: usize) -> Result<World> {
        let seed = self.master().repetition(rep);
        let planted = plant_underperforming(
            &self.topology,
            self.omega(),
            None,
            seed.stage(Stage::Underperforming).value(),
        )?;
        let visits = if self.config.mobility.reuse {
            if let Some(v) = self.shared_visits.get() {
                Arc::clone(v)
            } else {
                let v = Arc::new(self.simulate(self.master().stage(Stage::Mobility))?);
                Arc::clone(self.shared_visits.get_or_init(|| v))
            }
        } else {
            Arc::new(self.simulate(seed.stage(Stage::Mobility))?)
        };
        Ok(World {
            repetition: rep,
            seed,
            underperforming: planted.underperforming().to_vec(),
            visits,
        })
    }

    fn simulate(&self, stream: SeedPath) -> Result<VisitMatrix> {
        simulate_population(&self.topology, &self.mobility, self.config.users, stream.value())
    }

    /// Tolerances and labels for tolerance mean `mu`, calibrating sigma
    /// when the profile asks for it.
    pub fn truth(&self, world: &World, mu: f64) -> Result<Truth> {
        let profile = &self.config.profile;
        let sigma = match profile.calibrate {
            None => profile.sigma,
            Some([lo, hi]) => {
                let stream = world.seed.stage(Stage::Calibration);
                match calibrate_sigma(&world.visits, &world.underperforming, mu, (lo, hi), &mut stream.rng()) {
                    Ok(c) => c.sigma,
                    Err(Error::InfeasibleCalibration { .. }) if profile.on_infeasible == InfeasiblePolicy::Nearest => {
                        nearest_sigma(&world.visits, &world.underperforming, mu, (lo, hi), &mut stream.rng())?.sigma
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let tolerance_stream = if profile.freeze_tolerances {
            self.master().stage(Stage::Tolerance)
        } else {
            world.seed.stage(Stage::Tolerance)
        };
        let tolerances = draw_tolerances(self.config.users, mu, sigma, &mut tolerance_stream.rng())?;
        let mut satisfaction = compute_satisfaction(&world.visits, &world.underperforming, &tolerances)?;
        if profile.psi > 0.0 {
            satisfaction = apply_label_noise(&satisfaction, profile.psi, &mut world.seed.stage(Stage::Noise).rng())?;
        }
        Ok(Truth {
            mu,
            sigma,
            satisfaction,
        })
    }

    /// Survey assignment of `world` under `mode`; `None` when sampling is off.
    pub fn survey(&self, world: &World, mode: DeliveryMode, xi: f64) -> Result<Option<SurveyAssignment>> {
        let Some(strategy) = mode.strategy() else {
            return Ok(None);
        };
        let d = &self.config.delivery;
        let config = DeliveryConfig {
            budget: self.budget(),
            strategy,
            xi: d.xi.unwrap_or(xi),
            n_min: d.n_min,
        };
        let mut rng = world.seed.stage(Stage::Delivery).rng();
        deliver(&world.visits, &config, &mut rng).map(Some)
    }

    /// Rank and score one repetition at detection threshold `xi`.
    ///
    /// With sampling on, the first record uses respondent labels only and
    /// one record follows per working point, in the order of `points`.
    /// Every working point replays the same classifier stream.
    pub fn evaluate(
        &self,
        world: &World,
        truth: &Truth,
        mode: DeliveryMode,
        xi: f64,
        points: &[GridPoint],
    ) -> Result<Vec<RunRecord>> {
        let start = Instant::now();
        let visits = &world.visits;
        let labels = &truth.satisfaction.labels;
        let d = &self.config.delivery;
        let base = RunRecord {
            config_hash: self.hash.clone(),
            repetition: world.repetition,
            seed: world.seed.value(),
            users: visits.users(),
            sites: visits.sites(),
            omega: world.underperforming.len(),
            mu: truth.mu,
            sigma: truth.sigma,
            dissatisfied_fraction: truth.satisfaction.dissatisfied_fraction(),
            strategy: mode,
            budget: 0,
            respondents: 0,
            coverage: 0.0,
            xi,
            label_source: LabelSource::FullTruth,
            fpr: None,
            tpr: None,
            auc_pr: 0.0,
            recall_at_omega: 0.0,
            precision_at_k: Vec::new(),
            recall_at_k: Vec::new(),
            wall_time_ms: 0.0,
        };
        let score = |labels: &[bool], source: LabelSource, spec: Option<(f64, f64)>, template: &RunRecord| {
            let ranking = rank_sites(visits, labels, xi, source)?;
            let metrics = DetectionMetrics::compute(&ranking.ranked_ids, &world.underperforming)?;
            Ok::<_, Error>(self.finish(template.clone(), source, spec, metrics))
        };

        let mut records = match self.survey(world, mode, xi)? {
            None => {
                let everyone: Vec<usize> = (0..visits.users()).collect();
                let covered = coverage_indicator(visits, &everyone, d.xi.unwrap_or(xi), d.n_min)?;
                let template = RunRecord {
                    respondents: visits.users(),
                    budget: visits.users(),
                    coverage: covered.len() as f64 / visits.sites() as f64,
                    ..base
                };
                vec![score(labels, LabelSource::FullTruth, None, &template)?]
            }
            Some(assignment) => {
                let template = RunRecord {
                    budget: self.budget(),
                    respondents: assignment.respondents.len(),
                    coverage: assignment.coverage,
                    ..base
                };
                let gt_labels: Vec<bool> = (0..visits.users())
                    .map(|i| assignment.is_respondent(i) && labels[i])
                    .collect();
                let mut out = vec![score(&gt_labels, LabelSource::GtOnly, None, &template)?];
                let others: Vec<usize> = (0..visits.users()).filter(|&i| !assignment.is_respondent(i)).collect();
                let hidden: Vec<bool> = others.iter().map(|&i| labels[i]).collect();
                let stream = world.seed.stage(Stage::Classifier);
                let predicted: Vec<RunRecord> = points
                    .par_iter()
                    .map(|point| {
                        let guess = predict_labels(&hidden, &point.spec, &mut stream.rng());
                        let mut combined = gt_labels.clone();
                        for (&i, &g) in others.iter().zip(&guess) {
                            combined[i] = g;
                        }
                        score(
                            &combined,
                            LabelSource::GtPlusPredicted,
                            Some((point.spec.fpr, point.spec.tpr)),
                            &template,
                        )
                    })
                    .collect::<Result<_>>()?;
                out.extend(predicted);
                out
            }
        };
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        for r in &mut records {
            r.wall_time_ms = elapsed;
        }
        Ok(records)
    }

    fn finish(
        &self,
        mut record: RunRecord,
        source: LabelSource,
        spec: Option<(f64, f64)>,
        metrics: DetectionMetrics,
    ) -> RunRecord {
        let keep = match self.config.detection.k {
            KPolicy::All => metrics.precision_at_k.len(),
            KPolicy::Omega => record.omega.min(metrics.precision_at_k.len()),
        };
        record.label_source = source;
        record.fpr = spec.map(|s| s.0);
        record.tpr = spec.map(|s| s.1);
        record.auc_pr = metrics.auc_pr;
        record.recall_at_omega = metrics.recall_at_omega;
        record.precision_at_k = metrics.precision_at_k[..keep].to_vec();
        record.recall_at_k = metrics.recall_at_k[..keep].to_vec();
        record
    }

    /// Every repetition with the configured profile, delivery, threshold
    /// and working points. Records are ordered by repetition, then as
    /// returned by [`Scenario::evaluate`].
    pub fn run(&self) -> Result<Vec<RunRecord>> {
        let mut records = Vec::new();
        for rep in 0..self.config.repetitions {
            let started = Instant::now();
            let world = self.world(rep)?;
            let truth = self.truth(&world, self.config.profile.mu)?;
            let mut batch = self.evaluate(
                &world,
                &truth,
                self.config.delivery.strategy,
                self.config.detection.xi,
                &self.working_points,
            )?;
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            for r in &mut batch {
                r.wall_time_ms = elapsed;
            }
            records.extend(batch);
        }
        Ok(records)
    }
}

/// Run every repetition of `config`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<RunRecord>> {
    Scenario::new(config.clone())?.run()
}
