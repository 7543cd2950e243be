use std::time::Instant;

use qoesim_core::experiment::{
    emit_results, read_table, render_table, round_float, run_scenario, scenario_metadata, sweep_gt_density,
    sweep_performance_cloud, sweep_xi_mu, users_for_density, validate_scenario, ClassifierSettings, CloudPoint,
    DeliveryMode, DensityRow, DensityTag, Format, InfeasiblePolicy, KPolicy, Metadata, RunRecord, Scenario,
    ScenarioConfig, XiMuCell,
};
use qoesim_core::LabelSource;

fn small(users: usize, reps: usize) -> ScenarioConfig {
    ScenarioConfig {
        users,
        repetitions: reps,
        seed: 11,
        ..ScenarioConfig::default()
    }
}

fn without_timing(mut rs: Vec<RunRecord>) -> Vec<RunRecord> {
    rs.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
    rs
}

#[test]
fn repeated_runs_are_identical() {
    let mut c = small(400, 3);
    c.classifier = ClassifierSettings::Reference;
    let a = without_timing(run_scenario(&c).unwrap());
    let b = without_timing(run_scenario(&c).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.len(), 3 * 6);
    assert!(a.iter().all(|r| r.budget == 4 && r.respondents == 4));
    assert_eq!(a[0].label_source, LabelSource::GtOnly);

    let mut other = c.clone();
    other.seed += 1;
    assert_ne!(without_timing(run_scenario(&other).unwrap()), a);
}

#[test]
fn repetitions_replant_sites_and_resimulate_unless_reused() {
    let c = small(200, 2);
    let s = Scenario::new(c.clone()).unwrap();
    let (w0, w1) = (s.world(0).unwrap(), s.world(1).unwrap());
    assert_ne!(w0.underperforming, w1.underperforming);
    assert_ne!(w0.visits.as_flat(), w1.visits.as_flat());

    let mut reuse = c;
    reuse.mobility.reuse = true;
    let s = Scenario::new(reuse).unwrap();
    let (w0, w1) = (s.world(0).unwrap(), s.world(1).unwrap());
    assert_ne!(w0.underperforming, w1.underperforming);
    assert_eq!(w0.visits.as_flat(), w1.visits.as_flat());
}

#[test]
fn frozen_tolerances_repeat_across_repetitions() {
    let mut c = small(200, 2);
    c.profile.freeze_tolerances = true;
    let s = Scenario::new(c.clone()).unwrap();
    let t0 = s.truth(&s.world(0).unwrap(), 0.25).unwrap();
    let t1 = s.truth(&s.world(1).unwrap(), 0.25).unwrap();
    assert_eq!(t0.satisfaction.tolerances, t1.satisfaction.tolerances);

    c.profile.freeze_tolerances = false;
    let s = Scenario::new(c).unwrap();
    let t0 = s.truth(&s.world(0).unwrap(), 0.25).unwrap();
    let t1 = s.truth(&s.world(1).unwrap(), 0.25).unwrap();
    assert_ne!(t0.satisfaction.tolerances, t1.satisfaction.tolerances);
}

#[test]
fn budget_and_density_follow_the_response_rate() {
    let c = small(100_000, 1);
    assert_eq!(c.delivery.budget_for(c.users), 1000);
    let density = c.delivery.budget_for(c.users) as f64 / 136.0;
    assert!((density - 7.35).abs() < 0.01, "{density}");
    assert_eq!(users_for_density(1000.0 / 136.0, 136, 0.01), 100_000);
    assert_eq!(users_for_density(0.0735, 136, 0.01), 1000);
    assert_eq!(DensityTag::of(0.0735), DensityTag::Low);
    assert_eq!(DensityTag::of(0.735), DensityTag::Medium);
    assert_eq!(DensityTag::of(7.35), DensityTag::High);
}

#[test]
fn omega_policy_truncates_curves() {
    let mut c = small(300, 1);
    c.detection.k = KPolicy::Omega;
    let r = run_scenario(&c).unwrap();
    assert_eq!(r[0].precision_at_k.len(), 13);
    assert_eq!(r[0].recall_at_k[12], r[0].recall_at_omega);
}

#[test]
fn calibrated_records_stay_in_target() {
    let mut c = small(2000, 4);
    c.profile.calibrate = Some([0.15, 0.30]);
    for r in run_scenario(&c).unwrap() {
        assert!(
            (0.15..=0.30).contains(&r.dissatisfied_fraction),
            "rep {} fraction {}",
            r.repetition,
            r.dissatisfied_fraction
        );
    }
}

#[test]
fn infeasible_calibration_propagates_unless_nearest() {
    let mut c = small(1000, 1);
    c.profile.mu = 0.02;
    c.profile.calibrate = Some([0.01, 0.02]);
    let err = run_scenario(&c).unwrap_err();
    assert!(matches!(err, qoesim_core::Error::InfeasibleCalibration { .. }), "{err}");
    c.profile.on_infeasible = InfeasiblePolicy::Nearest;
    let r = run_scenario(&c).unwrap();
    assert!(r[0].sigma > 0.0);
}

#[test]
fn xi_mu_grid_shape_and_consistency() {
    let mut c = small(500, 2);
    c.delivery.strategy = DeliveryMode::Full;
    let xis = [0.1, 0.2, 0.3, 0.4, 0.5];
    let mus = [0.05, 0.15, 0.25, 0.35];
    let table = sweep_xi_mu(&c, &xis, &mus).unwrap();
    assert_eq!(table.len(), 20);
    assert!(table.iter().all(|cell| (0.0..=1.0).contains(&cell.auc.mean)));
    assert_eq!((table[0].mu, table[0].xi), (0.05, 0.1));
    assert_eq!((table[19].mu, table[19].xi), (0.35, 0.5));

    let single = sweep_xi_mu(&c, &[0.3], &[0.25]).unwrap();
    c.detection.xi = 0.3;
    let runs = run_scenario(&c).unwrap();
    let mean = runs.iter().map(|r| r.auc_pr).sum::<f64>() / runs.len() as f64;
    assert_eq!(single.len(), 1);
    assert!((single[0].auc.mean - mean).abs() < 1e-15);
    assert!(sweep_xi_mu(&c, &[], &[0.25]).is_err());
}

#[test]
fn cloud_contains_baseline_and_grid() {
    let c = small(800, 2);
    let cloud = sweep_performance_cloud(&c, 0.5).unwrap();
    assert_eq!(cloud.len(), 10);
    assert_eq!(cloud[0].label_source, LabelSource::GtOnly);
    let origin = cloud
        .iter()
        .find(|p| p.spec.is_some_and(|s| s.fpr == 0.0 && s.tpr == 0.0))
        .unwrap();
    assert_eq!(origin.recall_at_omega, cloud[0].recall_at_omega);

    let mut full = c;
    full.delivery.strategy = DeliveryMode::Full;
    assert!(sweep_performance_cloud(&full, 0.5).is_err());
}

#[test]
fn density_table_strata_and_coverage() {
    let mut c = small(1, 2);
    c.classifier = ClassifierSettings::None;
    let densities = [0.0735, 0.2];
    let table = sweep_gt_density(&c, &densities, &[DeliveryMode::Random, DeliveryMode::Optimized]).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.rows[0].tag, DensityTag::Low);
    assert_eq!(table.rows[0].users, 1000);
    assert_eq!(table.rows[0].budget, 10);
    for pair in table.rows.chunks(2) {
        assert!(pair[1].coverage.mean >= pair[0].coverage.mean, "{pair:?}");
    }
    assert_eq!(table.crossovers.len(), 2);

    let one = sweep_gt_density(&c, &densities, &[DeliveryMode::Random]).unwrap();
    assert!(one.rows.iter().all(|r| r.strategy == DeliveryMode::Random));
    assert!(sweep_gt_density(&c, &[0.0001], &[DeliveryMode::Random]).is_err());
}

#[test]
fn emitted_tables_round_trip_and_are_stable() {
    let mut c = small(300, 2);
    c.classifier = ClassifierSettings::Spec { fpr: 0.1, tpr: 0.6 };
    let records = run_scenario(&c).unwrap();
    let meta = scenario_metadata("runs", &c);
    let dir = tempfile::tempdir().unwrap();
    for format in [Format::Csv, Format::JsonLines] {
        let a = dir.path().join(format!("a.{}", format.extension()));
        let b = dir.path().join(format!("b.{}", format.extension()));
        emit_results(&records, &meta, format, &a, false).unwrap();
        emit_results(&records, &meta, format, &b, false).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

        let (back_meta, back) = read_table::<RunRecord>(&a).unwrap();
        assert_eq!(back_meta, meta);
        let config = ScenarioConfig::from_toml_str(back_meta.get("config").unwrap()).unwrap();
        assert_eq!(config, c);
        assert_eq!(back.len(), records.len());
        for (x, y) in back.iter().zip(&records) {
            assert!(x.wall_time_ms.is_nan());
            let mut expected = y.clone();
            expected.wall_time_ms = x.wall_time_ms;
            round_record(&mut expected);
            assert_eq!(format!("{x:?}"), format!("{expected:?}"));
        }
        // Parsed records re-emit to the same bytes.
        let again = dir.path().join(format!("c.{}", format.extension()));
        emit_results(&back, &meta, format, &again, false).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&again).unwrap());
    }
}

fn round_record(r: &mut RunRecord) {
    for v in [
        &mut r.mu,
        &mut r.sigma,
        &mut r.dissatisfied_fraction,
        &mut r.coverage,
        &mut r.xi,
        &mut r.auc_pr,
        &mut r.recall_at_omega,
    ] {
        *v = round_float(*v);
    }
    r.fpr = r.fpr.map(round_float);
    r.tpr = r.tpr.map(round_float);
    r.precision_at_k.iter_mut().for_each(|v| *v = round_float(*v));
    r.recall_at_k.iter_mut().for_each(|v| *v = round_float(*v));
}

#[test]
fn empty_tables_are_header_only() {
    let meta = Metadata::new("runs");
    let csv = render_table::<RunRecord>(&[], &meta, Format::Csv, false);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("config_hash,repetition,seed"));
    assert!(!lines[1].contains("wall_time_ms"));
    let jsonl = render_table::<RunRecord>(&[], &meta, Format::JsonLines, false);
    assert_eq!(jsonl.lines().count(), 1);
    let with_timing = render_table::<RunRecord>(&[], &meta, Format::Csv, true);
    assert!(with_timing.contains("wall_time_ms"));
}

#[test]
fn sweep_tables_round_trip() {
    let mut c = small(400, 2);
    c.delivery.strategy = DeliveryMode::Full;
    let cells = sweep_xi_mu(&c, &[0.2, 0.4], &[0.25]).unwrap();
    c.delivery.strategy = DeliveryMode::Random;
    let cloud = sweep_performance_cloud(&c, 1.0).unwrap();
    let density = sweep_gt_density(&c, &[0.1], &[DeliveryMode::Optimized]).unwrap();
    for format in [Format::Csv, Format::JsonLines] {
        let text = render_table(&cells, &Metadata::new("auc-vs-xi"), format, false);
        let (_, back) = qoesim_core::experiment::parse_table::<XiMuCell>(&text, "mem").unwrap();
        assert_eq!(render_table(&back, &Metadata::new("auc-vs-xi"), format, false), text);

        let text = render_table(&cloud, &Metadata::new("performance-cloud"), format, false);
        let (_, back) = qoesim_core::experiment::parse_table::<CloudPoint>(&text, "mem").unwrap();
        assert_eq!(back.len(), 5);
        assert!(back[0].spec.is_none());
        assert_eq!(
            render_table(&back, &Metadata::new("performance-cloud"), format, false),
            text
        );

        let text = render_table(&density.rows, &Metadata::new("density-tradeoff"), format, false);
        let (_, back) = qoesim_core::experiment::parse_table::<DensityRow>(&text, "mem").unwrap();
        assert_eq!(
            render_table(&back, &Metadata::new("density-tradeoff"), format, false),
            text
        );
    }
    let wrong = render_table(&cells, &Metadata::new("auc-vs-xi"), Format::Csv, false);
    assert!(qoesim_core::experiment::parse_table::<CloudPoint>(&wrong, "mem").is_err());
}

#[test]
fn invariant_suite_passes_on_default_scenario() {
    let mut c = small(1000, 1);
    c.profile.calibrate = Some([0.15, 0.30]);
    let checks = validate_scenario(&c).unwrap();
    assert!(checks.len() >= 10);
    for check in &checks {
        assert!(check.passed, "{}: {}", check.name, check.detail);
    }
}

#[test]
fn thousand_users_ten_repetitions_within_a_minute() {
    let mut c = small(1000, 10);
    c.classifier = ClassifierSettings::Reference;
    let start = Instant::now();
    let records = run_scenario(&c).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(records.len(), 60);
    assert!(elapsed.as_secs_f64() < 60.0, "{elapsed:?}");
}
