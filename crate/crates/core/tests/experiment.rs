use rand::seq::SliceRandom;

use sirude_core::experiment::{run_experiment, ExperimentConfig, JobId};
use sirude_core::io::{load_run, report_csv, write_run};
use sirude_core::metrics::aggregate_report;
use sirude_core::models::ModelKind;
use sirude_core::rng::seeded;
use sirude_core::sim::Scenario;

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.n_regions = 2;
    cfg.n_initializations = 2;
    cfg.days = 40;
    cfg.train_split = 20;
    cfg.beta = 0.25;
    cfg.scenarios = vec![Scenario::NoRecovered];
    cfg.fit.sir.iterations = 40;
    cfg.fit.full_ude.iterations = 20;
    cfg.fit.sir_ude.adam_iterations = 20;
    cfg.fit.sir_ude.bfgs_iterations = 5;
    cfg
}

fn model_bytes(out: &sirude_core::experiment::ExperimentOutput) -> Vec<String> {
    out.records
        .iter()
        .map(|r| serde_json::to_string(&r.model).unwrap())
        .collect()
}

#[test]
fn thread_count_does_not_change_results() {
    let mut cfg = tiny();
    cfg.jobs = 1;
    let serial = run_experiment(&cfg).unwrap();
    cfg.jobs = 2;
    let parallel = run_experiment(&cfg).unwrap();
    assert_eq!(report_csv(&serial.report), report_csv(&parallel.report));
    assert_eq!(model_bytes(&serial), model_bytes(&parallel));
    let ids: Vec<JobId> = serial.records.iter().map(|r| r.job).collect();
    assert_eq!(ids, parallel.records.iter().map(|r| r.job).collect::<Vec<_>>());
}

#[test]
fn report_ignores_run_order_and_isolates_failures() {
    let mut cfg = tiny();
    cfg.sindy.enabled = false;
    let broken = JobId {
        scenario: Scenario::NoRecovered,
        init: 1,
        region: 0,
        kind: ModelKind::SirFit,
    };
    cfg.fault_injection = vec![broken];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.failures(), 1);
    let failed: Vec<JobId> = out.records.iter().filter(|r| r.failed()).map(|r| r.job).collect();
    assert_eq!(failed, vec![broken]);

    let mut scored: Vec<_> = out.records.iter().map(|r| r.scored()).collect();
    let expected = aggregate_report(&scored);
    assert_eq!(expected, out.report);
    let mut rng = seeded(4);
    for _ in 0..5 {
        scored.shuffle(&mut rng);
        assert_eq!(aggregate_report(&scored), expected);
    }

    let row = out.report.row(Scenario::NoRecovered, ModelKind::SirFit, Some(0)).unwrap();
    assert_eq!((row.test_mae.n_finite, row.test_mae.n_failed), (1, 1));
    let pooled = out.report.row(Scenario::NoRecovered, ModelKind::SirFit, None).unwrap();
    assert_eq!((pooled.test_mae.n_finite, pooled.test_mae.n_failed), (3, 1));
    let other = out.report.row(Scenario::NoRecovered, ModelKind::SirUde, Some(0)).unwrap();
    assert_eq!(other.test_mae.n_failed, 0);
}

#[test]
fn run_directory_round_trips() {
    let cfg = tiny();
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &out).unwrap();
    let run = load_run(dir.path()).unwrap();
    assert_eq!(run.config, cfg);
    assert_eq!(run.report, out.report);
    for record in &out.records {
        let model = run.model(&record.job).unwrap();
        assert_eq!(serde_json::to_string(&model).unwrap(), serde_json::to_string(record.model.as_ref().unwrap()).unwrap());
        let (test, full) = run.predictions(&record.job).unwrap();
        assert_eq!(test, record.pred_test);
        assert_eq!(full, record.pred_full);
    }
}
