//! The full study grid: geography, outbreaks, fits, predictions, report.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::{mobility_matrix, sample_geography, Geography, MobilityMatrix};
use crate::metrics::{aggregate_report, median, score, EvalReport, Metric, ScoredRun, Scores, Window};
use crate::models::{
    coupling_series, fit_full_ude, fit_sir, fit_sir_ude, make_target_view, predict, FitConfig,
    ModelKind, TargetView, TrainedModel,
};
use crate::rng::{derive_seed, Purpose, StreamKey};
use crate::sim::{simulate_outbreak, OutbreakDataset, Scenario, SimulationSpec, SirParams};
use crate::sindy::{
    build_library, collect_dnn_io, sparse_regression, substitute_and_simulate, Library, Method,
    SindyRegression,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SindyConfig {
    pub enabled: bool,
    pub library: Library,
    pub method: Method,
    /// Sparsity threshold in units of the raw network output.
    pub lambda: f64,
}

impl Default for SindyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            library: Library::LinearBias,
            method: Method::Stlsq,
            lambda: 1e-3,
        }
    }
}

/// Identifies one fit in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId {
    pub scenario: Scenario,
    pub init: usize,
    pub region: usize,
    pub kind: ModelKind,
}

impl JobId {
    pub fn seed(&self, master: u64) -> u64 {
        derive_seed(
            master,
            StreamKey::new(Purpose::ModelInit)
                .scenario(self.scenario.index())
                .init(self.init as u16)
                .region(self.region as u16)
                .model(self.kind.index()),
        )
    }

    /// File stem such as `no_recovered_init00_region01_sir_ude`.
    pub fn stem(&self) -> String {
        format!(
            "{}_init{:02}_region{:02}_{}",
            self.scenario.slug(),
            self.init,
            self.region + 1,
            self.kind.file_stem()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n_regions: usize,
    /// Side length of the square domain.
    pub extent: f64,
    pub population_range: (f64, f64),
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Removes all mobility from the ground truth.
    pub decoupled: bool,
    pub n_initializations: usize,
    pub n_infected: usize,
    pub scenarios: Vec<Scenario>,
    pub days: usize,
    /// Last training day; the test window starts the day after.
    pub train_split: usize,
    pub dt_internal: f64,
    pub fit: FitConfig,
    pub sindy: SindyConfig,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    /// Jobs forced to fail, for exercising failure isolation.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fault_injection: Vec<JobId>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// Ten regions, twenty initializations, 500 days.
    pub fn paper() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            n_regions: 10,
            extent: 4.0,
            population_range: (1e3, 1e4),
            sigma: 2500.0,
            beta: 0.01,
            gamma: 0.05,
            decoupled: false,
            n_initializations: 20,
            n_infected: 10,
            scenarios: Scenario::ALL.to_vec(),
            days: 500,
            train_split: 250,
            dt_internal: 0.25,
            fit: FitConfig::default(),
            sindy: SindyConfig::default(),
            jobs: 0,
            fault_injection: Vec::new(),
        }
    }

    /// Three regions, five initializations, 200 days.
    pub fn desk() -> Self {
        Self {
            n_regions: 3,
            n_initializations: 5,
            days: 200,
            train_split: 100,
            beta: 0.06,
            gamma: 0.1,
            n_infected: 3,
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n_regions < 2 {
            return bad(format!("n_regions must be at least 2, got {}", self.n_regions));
        }
        if self.n_initializations == 0 || self.scenarios.is_empty() {
            return bad("need at least one initialization and one scenario".into());
        }
        if !(self.train_split >= 2 && self.train_split + 2 <= self.days) {
            return bad(format!(
                "train_split {} must satisfy 2 <= train_split <= days - 2 (days = {})",
                self.train_split, self.days
            ));
        }
        let (lo, hi) = self.population_range;
        if !(lo > 0.0 && hi >= lo && self.extent > 0.0 && self.sigma >= 0.0) {
            return bad("population range, extent and sigma must be positive".into());
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0) {
            return bad("beta and gamma must be nonnegative".into());
        }
        let f = &self.fit;
        let rates = [f.sir.lr, f.full_ude.lr, f.sir_ude.adam_lr, f.sir_ude.bfgs_lr, f.dt, f.output_scale];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return bad("learning rates, dt and output_scale must be positive".into());
        }
        if f.full_ude.hidden == 0 || f.sir_ude.hidden == 0 {
            return bad("hidden layers need at least one unit".into());
        }
        if !(self.sindy.lambda >= 0.0) {
            return bad("sindy.lambda must be nonnegative".into());
        }
        Ok(())
    }

    pub fn geography_seed(&self) -> u64 {
        derive_seed(self.seed, StreamKey::new(Purpose::Geography))
    }

    pub fn train_days(&self) -> (usize, usize) {
        (1, self.train_split)
    }

    pub fn test_days(&self) -> (usize, usize) {
        (self.train_split + 1, self.days)
    }

    /// Every (scenario, init, region, model) cell in canonical order.
    pub fn job_grid(&self) -> Vec<JobId> {
        let mut jobs = Vec::new();
        for &scenario in &self.scenarios {
            for init in 0..self.n_initializations {
                for region in 0..self.n_regions {
                    for kind in ModelKind::TRAINED {
                        jobs.push(JobId {
                            scenario,
                            init,
                            region,
                            kind,
                        });
                    }
                }
            }
        }
        jobs
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub job: JobId,
    pub seed: u64,
    pub model: Option<TrainedModel<f64>>,
    /// Prediction from the observed state at the first test day.
    pub pred_test: Vec<[f64; 3]>,
    /// Prediction from day 1.
    pub pred_full: Vec<[f64; 3]>,
    pub scores: Option<Scores>,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn scored(&self) -> ScoredRun {
        ScoredRun {
            scenario: self.job.scenario,
            init: self.job.init,
            region: self.job.region,
            kind: self.job.kind,
            scores: self.scores,
        }
    }
}

pub fn fit_model(kind: ModelKind, view: &TargetView<f64>, cfg: &FitConfig, seed: u64) -> Result<TrainedModel<f64>> {
    match kind {
        ModelKind::SirFit => fit_sir(view, cfg, seed),
        ModelKind::FullUde => fit_full_ude(view, cfg, seed),
        ModelKind::SirUde => fit_sir_ude(view, cfg, seed),
        ModelKind::SirSindy => Err(Error::invalid(
            "sir+sindy models are derived from sir+ude fits, not trained directly",
        )),
    }
}

struct Evaluated {
    pred_test: Vec<[f64; 3]>,
    pred_full: Vec<[f64; 3]>,
    scores: Scores,
}

fn evaluate(model: &TrainedModel<f64>, view: &TargetView<f64>, test: (usize, usize)) -> Result<Evaluated> {
    let pred_test = predict(model, view, test)?;
    let pred_full = predict(model, view, (1, view.days))?;
    let scores = score(&view.target, &pred_test, &pred_full, view.target_pop, test.0)?;
    if !scores.is_finite() {
        return Err(Error::Prediction {
            model: model.id(),
            source: Box::new(Error::NonFinite { t: f64::NAN }),
        });
    }
    Ok(Evaluated {
        pred_test,
        pred_full,
        scores,
    })
}

fn run_job(cfg: &ExperimentConfig, data: &OutbreakDataset<f64>, job: JobId) -> RunRecord {
    let seed = job.seed(cfg.seed);
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(TrainedModel<f64>, Evaluated)> {
        let mut view = make_target_view(data, job.init, job.region, cfg.train_days())?;
        let model = fit_model(job.kind, &view, &cfg.fit, seed)?;
        if cfg.fault_injection.contains(&job) {
            view.target[cfg.train_split][0] = f64::NAN;
        }
        let ev = evaluate(&model, &view, cfg.test_days())?;
        Ok((model, ev))
    }));
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut record = RunRecord {
        job,
        seed,
        model: None,
        pred_test: Vec::new(),
        pred_full: Vec::new(),
        scores: None,
        wall_seconds,
        error: None,
    };
    match outcome {
        Ok(Ok((model, ev))) => {
            record.model = Some(model);
            record.pred_test = ev.pred_test;
            record.pred_full = ev.pred_full;
            record.scores = Some(ev.scores);
        }
        Ok(Err(e)) => record.error = Some(e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            record.error = Some(format!("job panicked: {msg}"));
        }
    }
    match &record.error {
        Some(e) => warn!("{} failed after {wall_seconds:.1}s: {e}", job.stem()),
        None => info!("{} done in {wall_seconds:.1}s", job.stem()),
    }
    record
}

/// Simulates the ground truth of one scenario.
pub fn simulate_scenario(
    cfg: &ExperimentConfig,
    geo: &Geography<f64>,
    mobility: &MobilityMatrix<f64>,
    scenario: Scenario,
) -> Result<OutbreakDataset<f64>> {
    let spec = SimulationSpec {
        params: SirParams::new(cfg.beta, cfg.gamma)?,
        n_init: cfg.n_initializations,
        days: cfg.days,
        n_infected: cfg.n_infected,
        dt_internal: cfg.dt_internal,
        master_seed: cfg.seed,
        geography_seed: cfg.geography_seed(),
    };
    simulate_outbreak(geo, mobility, scenario, &spec)
}

pub fn build_geography(cfg: &ExperimentConfig) -> Result<(Geography<f64>, MobilityMatrix<f64>)> {
    let geo = sample_geography(cfg.n_regions, cfg.extent, cfg.population_range, cfg.geography_seed())?;
    let m = if cfg.decoupled {
        MobilityMatrix {
            sigma: cfg.sigma,
            ..MobilityMatrix::zeros(cfg.n_regions)
        }
    } else {
        mobility_matrix(&geo, cfg.sigma)?
    };
    Ok((geo, m))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub geography: Geography<f64>,
    pub mobility: MobilityMatrix<f64>,
    /// One dataset per configured scenario, in config order.
    pub datasets: Vec<OutbreakDataset<f64>>,
    /// Canonical job-grid order.
    pub records: Vec<RunRecord>,
    pub report: EvalReport,
    pub sindy: Option<SindyStage>,
}

impl ExperimentOutput {
    pub fn dataset(&self, scenario: Scenario) -> Option<&OutbreakDataset<f64>> {
        self.datasets.iter().find(|d| d.provenance.scenario == scenario)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

/// Runs the whole grid. Individual job failures are recorded, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = cfg.pool()?;
    pool.install(|| {
        let (geography, mobility) = build_geography(cfg)?;
        let datasets = cfg
            .scenarios
            .iter()
            .map(|&s| simulate_scenario(cfg, &geography, &mobility, s))
            .collect::<Result<Vec<_>>>()?;
        let grid = cfg.job_grid();
        info!("running {} fits on {} threads", grid.len(), rayon::current_num_threads());
        let records: Vec<RunRecord> = grid
            .par_iter()
            .map(|&job| {
                let k = cfg.scenarios.iter().position(|&s| s == job.scenario).expect("scenario in grid");
                run_job(cfg, &datasets[k], job)
            })
            .collect();
        let scored: Vec<ScoredRun> = records.iter().map(RunRecord::scored).collect();
        let report = aggregate_report(&scored);
        let sindy = if cfg.sindy.enabled {
            Some(run_sindy_stage(&records, &datasets, cfg))
        } else {
            None
        };
        Ok(ExperimentOutput {
            config: cfg.clone(),
            geography,
            mobility,
            datasets,
            records,
            report,
            sindy,
        })
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSindy {
    pub region: usize,
    pub regression: Option<SindyRegression<f64>>,
    pub model: Option<TrainedModel<f64>>,
    pub pred_test: Vec<[f64; 3]>,
    pub pred_full: Vec<[f64; 3]>,
    pub ude_scores: Option<Scores>,
    pub sindy_scores: Option<Scores>,
    pub clamps: usize,
    pub error: Option<String>,
}

/// One row of the substitution comparison: medians over regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: Scenario,
    pub metric: Metric,
    pub window: Window,
    pub sir_ude: Option<f64>,
    pub sir_sindy: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSindy {
    pub scenario: Scenario,
    /// Initialization with the lowest summed full-window MAE, if any.
    pub selected_init: Option<usize>,
    pub regions: Vec<RegionSindy>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SindyStage {
    pub scenarios: Vec<ScenarioSindy>,
    pub comparison: Vec<ComparisonRow>,
}

/// Picks the initialization whose SIR+UDE fits succeeded in every region
/// and have the lowest summed full-window MAE. Ties go to the lower index.
pub fn select_initialization(records: &[RunRecord], scenario: Scenario, n_regions: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    let mut inits: Vec<usize> = records
        .iter()
        .filter(|r| r.job.scenario == scenario && r.job.kind == ModelKind::SirUde)
        .map(|r| r.job.init)
        .collect();
    inits.sort_unstable();
    inits.dedup();
    for init in inits {
        let scores: Vec<f64> = records
            .iter()
            .filter(|r| r.job.scenario == scenario && r.job.kind == ModelKind::SirUde && r.job.init == init)
            .filter_map(|r| r.scores.map(|s| s.full_mae))
            .collect();
        if scores.len() != n_regions {
            continue;
        }
        let total: f64 = scores.iter().sum();
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, init));
        }
    }
    best.map(|(_, init)| init)
}

fn channel_names(view: &TargetView<f64>) -> Vec<String> {
    view.neighbors
        .iter()
        .flat_map(|&r| ["S", "I", "R"].map(|c| format!("r{}_{c}", r + 1)))
        .collect()
}

fn sindy_region(
    cfg: &ExperimentConfig,
    data: &OutbreakDataset<f64>,
    record: &RunRecord,
) -> Result<RegionSindy> {
    let model = record
        .model
        .as_ref()
        .ok_or_else(|| Error::invalid("selected SIR+UDE record has no model"))?;
    let view = make_target_view(data, record.job.init, record.job.region, cfg.train_days())?;
    let mut out = distill(cfg, &view, model)?;
    out.ude_scores = record.scores;
    Ok(out)
}

/// Regresses the coupling network of one SIR+UDE model on its inputs and
/// scores the substituted model. `ude_scores` is left empty.
pub fn distill(cfg: &ExperimentConfig, view: &TargetView<f64>, model: &TrainedModel<f64>) -> Result<RegionSindy> {
    model.expect_kind(ModelKind::SirUde)?;
    let (x, y) = collect_dnn_io(model, view, (1, view.days))?;
    let theta = build_library(&x, view.neighbor_channels(), cfg.sindy.library)?;
    let mut reg = sparse_regression(&theta, &y, cfg.sindy.lambda, cfg.sindy.method)?;
    reg.label_channels(&channel_names(view))?;
    let test = (cfg.train_split + 1, view.days);
    let sub_test = substitute_and_simulate(model, &reg, view, test)?;
    let sub_full = substitute_and_simulate(model, &reg, view, (1, view.days))?;
    let scores = score(
        &view.target,
        &sub_test.trajectory,
        &sub_full.trajectory,
        view.target_pop,
        test.0,
    )?;
    let mut sindy_model = sub_full.model;
    for d in &sub_test.model.diagnostics {
        if !sindy_model.diagnostics.contains(d) {
            sindy_model.diagnostics.push(d.clone());
        }
    }
    Ok(RegionSindy {
        region: view.region,
        regression: Some(reg),
        model: Some(sindy_model),
        pred_test: sub_test.trajectory,
        pred_full: sub_full.trajectory,
        ude_scores: None,
        sindy_scores: Some(scores),
        clamps: sub_test.clamps + sub_full.clamps,
        error: None,
    })
}

/// Distills the selected SIR+UDE networks into sparse regressions and
/// compares the substituted models with the originals.
pub fn run_sindy_stage(records: &[RunRecord], datasets: &[OutbreakDataset<f64>], cfg: &ExperimentConfig) -> SindyStage {
    let mut scenarios = Vec::new();
    let mut comparison = Vec::new();
    for data in datasets {
        let scenario = data.provenance.scenario;
        let mut out = ScenarioSindy {
            scenario,
            selected_init: None,
            regions: Vec::new(),
            diagnostics: Vec::new(),
        };
        let Some(init) = select_initialization(records, scenario, cfg.n_regions) else {
            out.diagnostics.push(format!(
                "skipped: no initialization has successful sir+ude fits in all regions for {}",
                scenario.slug()
            ));
            scenarios.push(out);
            continue;
        };
        out.selected_init = Some(init);
        let selected: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.job.scenario == scenario && r.job.kind == ModelKind::SirUde && r.job.init == init)
            .collect();
        out.regions = selected
            .par_iter()
            .map(|rec| {
                sindy_region(cfg, data, rec).unwrap_or_else(|e| RegionSindy {
                    region: rec.job.region,
                    regression: None,
                    model: None,
                    pred_test: Vec::new(),
                    pred_full: Vec::new(),
                    ude_scores: rec.scores,
                    sindy_scores: None,
                    clamps: 0,
                    error: Some(e.to_string()),
                })
            })
            .collect();
        for metric in Metric::ALL {
            for window in Window::ALL {
                let collect = |f: fn(&RegionSindy) -> Option<Scores>| -> Option<f64> {
                    let vals: Vec<f64> = out
                        .regions
                        .iter()
                        .filter_map(|r| f(r).map(|s| s.get(window, metric)))
                        .filter(|v| v.is_finite())
                        .collect();
                    median(&vals)
                };
                comparison.push(ComparisonRow {
                    scenario,
                    metric,
                    window,
                    sir_ude: collect(|r| r.ude_scores),
                    sir_sindy: collect(|r| r.sindy_scores),
                });
            }
        }
        scenarios.push(out);
    }
    SindyStage {
        scenarios,
        comparison,
    }
}

/// Mean learned coupling of a SIR+UDE model relative to the peak infection
/// flow `beta S I / N` of its own observed target trajectory.
pub fn coupling_to_peak_flow(model: &TrainedModel<f64>, view: &TargetView<f64>, beta: f64) -> Result<f64> {
    let g = coupling_series(model, view, (1, view.days))?;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let peak = view
        .target
        .iter()
        .map(|s| beta * s[0] * s[1] / view.target_pop)
        .fold(0.0, f64::max);
    Ok(mean / peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.n_regions = 2;
        cfg.n_initializations = 2;
        cfg.days = 30;
        cfg.train_split = 15;
        cfg.beta = 0.2;
        cfg.scenarios = vec![Scenario::NoRecovered];
        cfg.fit.sir.iterations = 20;
        cfg.fit.full_ude.iterations = 10;
        cfg.fit.full_ude.hidden = 4;
        cfg.fit.sir_ude.adam_iterations = 10;
        cfg.fit.sir_ude.bfgs_iterations = 5;
        cfg.fit.sir_ude.hidden = 4;
        cfg.jobs = 1;
        cfg
    }

    #[test]
    fn presets_validate() {
        ExperimentConfig::paper().validate().unwrap();
        ExperimentConfig::desk().validate().unwrap();
        let mut bad = ExperimentConfig::desk();
        bad.train_split = bad.days;
        assert!(bad.validate().is_err());
        bad = ExperimentConfig::desk();
        bad.fit.sir.lr = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn paper_grid_has_1200_cells() {
        assert_eq!(ExperimentConfig::paper().job_grid().len(), 1200);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::desk();
        let js = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&js).unwrap(), cfg);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"n_regions": 4}"#).unwrap();
        assert_eq!(partial.n_regions, 4);
        assert_eq!(partial.days, 500);
    }

    #[test]
    fn grid_is_exhaustive_and_isolates_failures() {
        let mut cfg = tiny();
        let poisoned = JobId {
            scenario: Scenario::NoRecovered,
            init: 1,
            region: 0,
            kind: ModelKind::SirFit,
        };
        cfg.fault_injection = vec![poisoned];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 3);
        assert_eq!(out.failures(), 1);
        let bad = out.records.iter().find(|r| r.failed()).unwrap();
        assert_eq!(bad.job, poisoned);
        assert!(bad.scores.is_none());
        for r in out.records.iter().filter(|r| !r.failed()) {
            assert!(r.scores.is_some());
            assert_eq!(r.pred_full.len(), 30);
            assert_eq!(r.pred_test.len(), 15);
        }
        let row = out.report.row(Scenario::NoRecovered, ModelKind::SirFit, Some(0)).unwrap();
        assert_eq!(row.test_mae.n_failed, 1);
        assert_eq!(row.test_mae.n_finite, 1);
    }

    #[test]
    fn selection_is_argmin_of_full_mae() {
        let cfg = tiny();
        let out = run_experiment(&cfg).unwrap();
        let stage = out.sindy.as_ref().unwrap();
        let sel = stage.scenarios[0].selected_init.unwrap();
        let total = |init: usize| -> f64 {
            out.records
                .iter()
                .filter(|r| r.job.kind == ModelKind::SirUde && r.job.init == init)
                .map(|r| r.scores.unwrap().full_mae)
                .sum()
        };
        assert!(total(sel) <= total(1 - sel));
        assert_eq!(stage.comparison.len(), 4);
        assert_eq!(stage.scenarios[0].regions.len(), 2);
    }

    #[test]
    fn single_initialization_is_selected() {
        let mut cfg = tiny();
        cfg.n_initializations = 1;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.sindy.unwrap().scenarios[0].selected_init, Some(0));
    }
}
