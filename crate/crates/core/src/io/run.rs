use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{comparison_csv, read_dataset, read_json, read_trajectory_csv, report_csv, trajectory_csv};
use super::{write_dataset, write_json, write_text};
use crate::error::{Error, Result};
use crate::experiment::{ComparisonRow, ExperimentConfig, ExperimentOutput, JobId};
use crate::geography::{Geography, MobilityMatrix};
use crate::metrics::{EvalReport, Scores};
use crate::models::{ModelKind, TrainedModel};
use crate::sim::{OutbreakDataset, Scenario};

/// Layout of a run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn geography(&self) -> PathBuf {
        self.root.join("geography.json")
    }

    pub fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn dataset(&self, scenario: Scenario) -> PathBuf {
        self.datasets().join(format!("{}.json", scenario.slug()))
    }

    pub fn model(&self, job: &JobId) -> PathBuf {
        self.root.join("models").join(format!("{}.json", job.stem()))
    }

    pub fn prediction(&self, job: &JobId, window: &str) -> PathBuf {
        self.root.join("predictions").join(format!("{}_{window}.csv", job.stem()))
    }

    pub fn jobs(&self) -> PathBuf {
        self.root.join("jobs.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn sindy(&self, scenario: Scenario) -> PathBuf {
        self.root.join("sindy").join(format!("{}.json", scenario.slug()))
    }

    pub fn comparison(&self) -> PathBuf {
        self.root.join("sindy").join("comparison.csv")
    }

    pub fn comparison_json(&self) -> PathBuf {
        self.root.join("sindy").join("comparison.json")
    }

    pub fn log(&self) -> PathBuf {
        self.root.join("log.txt")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeographyFile {
    pub geography: Geography<f64>,
    pub mobility: MobilityMatrix<f64>,
}

/// Per-job index entry; timing is kept out so reruns compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub job: JobId,
    pub seed: u64,
    pub scores: Option<Scores>,
    pub error: Option<String>,
    pub has_model: bool,
    pub has_predictions: bool,
}

/// Writes every artifact of `out` below `root`.
pub fn write_run(root: &Path, out: &ExperimentOutput) -> Result<RunDir> {
    let dir = RunDir::new(root);
    write_json(&dir.config(), &out.config)?;
    write_json(
        &dir.geography(),
        &GeographyFile {
            geography: out.geography.clone(),
            mobility: out.mobility.clone(),
        },
    )?;
    for d in &out.datasets {
        write_dataset(&dir.datasets(), d.provenance.scenario.slug(), d)?;
    }

    let train_split = out.config.train_split;
    let mut log = String::new();
    let mut jobs = Vec::with_capacity(out.records.len());
    for r in &out.records {
        if let Some(m) = &r.model {
            write_json(&dir.model(&r.job), m)?;
        }
        let has_predictions = !r.pred_test.is_empty() && !r.pred_full.is_empty();
        if has_predictions {
            write_text(&dir.prediction(&r.job, "test"), &trajectory_csv(train_split + 1, &r.pred_test))?;
            write_text(&dir.prediction(&r.job, "full"), &trajectory_csv(1, &r.pred_full))?;
        }
        let _ = write!(log, "{} seed={} wall={:.2}s", r.job.stem(), r.seed, r.wall_seconds);
        if let Some(m) = &r.model {
            if let Some(l) = m.final_loss() {
                let _ = write!(log, " loss={l:.6e}");
            }
            for d in &m.diagnostics {
                let _ = write!(log, " [{d}]");
            }
        }
        if let Some(e) = &r.error {
            let _ = write!(log, " FAILED: {e}");
        }
        log.push('\n');
        jobs.push(JobSummary {
            job: r.job,
            seed: r.seed,
            scores: r.scores,
            error: r.error.clone(),
            has_model: r.model.is_some(),
            has_predictions,
        });
    }
    write_json(&dir.jobs(), &jobs)?;
    write_text(&dir.report_csv(), &report_csv(&out.report))?;
    write_json(&dir.report_json(), &out.report)?;

    if let Some(stage) = &out.sindy {
        for sc in &stage.scenarios {
            write_json(&dir.sindy(sc.scenario), sc)?;
            if let Some(init) = sc.selected_init {
                for reg in &sc.regions {
                    let job = JobId {
                        scenario: sc.scenario,
                        init,
                        region: reg.region,
                        kind: ModelKind::SirSindy,
                    };
                    if let Some(m) = &reg.model {
                        write_json(&dir.model(&job), m)?;
                    }
                    if !reg.pred_test.is_empty() {
                        write_text(&dir.prediction(&job, "test"), &trajectory_csv(train_split + 1, &reg.pred_test))?;
                        write_text(&dir.prediction(&job, "full"), &trajectory_csv(1, &reg.pred_full))?;
                    }
                    if let Some(e) = &reg.error {
                        let _ = writeln!(log, "{} FAILED: {e}", job.stem());
                    }
                }
            }
            for d in &sc.diagnostics {
                let _ = writeln!(log, "sindy {}: {d}", sc.scenario.slug());
            }
        }
        write_text(&dir.comparison(), &comparison_csv(&stage.comparison))?;
        write_json(&dir.comparison_json(), &stage.comparison)?;
    }
    let _ = writeln!(log, "failures: {}", out.failures());
    write_text(&dir.log(), &log)?;
    Ok(dir)
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: RunDir,
    pub config: ExperimentConfig,
    pub geography: GeographyFile,
    pub datasets: Vec<OutbreakDataset<f64>>,
    pub jobs: Vec<JobSummary>,
    pub report: EvalReport,
    pub comparison: Option<Vec<ComparisonRow>>,
}

impl LoadedRun {
    pub fn dataset(&self, scenario: Scenario) -> Option<&OutbreakDataset<f64>> {
        self.datasets.iter().find(|d| d.provenance.scenario == scenario)
    }

    pub fn model(&self, job: &JobId) -> Result<TrainedModel<f64>> {
        let m: TrainedModel<f64> = read_json(&self.dir.model(job))?;
        m.validate()?;
        Ok(m)
    }

    /// Returns `(test, full)` prediction trajectories.
    pub fn predictions(&self, job: &JobId) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
        let (_, test) = read_trajectory_csv(&self.dir.prediction(job, "test"))?;
        let (_, full) = read_trajectory_csv(&self.dir.prediction(job, "full"))?;
        Ok((test, full))
    }
}

pub fn load_run(root: &Path) -> Result<LoadedRun> {
    let dir = RunDir::new(root);
    if !dir.config().exists() {
        return Err(Error::invalid(format!("{} is not a run directory (no config.json)", root.display())));
    }
    let config: ExperimentConfig = read_json(&dir.config())?;
    config.validate()?;
    let geography: GeographyFile = read_json(&dir.geography())?;
    let datasets = config
        .scenarios
        .iter()
        .map(|&s| read_dataset(&dir.dataset(s)))
        .collect::<Result<Vec<_>>>()?;
    let jobs = read_json(&dir.jobs())?;
    let report = read_json(&dir.report_json())?;
    let comparison = if dir.comparison_json().exists() {
        Some(read_json(&dir.comparison_json())?)
    } else {
        None
    };
    Ok(LoadedRun {
        dir,
        config,
        geography,
        datasets,
        jobs,
        report,
        comparison,
    })
}
