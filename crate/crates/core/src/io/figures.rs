//! Figure sets drawn from a finished run directory.

use super::plot::{bar_plot, cumulative_plot, trajectory_plot, PlotSpec};
use super::run::LoadedRun;
use crate::error::{Error, Result};
use crate::experiment::JobId;
use crate::metrics::{Metric, Window};
use crate::models::ModelKind;

const COMPARTMENTS: [&str; 3] = ["S", "I", "R"];

/// One named figure; the stem becomes the SVG/CSV file name.
pub type Figure = (String, PlotSpec);

fn day_axis(days: usize) -> Vec<f64> {
    (1..=days).map(|d| d as f64).collect()
}

/// Totals over all regions per compartment, median and min-max band over
/// initializations. Initializations with any failed region are left out
/// of that model's band.
pub fn cumulative_figures(run: &LoadedRun) -> Result<Vec<Figure>> {
    let cfg = &run.config;
    let mut figures = Vec::new();
    for &scenario in &cfg.scenarios {
        let data = run
            .dataset(scenario)
            .ok_or_else(|| Error::invalid(format!("run has no {} dataset", scenario.slug())))?;
        // totals[group][comp] = runs over inits
        let mut groups: Vec<(String, [Vec<Vec<f64>>; 3])> = Vec::new();
        let mut observed: [Vec<Vec<f64>>; 3] = Default::default();
        for init in 0..cfg.n_initializations {
            for (c, runs) in observed.iter_mut().enumerate() {
                let mut total = vec![0.0; cfg.days];
                for region in 0..cfg.n_regions {
                    for (t, v) in total.iter_mut().zip(data.series(init, region, c)) {
                        *t += v;
                    }
                }
                runs.push(total);
            }
        }
        groups.push(("observed".to_string(), observed));
        for kind in ModelKind::TRAINED {
            let mut per_comp: [Vec<Vec<f64>>; 3] = Default::default();
            for init in 0..cfg.n_initializations {
                let mut totals = vec![vec![0.0; cfg.days]; 3];
                let mut complete = true;
                for region in 0..cfg.n_regions {
                    let job = JobId {
                        scenario,
                        init,
                        region,
                        kind,
                    };
                    if !run.jobs.iter().any(|j| j.job == job && j.has_predictions) {
                        complete = false;
                        break;
                    }
                    let (_, full) = run.predictions(&job)?;
                    for (d, row) in full.iter().enumerate() {
                        for c in 0..3 {
                            totals[c][d] += row[c];
                        }
                    }
                }
                if complete {
                    for (c, t) in totals.into_iter().enumerate() {
                        per_comp[c].push(t);
                    }
                }
            }
            groups.push((kind.slug().to_string(), per_comp));
        }
        for (c, name) in COMPARTMENTS.iter().enumerate() {
            let series: Vec<(String, Vec<Vec<f64>>)> = groups
                .iter()
                .map(|(label, runs)| (label.clone(), runs[c].clone()))
                .collect();
            let spec = cumulative_plot(
                &format!("{} all regions {name}", scenario.slug()),
                &format!("{name} (people)"),
                day_axis(cfg.days),
                &series,
            );
            figures.push((format!("cumulative_{}_{name}", scenario.slug()), spec));
        }
    }
    Ok(figures)
}

/// Test-window MAE and AIE per region and pooled, one bar per model.
pub fn bar_figures(run: &LoadedRun) -> Result<Vec<Figure>> {
    let cfg = &run.config;
    let mut figures = Vec::new();
    let mut categories = vec!["All".to_string()];
    categories.extend((1..=cfg.n_regions).map(|r| r.to_string()));
    for &scenario in &cfg.scenarios {
        for metric in Metric::ALL {
            let groups: Vec<(String, Vec<Vec<f64>>)> = ModelKind::TRAINED
                .iter()
                .map(|&kind| {
                    let mut cats = vec![Vec::new(); cfg.n_regions + 1];
                    for j in &run.jobs {
                        if j.job.scenario != scenario || j.job.kind != kind {
                            continue;
                        }
                        if let Some(s) = j.scores {
                            let v = s.get(Window::Test, metric);
                            cats[0].push(v);
                            cats[j.job.region + 1].push(v);
                        }
                    }
                    (kind.slug().to_string(), cats)
                })
                .collect();
            let spec = bar_plot(
                &format!("{} test {}", scenario.slug(), metric.slug()),
                &metric.slug().to_uppercase(),
                categories.clone(),
                &groups,
            );
            figures.push((format!("bar_{}_test_{}", scenario.slug(), metric.slug()), spec));
        }
    }
    Ok(figures)
}

/// Observed and predicted trajectories of one (init, region) cell per
/// scenario and compartment.
pub fn trajectory_figures(run: &LoadedRun, init: usize, region: usize) -> Result<Vec<Figure>> {
    let cfg = &run.config;
    if init >= cfg.n_initializations || region >= cfg.n_regions {
        return Err(Error::invalid(format!(
            "init {init} / region {} outside the run ({} inits, {} regions)",
            region + 1,
            cfg.n_initializations,
            cfg.n_regions
        )));
    }
    let mut figures = Vec::new();
    for &scenario in &cfg.scenarios {
        let data = run
            .dataset(scenario)
            .ok_or_else(|| Error::invalid(format!("run has no {} dataset", scenario.slug())))?;
        let mut preds = Vec::new();
        for kind in ModelKind::TRAINED.into_iter().chain([ModelKind::SirSindy]) {
            let job = JobId {
                scenario,
                init,
                region,
                kind,
            };
            if run.dir.prediction(&job, "full").exists() {
                preds.push((kind, run.predictions(&job)?.1));
            }
        }
        for (c, name) in COMPARTMENTS.iter().enumerate() {
            let mut lines = vec![("observed".to_string(), data.series(init, region, c).to_vec())];
            for (kind, full) in &preds {
                lines.push((kind.slug().to_string(), full.iter().map(|r| r[c]).collect()));
            }
            let spec = trajectory_plot(
                &format!("{} init {init} region {} {name}", scenario.slug(), region + 1),
                &format!("{name} (people)"),
                day_axis(cfg.days),
                lines,
            );
            figures.push((
                format!("trajectory_{}_init{init:02}_region{:02}_{name}", scenario.slug(), region + 1),
                spec,
            ));
        }
    }
    Ok(figures)
}
