//! On-disk formats: datasets, models, reports, figures and run directories.

mod dataset;
mod figures;
mod plot;
mod report;
mod run;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use dataset::{read_dataset, read_trajectory_csv, trajectory_csv, write_dataset, DatasetSidecar};
pub use figures::{bar_figures, cumulative_figures, trajectory_figures, Figure};
pub use plot::{
    bar_plot, cumulative_plot, plot_csv, plot_from_csv, render_svg, trajectory_plot, write_plot, Band,
    PlotKind, PlotSpec, Series,
};
pub use report::{comparison_csv, report_csv};
pub use run::{load_run, write_run, GeographyFile, JobSummary, LoadedRun, RunDir};

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// Full-precision decimal: 17 significant digits, exact on re-parse.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}
