//! Error measures and their aggregation over initializations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::scalar::Real;
use crate::sim::Scenario;

/// Mean absolute error over all compartments and days.
pub fn mae<T: Real>(y: &[[T; 3]], y_hat: &[[T; 3]]) -> Result<T> {
    mae_flat(y.as_flattened(), y_hat.as_flattened())
}

/// [`mae`] over flat arrays of equal length.
pub fn mae_flat<T: Real>(y: &[T], y_hat: &[T]) -> Result<T> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("mean absolute error of an empty series"));
    }
    let total: T = y.iter().zip(y_hat).map(|(a, b)| (*a - *b).abs()).sum();
    Ok(total / T::from_usize_lossy(y.len()))
}

/// New infections per day as a percentage of `population`, measured as the
/// decrease in susceptibles. Returns one value per consecutive pair of days.
pub fn daily_incidence<T: Real>(traj: &[[T; 3]], population: T) -> Vec<T> {
    let hundred = T::lit(100.0);
    traj.windows(2)
        .map(|w| (w[0][0] - w[1][0]) / population * hundred)
        .collect()
}

/// Absolute incidence error: `sum_t |lambda_t - lambda_hat_t|`.
pub fn aie<T: Real>(lambda_obs: &[T], lambda_hat: &[T]) -> Result<T> {
    if lambda_obs.len() != lambda_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda_obs.len(),
            actual: lambda_hat.len(),
        });
    }
    Ok(lambda_obs
        .iter()
        .zip(lambda_hat)
        .map(|(a, b)| (*a - *b).abs())
        .sum())
}

/// Median; even-sized samples take the mean of the two central values.
/// Returns `None` for an empty slice.
pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of finite values"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Test,
    Full,
}

impl Window {
    pub const ALL: [Window; 2] = [Window::Test, Window::Full];

    pub fn slug(self) -> &'static str {
        match self {
            Window::Test => "test",
            Window::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Aie,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Mae, Metric::Aie];

    pub fn slug(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Aie => "aie",
        }
    }
}

/// Metric values of one evaluated prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub test_mae: f64,
    pub test_aie: f64,
    pub full_mae: f64,
    pub full_aie: f64,
}

impl Scores {
    pub fn get(&self, window: Window, metric: Metric) -> f64 {
        match (window, metric) {
            (Window::Test, Metric::Mae) => self.test_mae,
            (Window::Test, Metric::Aie) => self.test_aie,
            (Window::Full, Metric::Mae) => self.full_mae,
            (Window::Full, Metric::Aie) => self.full_aie,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.test_mae, self.test_aie, self.full_mae, self.full_aie]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Scores a model against observations. `pred_test` starts from the
/// observed state at `test_start` (1-based); `pred_full` covers every day.
pub fn score(
    observed: &[[f64; 3]],
    pred_test: &[[f64; 3]],
    pred_full: &[[f64; 3]],
    population: f64,
    test_start: usize,
) -> Result<Scores> {
    if observed.len() != pred_full.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            actual: pred_full.len(),
        });
    }
    let obs_test = &observed[test_start - 1..];
    Ok(Scores {
        test_mae: mae(obs_test, pred_test)?,
        test_aie: aie(
            &daily_incidence(obs_test, population),
            &daily_incidence(pred_test, population),
        )?,
        full_mae: mae(observed, pred_full)?,
        full_aie: aie(
            &daily_incidence(observed, population),
            &daily_incidence(pred_full, population),
        )?,
    })
}

/// One evaluated (scenario, init, region, model) cell; `scores` is `None`
/// for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub scenario: Scenario,
    pub init: usize,
    pub region: usize,
    pub kind: ModelKind,
    pub scores: Option<Scores>,
}

/// Median over initializations of one metric in one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `None` when no finite value was available.
    pub median: Option<f64>,
    pub n_finite: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scenario: Scenario,
    pub kind: ModelKind,
    /// `None` for the pooled row.
    pub region: Option<usize>,
    pub test_mae: Cell,
    pub test_aie: Cell,
    pub full_mae: Cell,
    pub full_aie: Cell,
}

impl EvalRow {
    pub fn cell(&self, window: Window, metric: Metric) -> &Cell {
        match (window, metric) {
            (Window::Test, Metric::Mae) => &self.test_mae,
            (Window::Test, Metric::Aie) => &self.test_aie,
            (Window::Full, Metric::Mae) => &self.full_mae,
            (Window::Full, Metric::Aie) => &self.full_aie,
        }
    }

    pub fn region_label(&self) -> String {
        match self.region {
            Some(r) => (r + 1).to_string(),
            None => "All".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by scenario, model kind, then pooled row before regions.
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, scenario: Scenario, kind: ModelKind, region: Option<usize>) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.kind == kind && r.region == region)
    }

    /// Pooled median of one metric, if available.
    pub fn overall(&self, scenario: Scenario, kind: ModelKind, window: Window, metric: Metric) -> Option<f64> {
        self.row(scenario, kind, None)?.cell(window, metric).median
    }
}

fn make_cell(values: &[Option<f64>]) -> Cell {
    let finite: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    Cell {
        median: median(&finite),
        n_finite: finite.len(),
        n_failed: values.len() - finite.len(),
    }
}

/// Per-region and pooled medians. The result does not depend on the order
/// of `runs`.
pub fn aggregate_report(runs: &[ScoredRun]) -> EvalReport {
    let mut groups: BTreeMap<(Scenario, ModelKind, Option<usize>), Vec<Option<Scores>>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((run.scenario, run.kind, Some(run.region)))
            .or_default()
            .push(run.scores);
        groups
            .entry((run.scenario, run.kind, None))
            .or_default()
            .push(run.scores);
    }
    let rows = groups
        .into_iter()
        .map(|((scenario, kind, region), scores)| {
            let pick = |w: Window, m: Metric| -> Vec<Option<f64>> {
                scores.iter().map(|s| s.map(|s| s.get(w, m))).collect()
            };
            EvalRow {
                scenario,
                kind,
                region,
                test_mae: make_cell(&pick(Window::Test, Metric::Mae)),
                test_aie: make_cell(&pick(Window::Test, Metric::Aie)),
                full_mae: make_cell(&pick(Window::Full, Metric::Mae)),
                full_aie: make_cell(&pick(Window::Full, Metric::Aie)),
            }
        })
        .collect();
    EvalReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_cases() {
        let y = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mae_flat(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        let z = [[0.0, 2.5, 3.0], [4.0, 1.0, 9.0]];
        assert_eq!(mae(&y, &z).unwrap(), mae(&z, &y).unwrap());
        assert!(mae_flat(&[0.0], &[0.0, 1.0]).is_err());
        assert!(mae_flat::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn incidence_cases() {
        let flat = [[50.0, 0.0, 50.0]; 4];
        assert_eq!(daily_incidence(&flat, 100.0), vec![0.0; 3]);
        let drop = [[100.0, 0.0, 0.0], [95.0, 5.0, 0.0]];
        assert_eq!(daily_incidence(&drop, 100.0), vec![5.0]);
        let wave = [[990.0, 10.0, 0.0], [900.0, 80.0, 20.0], [600.0, 200.0, 200.0], [550.0, 50.0, 400.0]];
        let total: f64 = daily_incidence(&wave, 1000.0).iter().sum();
        assert!((total - 44.0).abs() < 1e-12);
    }

    #[test]
    fn aie_cases() {
        assert_eq!(aie(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(aie(&[5.0], &[3.0]).unwrap(), 2.0);
        let a = [0.5, 1.5, 2.0];
        let b = [1.0, 1.0, 4.0];
        let c: f64 = 3.0;
        let scaled = aie(&a.map(|x| c * x), &b.map(|x| c * x)).unwrap();
        assert!((scaled - c * aie(&a, &b).unwrap()).abs() < 1e-12);
        assert!(aie(&[1.0], &[]).is_err());
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[7.0]), Some(7.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }

    fn run(init: usize, region: usize, v: Option<f64>) -> ScoredRun {
        ScoredRun {
            scenario: Scenario::NoRecovered,
            init,
            region,
            kind: ModelKind::SirFit,
            scores: v.map(|x| Scores {
                test_mae: x,
                test_aie: 2.0 * x,
                full_mae: x,
                full_aie: x,
            }),
        }
    }

    #[test]
    fn report_medians_and_missing_cells() {
        let runs = vec![
            run(0, 0, Some(1.0)),
            run(1, 0, Some(3.0)),
            run(0, 1, Some(10.0)),
            run(1, 1, None),
            run(0, 2, Some(f64::NAN)),
        ];
        let rep = aggregate_report(&runs);
        let r0 = rep.row(Scenario::NoRecovered, ModelKind::SirFit, Some(0)).unwrap();
        assert_eq!(r0.test_mae.median, Some(2.0));
        assert_eq!(r0.test_aie.median, Some(4.0));
        let r1 = rep.row(Scenario::NoRecovered, ModelKind::SirFit, Some(1)).unwrap();
        assert_eq!((r1.test_mae.n_finite, r1.test_mae.n_failed), (1, 1));
        let r2 = rep.row(Scenario::NoRecovered, ModelKind::SirFit, Some(2)).unwrap();
        assert_eq!(r2.test_mae.median, None);
        let all = rep.row(Scenario::NoRecovered, ModelKind::SirFit, None).unwrap();
        assert_eq!(all.test_mae.median, Some(3.0));
        assert_eq!(all.region_label(), "All");

        let mut shuffled = runs.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(aggregate_report(&shuffled), rep);
    }

    #[test]
    fn score_windows() {
        let obs = [[100.0, 0.0, 0.0], [95.0, 5.0, 0.0], [90.0, 8.0, 2.0], [88.0, 8.0, 4.0]];
        let full = [[100.0, 0.0, 0.0], [97.0, 3.0, 0.0], [90.0, 8.0, 2.0], [89.0, 7.0, 4.0]];
        let test = [[90.0, 8.0, 2.0], [87.0, 9.0, 4.0]];
        let s = score(&obs, &test, &full, 100.0, 3).unwrap();
        assert!((s.test_mae - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.test_aie, 1.0);
        assert!((s.full_mae - 6.0 / 12.0).abs() < 1e-15);
        // incidence 5, 5, 2 against 3, 7, 1
        assert!((s.full_aie - 5.0).abs() < 1e-12);
        assert!(score(&obs, &test, &full[..3], 100.0, 3).is_err());
    }
}
