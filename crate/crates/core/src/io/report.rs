use crate::experiment::ComparisonRow;
use crate::metrics::{EvalReport, Metric, Window};
use crate::models::ModelKind;
use crate::sim::Scenario;

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Wide table: one row per (window, metric, region) with the pooled `All`
/// row first, one column per (scenario, model). Missing cells read `NA`.
pub fn report_csv(report: &EvalReport) -> String {
    let mut scenarios: Vec<Scenario> = report.rows.iter().map(|r| r.scenario).collect();
    scenarios.sort();
    scenarios.dedup();
    let mut kinds: Vec<ModelKind> = report.rows.iter().map(|r| r.kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut regions: Vec<usize> = report.rows.iter().filter_map(|r| r.region).collect();
    regions.sort_unstable();
    regions.dedup();

    let mut out = String::from("window,metric,region");
    for s in &scenarios {
        for k in &kinds {
            out.push_str(&format!(",{}:{}", s.slug(), k.slug()));
        }
    }
    out.push('\n');
    let labels = std::iter::once(None).chain(regions.iter().map(|&r| Some(r)));
    let labels: Vec<Option<usize>> = labels.collect();
    for window in Window::ALL {
        for metric in Metric::ALL {
            for &region in &labels {
                let name = region.map_or("All".to_string(), |r| (r + 1).to_string());
                out.push_str(&format!("{},{},{name}", window.slug(), metric.slug()));
                for &s in &scenarios {
                    for &k in &kinds {
                        let v = report
                            .row(s, k, region)
                            .and_then(|row| row.cell(window, metric).median);
                        out.push(',');
                        out.push_str(&cell(v));
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

/// SIR+UDE against its substituted regression, one row per
/// (scenario, metric, window).
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("scenario,metric,window,sir+ude,sir+sindy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.scenario.slug(),
            r.metric.slug(),
            r.window.slug(),
            cell(r.sir_ude),
            cell(r.sir_sindy)
        ));
    }
    out
}
