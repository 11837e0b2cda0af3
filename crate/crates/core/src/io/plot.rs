//! Dependency-free SVG line and bar charts with companion CSV files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_text;
use crate::error::{Error, Result};
use crate::metrics::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Cumulative,
    Bar,
    Trajectory,
}

impl PlotKind {
    pub fn slug(self) -> &'static str {
        match self {
            PlotKind::Cumulative => "cumulative",
            PlotKind::Bar => "bar",
            PlotKind::Trajectory => "trajectory",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        [PlotKind::Cumulative, PlotKind::Bar, PlotKind::Trajectory]
            .into_iter()
            .find(|k| k.slug() == s)
    }
}

/// Pointwise envelope around a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Shared x grid; for bar charts, category positions `0..n`.
    pub x: Vec<f64>,
    /// Category names (bar charts only).
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 6] = ["#222222", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn check_text(s: &str, what: &str) -> Result<()> {
    if s.contains([',', '\n', '\r']) {
        return Err(Error::invalid(format!("{what} {s:?} may not contain commas or newlines")));
    }
    Ok(())
}

impl PlotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() || self.x.is_empty() {
            return Err(Error::invalid("plot needs at least one series and one x value"));
        }
        if self.kind == PlotKind::Bar && self.categories.len() != self.x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                actual: self.categories.len(),
            });
        }
        for text in [&self.title, &self.x_label, &self.y_label] {
            check_text(text, "text")?;
        }
        for c in &self.categories {
            check_text(c, "category")?;
        }
        for s in &self.series {
            check_text(&s.label, "series label")?;
            if s.values.len() != self.x.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.x.len(),
                    actual: s.values.len(),
                });
            }
            if let Some(b) = &s.band {
                if b.lo.len() != self.x.len() || b.hi.len() != self.x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.x.len(),
                        actual: b.lo.len().min(b.hi.len()),
                    });
                }
                let ordered = (0..self.x.len()).all(|k| b.lo[k] <= s.values[k] && s.values[k] <= b.hi[k]);
                if !ordered {
                    return Err(Error::invalid(format!(
                        "band of {:?} does not enclose its series",
                        s.label
                    )));
                }
            }
        }
        if self
            .x
            .iter()
            .chain(self.series.iter().flat_map(|s| s.values.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("plot data must be finite"));
        }
        Ok(())
    }

    fn y_extent(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.series {
            let band = s.band.iter().flat_map(|b| b.lo.iter().chain(&b.hi));
            for &v in s.values.iter().chain(band) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if self.kind == PlotKind::Bar || lo >= 0.0 {
            lo = lo.min(0.0);
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        (lo, hi + 0.05 * (hi - lo))
    }

    fn x_extent(&self) -> (f64, f64) {
        if self.kind == PlotKind::Bar {
            return (-0.5, self.x.len() as f64 - 0.5);
        }
        let lo = self.x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    }
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e6).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Renders a self-contained SVG document.
pub fn render_svg(spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    let (x0, x1) = spec.x_extent();
    let (y0, y1) = spec.y_extent();
    let f = Frame { x0, x1, y0, y1 };
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        esc(&spec.title)
    );
    // axes
    let (ax0, ax1, ay0, ay1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        w,
        r##"<path d="M{ax0:.2},{ay1:.2} L{ax0:.2},{ay0:.2} L{ax1:.2},{ay0:.2}" fill="none" stroke="#000000"/>"##
    );
    for t in ticks(y0, y1) {
        let y = f.py(t);
        let _ = writeln!(
            w,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{ax1:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            ax0,
            ax0 - 6.0,
            y + 4.0,
            tick_label(t)
        );
    }
    if spec.kind == PlotKind::Bar {
        for (k, c) in spec.categories.iter().enumerate() {
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                f.px(k as f64),
                ay0 + 18.0,
                esc(c)
            );
        }
    } else {
        for t in ticks(x0, x1) {
            let x = f.px(t);
            let _ = writeln!(
                w,
                r##"<line x1="{x:.2}" y1="{ay0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                ay0 + 5.0,
                ay0 + 18.0,
                tick_label(t)
            );
        }
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (ax0 + ax1) / 2.0,
        HEIGHT - 18.0,
        esc(&spec.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (ay0 + ay1) / 2.0,
        (ay0 + ay1) / 2.0,
        esc(&spec.y_label)
    );

    let n = spec.series.len() as f64;
    for (k, series) in spec.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        match spec.kind {
            PlotKind::Bar => {
                let group = 0.8 / n;
                for (c, &v) in series.values.iter().enumerate() {
                    let left = c as f64 - 0.4 + group * k as f64;
                    let (xa, xb) = (f.px(left), f.px(left + group));
                    let (ya, yb) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
                    let _ = writeln!(
                        w,
                        r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.8"/>"#,
                        xb - xa,
                        yb - ya
                    );
                    if let Some(b) = &series.band {
                        let xm = (xa + xb) / 2.0;
                        let _ = writeln!(
                            w,
                            r##"<line x1="{xm:.2}" y1="{:.2}" x2="{xm:.2}" y2="{:.2}" stroke="#000000"/>"##,
                            f.py(b.lo[c]),
                            f.py(b.hi[c])
                        );
                    }
                }
            }
            _ => {
                if let Some(b) = &series.band {
                    let mut pts = String::new();
                    for (x, y) in spec.x.iter().zip(&b.hi) {
                        let _ = write!(pts, "{:.2},{:.2} ", f.px(*x), f.py(*y));
                    }
                    for (x, y) in spec.x.iter().zip(&b.lo).rev() {
                        let _ = write!(pts, "{:.2},{:.2} ", f.px(*x), f.py(*y));
                    }
                    let _ = writeln!(
                        w,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                        pts.trim_end()
                    );
                }
                let mut pts = String::new();
                for (x, y) in spec.x.iter().zip(&series.values) {
                    let _ = write!(pts, "{:.2},{:.2} ", f.px(*x), f.py(*y));
                }
                let _ = writeln!(
                    w,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.trim_end()
                );
            }
        }
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            w,
            r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            ly - 2.0,
            lx + 20.0,
            ly + 4.0,
            esc(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// The plotted numbers plus the metadata needed to redraw the figure.
pub fn plot_csv(spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "# kind={}", spec.kind.slug());
    let _ = writeln!(out, "# title={}", spec.title);
    let _ = writeln!(out, "# x_label={}", spec.x_label);
    let _ = writeln!(out, "# y_label={}", spec.y_label);
    if spec.kind == PlotKind::Bar {
        let _ = writeln!(out, "# categories={}", spec.categories.join("|"));
    }
    out.push('x');
    for s in &spec.series {
        out.push(',');
        out.push_str(&s.label);
        if s.band.is_some() {
            let _ = write!(out, ",{0}:lo,{0}:hi", s.label);
        }
    }
    out.push('\n');
    for k in 0..spec.x.len() {
        out.push_str(&spec.x[k].to_string());
        for s in &spec.series {
            let _ = write!(out, ",{}", s.values[k]);
            if let Some(b) = &s.band {
                let _ = write!(out, ",{},{}", b.lo[k], b.hi[k]);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Inverse of [`plot_csv`].
pub fn plot_from_csv(text: &str) -> Result<PlotSpec> {
    let bad = |msg: String| Error::invalid(format!("plot csv: {msg}"));
    let mut meta = std::collections::BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next_if(|l| l.starts_with("# ")) {
        let (k, v) = line[2..]
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed metadata line {line:?}")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("missing {k}")));
    let kind = PlotKind::from_slug(&get("kind")?).ok_or_else(|| bad("unknown kind".into()))?;
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').collect();
    if header.first() != Some(&"x") {
        return Err(bad("first column must be x".into()));
    }
    // (label, value column, band columns)
    let mut layout: Vec<(String, usize, Option<usize>)> = Vec::new();
    let mut c = 1;
    while c < header.len() {
        let label = header[c].to_string();
        let banded = header.get(c + 1) == Some(&format!("{label}:lo").as_str());
        layout.push((label, c, banded.then_some(c + 1)));
        c += if banded { 3 } else { 1 };
    }
    let mut x = Vec::new();
    let mut series: Vec<Series> = layout
        .iter()
        .map(|(label, _, band)| Series {
            label: label.clone(),
            values: Vec::new(),
            band: band.map(|_| Band {
                lo: Vec::new(),
                hi: Vec::new(),
            }),
        })
        .collect();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(bad(format!("row {line:?} has {} fields", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| bad(format!("bad number {:?}", fields[k])))
        };
        x.push(num(0)?);
        for (s, (_, vc, bc)) in series.iter_mut().zip(&layout) {
            s.values.push(num(*vc)?);
            if let (Some(b), Some(bc)) = (s.band.as_mut(), bc) {
                b.lo.push(num(*bc)?);
                b.hi.push(num(bc + 1)?);
            }
        }
    }
    let categories = if kind == PlotKind::Bar {
        get("categories")?.split('|').map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let spec = PlotSpec {
        kind,
        title: get("title")?,
        x_label: get("x_label")?,
        y_label: get("y_label")?,
        x,
        categories,
        series,
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes `{stem}.svg` and `{stem}.csv` into `dir`.
pub fn write_plot(dir: &Path, stem: &str, spec: &PlotSpec) -> Result<()> {
    write_text(&dir.join(format!("{stem}.svg")), &render_svg(spec)?)?;
    write_text(&dir.join(format!("{stem}.csv")), &plot_csv(spec)?)
}

/// Median line with a min-max band over `runs` (each as long as `x`).
fn median_band(label: &str, runs: &[Vec<f64>], len: usize) -> Series {
    let mut values = Vec::with_capacity(len);
    let mut lo = Vec::with_capacity(len);
    let mut hi = Vec::with_capacity(len);
    for k in 0..len {
        let col: Vec<f64> = runs.iter().map(|r| r[k]).collect();
        values.push(median(&col).unwrap_or(0.0));
        lo.push(col.iter().copied().fold(f64::INFINITY, f64::min));
        hi.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Series {
        label: label.to_string(),
        values,
        band: Some(Band { lo, hi }),
    }
}

/// Line chart of medians over initializations with min-max bands. Groups
/// with no runs are left out.
pub fn cumulative_plot(title: &str, y_label: &str, x: Vec<f64>, groups: &[(String, Vec<Vec<f64>>)]) -> PlotSpec {
    let series = groups
        .iter()
        .filter(|(_, runs)| !runs.is_empty())
        .map(|(label, runs)| median_band(label, runs, x.len()))
        .collect();
    PlotSpec {
        kind: PlotKind::Cumulative,
        title: title.to_string(),
        x_label: "day".to_string(),
        y_label: y_label.to_string(),
        x,
        categories: Vec::new(),
        series,
    }
}

/// Grouped bars of medians with min-max whiskers. `groups[k].1[c]` holds
/// the values of series `k` in category `c`.
pub fn bar_plot(title: &str, y_label: &str, categories: Vec<String>, groups: &[(String, Vec<Vec<f64>>)]) -> PlotSpec {
    let n = categories.len();
    let series = groups
        .iter()
        .map(|(label, cats)| {
            let mut values = Vec::with_capacity(n);
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            for c in 0..n {
                let v = &cats[c];
                let m = median(v).unwrap_or(0.0);
                values.push(m);
                lo.push(v.iter().copied().fold(m, f64::min));
                hi.push(v.iter().copied().fold(m, f64::max));
            }
            Series {
                label: label.clone(),
                values,
                band: Some(Band { lo, hi }),
            }
        })
        .collect();
    PlotSpec {
        kind: PlotKind::Bar,
        title: title.to_string(),
        x_label: String::new(),
        y_label: y_label.to_string(),
        x: (0..n).map(|c| c as f64).collect(),
        categories,
        series,
    }
}

/// Plain overlay of trajectories on a common day grid.
pub fn trajectory_plot(title: &str, y_label: &str, x: Vec<f64>, lines: Vec<(String, Vec<f64>)>) -> PlotSpec {
    PlotSpec {
        kind: PlotKind::Trajectory,
        title: title.to_string(),
        x_label: "day".to_string(),
        y_label: y_label.to_string(),
        x,
        categories: Vec::new(),
        series: lines
            .into_iter()
            .map(|(label, values)| Series {
                label,
                values,
                band: None,
            })
            .collect(),
    }
}
