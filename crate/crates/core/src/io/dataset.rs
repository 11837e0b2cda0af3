use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{fmt_full, read_json, read_text, write_json, write_text};
use crate::error::{Error, Result};
use crate::sim::{OutbreakDataset, Provenance};

const DATASET_HEADER: [&str; 5] = ["day", "region", "S", "I", "R"];
const TRAJECTORY_HEADER: [&str; 4] = ["day", "S", "I", "R"];

/// JSON file written next to the per-initialization CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub n_init: usize,
    pub n_regions: usize,
    pub days: usize,
    /// CSV file names relative to the sidecar, one per initialization.
    pub files: Vec<String>,
    pub provenance: Provenance<f64>,
}

/// Writes `{stem}.json` plus `{stem}_initNN.csv` files into `dir` and
/// returns the sidecar path.
pub fn write_dataset(dir: &Path, stem: &str, data: &OutbreakDataset<f64>) -> Result<PathBuf> {
    let mut files = Vec::with_capacity(data.n_init);
    for init in 0..data.n_init {
        let name = format!("{stem}_init{init:02}.csv");
        let mut out = String::with_capacity(64 * data.days * data.n_regions);
        out.push_str(&DATASET_HEADER.join(","));
        out.push('\n');
        for day in 1..=data.days {
            for region in 0..data.n_regions {
                let [s, i, r] = data.state(init, region, day);
                out.push_str(&format!(
                    "{day},{},{},{},{}\n",
                    region + 1,
                    fmt_full(s),
                    fmt_full(i),
                    fmt_full(r)
                ));
            }
        }
        write_text(&dir.join(&name), &out)?;
        files.push(name);
    }
    let sidecar = DatasetSidecar {
        n_init: data.n_init,
        n_regions: data.n_regions,
        days: data.days,
        files,
        provenance: data.provenance.clone(),
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &sidecar)?;
    Ok(path)
}

fn schema(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Rows of a strict CSV table: header must match exactly, every row must
/// have the header's width. Yields `(line, fields)`.
fn table(path: &Path, text: &str, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut seen_header = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv {
            path: path.display().to_string(),
            source: e,
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if !seen_header {
            for (k, want) in header.iter().enumerate() {
                match rec.get(k) {
                    Some(got) if got == *want => {}
                    got => {
                        return Err(schema(
                            path,
                            line,
                            k + 1,
                            format!("expected header column {want:?}, found {:?}", got.unwrap_or("")),
                        ))
                    }
                }
            }
            if rec.len() != header.len() {
                return Err(schema(
                    path,
                    line,
                    header.len() + 1,
                    format!("header has {} columns, expected {}", rec.len(), header.len()),
                ));
            }
            seen_header = true;
            continue;
        }
        if rec.len() != header.len() {
            let last = rows.last().map(|(l, _): &(usize, Vec<String>)| *l);
            return Err(schema(
                path,
                line,
                rec.len().min(header.len()) + 1,
                format!(
                    "row has {} of {} fields (truncated?); last complete row is {}",
                    rec.len(),
                    header.len(),
                    last.map_or("the header".to_string(), |l| format!("line {l}"))
                ),
            ));
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if !seen_header {
        return Err(schema(path, 1, 1, "empty file, expected a header"));
    }
    Ok(rows)
}

fn parse_usize(path: &Path, line: usize, column: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| schema(path, line, column, format!("expected an integer, found {s:?}")))
}

fn parse_value(path: &Path, line: usize, column: usize, s: &str) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(schema(path, line, column, format!("expected a finite number, found {s:?}"))),
    }
}

fn truncated(path: &Path, rows: &[(usize, Vec<String>)], expected: usize) -> Error {
    let (line, what) = match rows.last() {
        Some((l, f)) => (*l, format!("line {l} (day {}, region {})", f[0], f[1])),
        None => (1, "the header".to_string()),
    };
    schema(
        path,
        line,
        1,
        format!("truncated: {} of {expected} rows; last complete row is {what}", rows.len()),
    )
}

fn read_init_csv(path: &Path, data: &mut OutbreakDataset<f64>, init: usize) -> Result<()> {
    let text = read_text(path)?;
    let rows = table(path, &text, &DATASET_HEADER)?;
    let expected = data.days * data.n_regions;
    if rows.len() < expected {
        return Err(truncated(path, &rows, expected));
    }
    if rows.len() > expected {
        return Err(schema(path, rows[expected].0, 1, format!("more than {expected} rows")));
    }
    for (k, (line, f)) in rows.iter().enumerate() {
        let (want_day, want_region) = (k / data.n_regions + 1, k % data.n_regions + 1);
        let day = parse_usize(path, *line, 1, &f[0])?;
        if day != want_day {
            return Err(schema(path, *line, 1, format!("expected day {want_day}, found {day}")));
        }
        let region = parse_usize(path, *line, 2, &f[1])?;
        if region != want_region {
            return Err(schema(
                path,
                *line,
                2,
                format!("expected region {want_region}, found {region}"),
            ));
        }
        for c in 0..3 {
            let v = parse_value(path, *line, 3 + c, &f[2 + c])?;
            data.series_mut(init, region - 1, c)[day - 1] = v;
        }
    }
    Ok(())
}

/// Reads a dataset through its JSON sidecar.
pub fn read_dataset(sidecar: &Path) -> Result<OutbreakDataset<f64>> {
    let meta: DatasetSidecar = read_json(sidecar)?;
    if meta.files.len() != meta.n_init {
        return Err(Error::invalid(format!(
            "{}: lists {} files for {} initializations",
            sidecar.display(),
            meta.files.len(),
            meta.n_init
        )));
    }
    if meta.provenance.populations.len() != meta.n_regions {
        return Err(Error::invalid(format!(
            "{}: {} populations for {} regions",
            sidecar.display(),
            meta.provenance.populations.len(),
            meta.n_regions
        )));
    }
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let mut data = OutbreakDataset::zeros(meta.n_init, meta.n_regions, meta.days, meta.provenance);
    for (init, name) in meta.files.iter().enumerate() {
        read_init_csv(&dir.join(name), &mut data, init)?;
    }
    Ok(data)
}

/// `day,S,I,R` table for a trajectory starting at `first_day`.
pub fn trajectory_csv(first_day: usize, rows: &[[f64; 3]]) -> String {
    let mut out = TRAJECTORY_HEADER.join(",");
    out.push('\n');
    for (k, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            first_day + k,
            fmt_full(r[0]),
            fmt_full(r[1]),
            fmt_full(r[2])
        ));
    }
    out
}

/// Reads a [`trajectory_csv`] file; days must be consecutive.
pub fn read_trajectory_csv(path: &Path) -> Result<(usize, Vec<[f64; 3]>)> {
    let text = read_text(path)?;
    let rows = table(path, &text, &TRAJECTORY_HEADER)?;
    let mut first = None;
    let mut out = Vec::with_capacity(rows.len());
    for (k, (line, f)) in rows.iter().enumerate() {
        let day = parse_usize(path, *line, 1, &f[0])?;
        let start = *first.get_or_insert(day);
        if day != start + k {
            return Err(schema(path, *line, 1, format!("expected day {}, found {day}", start + k)));
        }
        out.push([
            parse_value(path, *line, 2, &f[1])?,
            parse_value(path, *line, 3, &f[2])?,
            parse_value(path, *line, 4, &f[3])?,
        ]);
    }
    match first {
        Some(d) => Ok((d, out)),
        None => Err(schema(path, 1, 1, "no data rows")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Scenario, SirParams};

    fn dataset() -> OutbreakDataset<f64> {
        let prov = Provenance {
            scenario: Scenario::QuarterRecovered,
            params: SirParams::new(0.3, 0.1).unwrap(),
            sigma: 2500.0,
            populations: vec![1234.5, 9876.25],
            geography_seed: 3,
            master_seed: 4,
            init_seeds: vec![11, 12],
            n_infected: 10,
            dt_internal: 0.25,
        };
        let mut d = OutbreakDataset::zeros(2, 2, 4, prov);
        for (k, v) in d.states.iter_mut().enumerate() {
            *v = (k as f64 + 0.1).sqrt() * std::f64::consts::PI * 1e3;
        }
        d
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let d = dataset();
        let side = write_dataset(dir.path(), "ds", &d).unwrap();
        let back = read_dataset(&side).unwrap();
        assert_eq!(back.states.len(), d.states.len());
        for (a, b) in back.states.iter().zip(&d.states) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, d);
    }

    fn corrupt(edit: impl Fn(&str) -> String) -> String {
        let dir = tempfile::tempdir().unwrap();
        let side = write_dataset(dir.path(), "ds", &dataset()).unwrap();
        let csv = dir.path().join("ds_init01.csv");
        let text = std::fs::read_to_string(&csv).unwrap();
        std::fs::write(&csv, edit(&text)).unwrap();
        read_dataset(&side).unwrap_err().to_string()
    }

    #[test]
    fn truncated_file_names_last_complete_row() {
        let msg = corrupt(|t| t.lines().take(6).collect::<Vec<_>>().join("\n") + "\n");
        assert!(msg.contains("last complete row is line 6"), "{msg}");
        let msg = corrupt(|t| {
            let mut s: String = t.lines().take(7).collect::<Vec<_>>().join("\n");
            s.truncate(s.rfind(',').unwrap());
            s
        });
        assert!(msg.contains("line 7") && msg.contains("last complete row is line 6"), "{msg}");
    }

    #[test]
    fn foreign_column_order_is_rejected() {
        let msg = corrupt(|t| t.replacen("day,region,S,I,R", "day,region,I,S,R", 1));
        assert!(msg.contains("line 1, column 3"), "{msg}");
        let msg = corrupt(|t| t.replacen("\n1,2,", "\n1,1,", 1));
        assert!(msg.contains("line 3, column 2"), "{msg}");
        let msg = corrupt(|t| t.replacen("\n2,1,", "\n2,1,x", 1));
        assert!(msg.contains("line 4, column 3"), "{msg}");
    }

    #[test]
    fn trajectory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![[1.0 / 3.0, 2.0, 7.25e-300], [0.1, 0.2, 0.3]];
        let p = dir.path().join("t.csv");
        write_text(&p, &trajectory_csv(251, &rows)).unwrap();
        assert_eq!(read_trajectory_csv(&p).unwrap(), (251, rows));
    }
}
