use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use robustify::sim::{FittedModel, Metric, MetricRecord, RunStatus};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RESULTS_HEADER: [&str; 7] = [
    "run_id",
    "model",
    "noise_level",
    "metric",
    "value",
    "seed",
    "status",
];
const MODEL_FORMAT: &str = "robustify-model";
const LDA_FORMAT: &str = "robustify-lda";

/// Writes `contents` to a temporary sibling and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(contents)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// SHA-256 of the canonical JSON of a command's configuration.
pub fn config_hash(command: &str, config: &impl Serialize) -> String {
    let body = serde_json::json!({ "command": command, "version": VERSION, "config": config });
    hex::encode(Sha256::digest(body.to_string().as_bytes()))
}

/// Header lines written above a results table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub config_hash: String,
    pub deviations: Vec<String>,
}

pub fn format_value(v: f64) -> String {
    format!("{v}")
}

/// Results CSV: `# ` metadata lines, the fixed header, then one row per
/// record in the given order.
pub fn format_results(records: &[MetricRecord], meta: &Metadata) -> String {
    let mut out = format!(
        "# robustify {VERSION}\n# config_sha256: {}\n",
        meta.config_hash
    );
    for d in &meta.deviations {
        out.push_str(&format!("# deviation: {d}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.run_id.to_string(),
            r.model.clone(),
            format_value(r.noise_level),
            r.metric.name().to_string(),
            r.value.map(format_value).unwrap_or_default(),
            r.seed.to_string(),
            r.status.name().to_string(),
        ])
        .expect("in-memory write");
    }
    out.push_str(
        &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"),
    );
    out
}

pub fn write_results(path: &Path, records: &[MetricRecord], meta: &Metadata) -> CliResult<()> {
    write_atomic(path, format_results(records, meta).as_bytes())
}

/// Parses a results CSV, skipping metadata lines.
pub fn read_results(path: &Path) -> CliResult<Vec<MetricRecord>> {
    let text = read_text(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(path, e.to_string()))?
        .clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(CliError::data(
            path,
            format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        ));
    }
    let bad = |row: usize, what: &str| CliError::data(path, format!("row {row}: invalid {what}"));
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| CliError::data(path, e.to_string()))?;
            let status = match &rec[6] {
                "ok" => RunStatus::Ok,
                "failed" => RunStatus::Failed,
                "undefined" => RunStatus::Undefined,
                _ => return Err(bad(i + 1, "status")),
            };
            Ok(MetricRecord {
                run_id: rec[0].parse().map_err(|_| bad(i + 1, "run_id"))?,
                model: rec[1].to_string(),
                noise_level: rec[2].parse().map_err(|_| bad(i + 1, "noise_level"))?,
                metric: Metric::parse(&rec[3]).ok_or_else(|| bad(i + 1, "metric"))?,
                value: if rec[4].is_empty() {
                    None
                } else {
                    Some(rec[4].parse().map_err(|_| bad(i + 1, "value"))?)
                },
                seed: rec[5].parse().map_err(|_| bad(i + 1, "seed"))?,
                status,
            })
        })
        .collect()
}

/// Covariates and, when present, responses read from a dataset CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl Table {
    pub fn d(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Reads a CSV with header `x1,...,xd` followed by `y` (required when
/// `need_y`, optional otherwise).
pub fn read_dataset(path: &Path, need_y: bool) -> CliResult<Table> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let has_y = headers.last().is_some_and(|h| h == "y");
    let d = headers.len() - usize::from(has_y);
    for (j, h) in headers.iter().take(d).enumerate() {
        let expected = format!("x{}", j + 1);
        if *h != expected {
            return Err(CliError::Schema {
                path: path.into(),
                column: j + 1,
                expected: format!("'{expected}', found '{h}'"),
            });
        }
    }
    if need_y && !has_y {
        return Err(CliError::Schema {
            path: path.into(),
            column: headers.len() + 1,
            expected: "'y'".into(),
        });
    }
    if d == 0 {
        return Err(CliError::Schema {
            path: path.into(),
            column: 1,
            expected: "'x1'".into(),
        });
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(path, e.to_string()))?;
        let values: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::data(
                            path,
                            format!("row {}, column {}: invalid number {s:?}", i + 1, headers[j]),
                        )
                    })
            })
            .collect::<CliResult<_>>()?;
        if has_y {
            y.push(values[d]);
        }
        rows.push(values[..d].to_vec());
    }
    if rows.is_empty() {
        return Err(CliError::data(path, "no data rows"));
    }
    Ok(Table {
        rows,
        y: has_y.then_some(y),
    })
}

pub fn format_dataset(rows: &[Vec<f64>], y: &[f64]) -> String {
    let d = rows.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header).expect("in-memory write");
    for (row, yi) in rows.iter().zip(y) {
        w.write_record(
            row.iter()
                .chain(std::iter::once(yi))
                .map(|v| format_value(*v)),
        )
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Versioned regression model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: String,
    /// Model name as given to `fit`.
    pub model: String,
    /// Covariates in the dataset, before any intercept column.
    pub covariates: usize,
    pub intercept: bool,
    pub fitted: FittedModel,
}

impl ModelFile {
    pub fn new(model: &str, covariates: usize, intercept: bool, fitted: FittedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: VERSION.into(),
            model: model.into(),
            covariates,
            intercept,
            fitted,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let m: ModelFile = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::data(path, format!("invalid model file: {e}")))?;
        if m.format != MODEL_FORMAT {
            return Err(CliError::data(
                path,
                format!("not a regression model file (format {:?})", m.format),
            ));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        write_atomic(path, format!("{text}\n").as_bytes())
    }
}

/// Versioned topic model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModelFile {
    pub format: String,
    pub version: String,
    pub state: robustify::lda::TopicModelState,
}

impl LdaModelFile {
    pub fn new(state: robustify::lda::TopicModelState) -> Self {
        LdaModelFile {
            format: LDA_FORMAT.into(),
            version: VERSION.into(),
            state,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let m: LdaModelFile = serde_json::from_str(&read_text(path)?)
            .map_err(|e| CliError::data(path, format!("invalid topic model file: {e}")))?;
        if m.format != LDA_FORMAT {
            return Err(CliError::data(
                path,
                format!("not a topic model file (format {:?})", m.format),
            ));
        }
        m.state.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Other(e.to_string()))?;
        write_atomic(path, format!("{text}\n").as_bytes())
    }
}
