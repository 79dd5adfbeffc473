use std::path::Path;

use robustify::glm::{Prediction, Predictive, RegressionDataset};
use robustify::sim::{
    fit_model, predictive_l1, predictive_r2, run_grid, FitSettings, MetricRecord, ModelKind,
    RunStatus, SimModel, SimSpec,
};
use robustify::Family;

use crate::args::{EvaluateArgs, FitArgs, FitControl, PredictArgs, SimulateArgs};
use crate::error::{CliError, CliResult};
use crate::io::{
    config_hash, format_value, read_dataset, read_text, write_atomic, write_results, Metadata,
    ModelFile,
};

pub fn parse_kind(name: &str) -> CliResult<ModelKind> {
    [ModelKind::Linear, ModelKind::Logistic, ModelKind::Poisson]
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| {
            CliError::Config(format!(
                "unknown data kind {name:?}; expected linear, logistic or poisson"
            ))
        })
}

pub fn parse_model(name: &str) -> CliResult<SimModel> {
    SimModel::parse(name).ok_or_else(|| {
        let names: Vec<&str> = SimModel::ALL.iter().map(|m| m.name()).collect();
        CliError::Config(format!(
            "unknown model {name:?}; expected one of {}",
            names.join(", ")
        ))
    })
}

pub fn settings(control: &FitControl) -> CliResult<FitSettings> {
    let s = FitSettings {
        intercept: control.intercept.on(),
        tol: control.tol,
        max_iters: control.max_iters,
    };
    s.validate()?;
    Ok(s)
}

/// Protocol choices recorded in every simulation results header.
pub fn sim_deviations(kind: ModelKind, settings: &FitSettings) -> Vec<String> {
    let mut out = vec![
        "d=5, n_train=500, n_test=500; w redrawn per repetition from N(0,1); per-rep seed from (master seed, rep)".to_string(),
    ];
    out.push(match kind {
        ModelKind::Linear => {
            "linear: x ~ Unif[-5,5]; train noise sd sigma_i + 0.02 with sigma_i ~ Gamma(k,1), sigma_i = 0 at k = 0; test noise sd 0.02; robust_linear is student-t regression".into()
        }
        ModelKind::Logistic => {
            "logistic: x ~ Unif[-5,5]; no intercept in truth; flips the ceil(p*n) labels with smallest |w'x|, ties by index".into()
        }
        ModelKind::Poisson => {
            "poisson: x ~ Unif[-1,1] (reduced from Unif[-5,5] to keep rates finite); no intercept in truth; w redrawn if any rate exceeds 1e15".into()
        }
    });
    if settings.intercept {
        out.push(
            "fits include an intercept as the last coefficient; param_mse is over the d slopes"
                .into(),
        );
    }
    out
}

fn log_failures(reports: &[robustify::sim::RepReport]) -> usize {
    let mut failures = 0;
    for r in reports {
        for (model, msg) in &r.failures {
            eprintln!("warning: {model} fit failed: {msg}");
            failures += 1;
        }
        if r.redraws > 0 {
            eprintln!(
                "warning: coefficients redrawn {} times to keep Poisson rates finite",
                r.redraws
            );
        }
    }
    failures
}

/// Runs a grid and returns its records, failing only when every fit failed.
pub fn simulate_records(
    kind: ModelKind,
    grid: &[f64],
    reps: usize,
    seed: u64,
    settings: &FitSettings,
) -> CliResult<(Vec<MetricRecord>, usize)> {
    if grid.is_empty() {
        return Err(CliError::Config("noise grid is empty".into()));
    }
    let base = SimSpec {
        reps,
        ..SimSpec::new(kind, grid[0], seed)
    };
    let (records, reports) = run_grid(&base, grid, &SimModel::for_kind(kind), settings)?;
    let failures = log_failures(&reports);
    Ok((records, failures))
}

pub fn all_failed(records: &[MetricRecord]) -> bool {
    !records.is_empty() && records.iter().all(|r| r.status == RunStatus::Failed)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let kind = parse_kind(&args.model)?;
    let settings = settings(&args.control)?;
    let grid = args
        .noise_grid
        .clone()
        .unwrap_or_else(|| kind.default_grid());
    let (records, failures) = simulate_records(kind, &grid, args.reps, args.seed, &settings)?;
    let meta = Metadata {
        config_hash: config_hash("simulate", args),
        deviations: sim_deviations(kind, &settings),
    };
    write_results(&args.out, &records, &meta)?;
    eprintln!("wrote {} records to {}", records.len(), args.out.display());
    if all_failed(&records) {
        return Err(CliError::AllFailed { failures });
    }
    Ok(())
}

fn design(rows: &[Vec<f64>], intercept: bool) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            if intercept {
                r.iter().copied().chain(std::iter::once(1.0)).collect()
            } else {
                r.clone()
            }
        })
        .collect()
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let model = parse_model(&args.model)?;
    let settings = settings(&args.control)?;
    let table = read_dataset(&args.data, true)?;
    let y = table.y.clone().expect("required by read_dataset");
    for (i, &v) in y.iter().enumerate() {
        check_response(model.name(), model.kind(), v, i + 1)?;
    }
    let data = RegressionDataset::from_rows(&design(&table.rows, settings.intercept), y)?;
    let fitted = fit_model(model, &data, &settings)?;
    if !fitted.converged() {
        eprintln!("warning: {model} did not converge");
    }
    ModelFile::new(model.name(), table.d(), settings.intercept, fitted).write(&args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn check_response(model: &str, kind: ModelKind, y: f64, row: usize) -> CliResult<()> {
    let family = match kind {
        ModelKind::Linear => return Ok(()),
        ModelKind::Logistic => Family::Bernoulli,
        ModelKind::Poisson => Family::Poisson,
    };
    if family.in_support(y) {
        return Ok(());
    }
    Err(CliError::ModelMismatch {
        model: model.into(),
        what: format!(
            "response {y} in row {row} (outside the {} support)",
            family.name()
        ),
    })
}

pub const PREDICTION_HEADER: [&str; 6] = ["row", "point", "mean", "variance", "prob", "logpdf"];

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let model = ModelFile::read(&args.model_file)?;
    let table = read_dataset(&args.data, false)?;
    if table.d() != model.covariates {
        return Err(CliError::ModelMismatch {
            model: model.model.clone(),
            what: format!(
                "{} covariates (model expects {})",
                table.d(),
                model.covariates
            ),
        });
    }
    let rows = design(&table.rows, model.intercept);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PREDICTION_HEADER).expect("in-memory write");
    for (i, x) in rows.iter().enumerate() {
        let p: Prediction = model.fitted.predict(x)?;
        let logpdf = match &table.y {
            Some(y) => {
                check_response(&model.model, model.fitted.response_kind(), y[i], i + 1)?;
                format_value(model.fitted.predictive_logpdf(x, y[i])?)
            }
            None => String::new(),
        };
        w.write_record([
            (i + 1).to_string(),
            format_value(p.point),
            format_value(p.mean),
            format_value(p.variance),
            p.prob.map(format_value).unwrap_or_default(),
            logpdf,
        ])
        .expect("in-memory write");
    }
    write_atomic(&args.out, &w.into_inner().expect("in-memory flush"))?;
    eprintln!("wrote {} predictions to {}", rows.len(), args.out.display());
    Ok(())
}

/// Columns of a predictions CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub point: Vec<f64>,
    pub prob: Option<Vec<f64>>,
    pub logpdf: Option<Vec<f64>>,
}

pub fn read_predictions(path: &Path) -> CliResult<Predictions> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(path, e.to_string()))?
        .clone();
    for (j, expected) in PREDICTION_HEADER.iter().enumerate() {
        if headers.get(j) != Some(*expected) {
            return Err(CliError::Schema {
                path: path.into(),
                column: j + 1,
                expected: format!("'{expected}', found '{}'", headers.get(j).unwrap_or("")),
            });
        }
    }
    let mut columns: [Vec<Option<f64>>; 3] = Default::default();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(path, e.to_string()))?;
        for (c, j) in [1usize, 4, 5].into_iter().enumerate() {
            let s = &rec[j];
            let v = if s.is_empty() {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| {
                    CliError::data(
                        path,
                        format!(
                            "row {}, column {}: invalid number {s:?}",
                            i + 1,
                            PREDICTION_HEADER[j]
                        ),
                    )
                })?)
            };
            columns[c].push(v);
        }
    }
    let complete = |col: &[Option<f64>]| -> Option<Vec<f64>> { col.iter().copied().collect() };
    let point =
        complete(&columns[0]).ok_or_else(|| CliError::data(path, "missing point prediction"))?;
    Ok(Predictions {
        point,
        prob: complete(&columns[1]),
        logpdf: complete(&columns[2]),
    })
}

/// Prediction-quality metrics `(name, value)`; undefined metrics are
/// reported with an empty value.
pub fn evaluation_metrics(
    y: &[f64],
    pred: &Predictions,
) -> CliResult<Vec<(&'static str, Option<f64>)>> {
    let pl1 = predictive_l1(y, &pred.point)?;
    let pr2 = predictive_r2(y, &pred.point)?;
    let mut out = vec![
        ("pL1", pl1),
        ("pR2", pr2),
        ("neg_pL1", pl1.map(|v| -v)),
        ("neg_pR2", pr2.map(|v| -v)),
    ];
    if pred.prob.is_some() {
        out.push((
            "classification_error",
            Some(robustify::sim::classification_error(y, &pred.point)?),
        ));
    }
    if let Some(lp) = &pred.logpdf {
        out.push((
            "neg_pred_loglik",
            Some(robustify::sim::neg_pred_loglik(lp)?),
        ));
    }
    Ok(out)
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let pred = read_predictions(&args.predictions)?;
    let table = read_dataset(&args.data, true)?;
    let y = table.y.expect("required by read_dataset");
    if y.len() != pred.point.len() {
        return Err(CliError::data(
            &args.data,
            format!("{} responses but {} predictions", y.len(), pred.point.len()),
        ));
    }
    let mut out = String::from("metric,value\n");
    for (name, value) in evaluation_metrics(&y, &pred)? {
        out.push_str(&format!(
            "{name},{}\n",
            value.map(format_value).unwrap_or_default()
        ));
    }
    match &args.out {
        Some(path) => write_atomic(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}
