use std::path::Path;

use rayon::prelude::*;
use robustify::lda::{generate_bursty_corpus, BurstySpec, Corpus, LdaConfig, LdaMode};
use robustify::rng::derive_seed;
use robustify::sim::{sort_records, Metric, MetricRecord, ModelKind, RunStatus};

use crate::args::{Figure, ReproduceArgs};
use crate::commands::{all_failed, settings, sim_deviations, simulate_records};
use crate::error::{CliError, CliResult};
use crate::io::{config_hash, write_results, Metadata};
use crate::lda::fit_and_score;

pub const DEFAULT_REPS: usize = 50;
pub const DEFAULT_LDA_REPS: usize = 5;
pub const DEFAULT_TOPIC_GRID: [usize; 4] = [3, 5, 8, 10];
pub const LDA_TRAIN_DOCS: usize = 100;
pub const LDA_TEST_DOCS: usize = 25;

/// Metric shown by each panel of the improvement figure.
pub const IMPROVEMENT_PANELS: [(ModelKind, Metric); 3] = [
    (ModelKind::Linear, Metric::NegPR2),
    (ModelKind::Logistic, Metric::NegPredLoglik),
    (ModelKind::Poisson, Metric::NegPredLoglik),
];

pub fn panel_file(name: &str, metric: Metric) -> String {
    format!("figure_{name}_{metric}.csv")
}

/// Runs the figure's experiment and returns the paths written.
pub fn reproduce(args: &ReproduceArgs) -> CliResult<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let hash = config_hash("reproduce", args);
    match args.figure {
        Figure::Linear => regression(
            args,
            &hash,
            ModelKind::Linear,
            &Metric::for_kind(ModelKind::Linear),
            "linear",
        ),
        Figure::Logistic => regression(
            args,
            &hash,
            ModelKind::Logistic,
            &Metric::for_kind(ModelKind::Logistic),
            "logistic",
        ),
        Figure::Poisson => regression(
            args,
            &hash,
            ModelKind::Poisson,
            &Metric::for_kind(ModelKind::Poisson),
            "poisson",
        ),
        Figure::Improvement => {
            let mut written = Vec::new();
            for (kind, metric) in IMPROVEMENT_PANELS {
                written.extend(regression(
                    args,
                    &hash,
                    kind,
                    &[metric],
                    &format!("improvement_{}", kind.name()),
                )?);
            }
            Ok(written)
        }
        Figure::Lda => lda_figure(args, &hash),
    }
}

fn regression(
    args: &ReproduceArgs,
    hash: &str,
    kind: ModelKind,
    metrics: &[Metric],
    name: &str,
) -> CliResult<Vec<std::path::PathBuf>> {
    let settings = settings(&args.control)?;
    let grid = args
        .noise_grid
        .clone()
        .unwrap_or_else(|| kind.default_grid());
    let reps = args.reps.unwrap_or(DEFAULT_REPS);
    eprintln!(
        "running {} simulation: {} noise levels x {reps} reps",
        kind.name(),
        grid.len()
    );
    let (records, failures) = simulate_records(kind, &grid, reps, args.seed, &settings)?;
    if all_failed(&records) {
        return Err(CliError::AllFailed { failures });
    }
    let meta = Metadata {
        config_hash: hash.to_string(),
        deviations: sim_deviations(kind, &settings),
    };
    metrics
        .iter()
        .map(|&m| write_panel(&args.out, name, m, &records, &meta))
        .collect()
}

fn write_panel(
    dir: &Path,
    name: &str,
    metric: Metric,
    records: &[MetricRecord],
    meta: &Metadata,
) -> CliResult<std::path::PathBuf> {
    let rows: Vec<MetricRecord> = records
        .iter()
        .filter(|r| r.metric == metric)
        .cloned()
        .collect();
    let path = dir.join(panel_file(name, metric));
    write_results(&path, &rows, meta)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

/// Training and test corpora for one repetition of the topic-model figure.
pub fn lda_corpora(seed: u64) -> CliResult<(Corpus, Corpus)> {
    let spec = BurstySpec {
        docs: LDA_TRAIN_DOCS + LDA_TEST_DOCS,
        seed,
        ..BurstySpec::default()
    };
    let corpus = generate_bursty_corpus(&spec)?;
    let (train, test) = corpus.documents.split_at(LDA_TRAIN_DOCS);
    Ok((
        Corpus::new(corpus.vocab_size, train.to_vec())?,
        Corpus::new(corpus.vocab_size, test.to_vec())?,
    ))
}

fn lda_figure(args: &ReproduceArgs, hash: &str) -> CliResult<Vec<std::path::PathBuf>> {
    if !(args.split_ratio > 0.0 && args.split_ratio < 1.0) {
        return Err(CliError::Config(format!(
            "--split-ratio must be in (0, 1), got {}",
            args.split_ratio
        )));
    }
    let topics = args
        .topics
        .clone()
        .unwrap_or_else(|| DEFAULT_TOPIC_GRID.to_vec());
    if topics.is_empty() || topics.contains(&0) {
        return Err(CliError::Config(
            "--topics must list positive topic counts".into(),
        ));
    }
    let reps = args.reps.unwrap_or(DEFAULT_LDA_REPS);
    let mut base = LdaConfig::default();
    if let Some(tol) = args.control.tol {
        base.em_tol = tol;
    }
    if let Some(n) = args.control.max_iters {
        base.em_max_iters = n;
    }
    base.validate()?;
    eprintln!(
        "running lda figure: {} topic counts x {reps} reps x 2 modes",
        topics.len()
    );
    let corpora: Vec<(Corpus, Corpus)> = (0..reps)
        .into_par_iter()
        .map(|rep| lda_corpora(derive_seed(args.seed, &[rep as u64])))
        .collect::<CliResult<_>>()?;
    let cells: Vec<(usize, usize, LdaMode)> = (0..reps)
        .flat_map(|rep| {
            topics
                .iter()
                .flat_map(move |&k| [LdaMode::Standard, LdaMode::Robust].map(|m| (rep, k, m)))
        })
        .collect();
    let mut records: Vec<MetricRecord> = cells
        .par_iter()
        .map(|&(rep, k, mode)| {
            let config = LdaConfig {
                seed: derive_seed(args.seed, &[rep as u64]),
                ..base
            };
            let (train, test) = &corpora[rep];
            fit_and_score(rep, train, test, k, mode, &config, args.split_ratio)
        })
        .collect();
    sort_records(&mut records);
    if records.iter().all(|r| r.status == RunStatus::Failed) {
        return Err(CliError::AllFailed {
            failures: records.len(),
        });
    }
    let meta = Metadata {
        config_hash: hash.to_string(),
        deviations: vec![
            "synthetic bursty corpus: D=100 train + 25 test, V=200, K_true=5, burstiness 20, length 100".into(),
            "noise_level holds the fitted K; value is the negated held-out per-word log likelihood".into(),
        ],
    };
    Ok(vec![write_panel(
        &args.out,
        "lda",
        Metric::NegPredLoglik,
        &records,
        &meta,
    )?])
}
