use rand::seq::SliceRandom;
use rayon::prelude::*;
use robustify::lda::{
    fit as fit_lda, generate_bursty_corpus, heldout_perword_loglik, BurstySpec, Corpus, LdaConfig,
    LdaMode,
};
use robustify::rng::rng_for;
use robustify::sim::{sort_records, Metric, MetricRecord, RunStatus};

use crate::args::{LdaControl, LdaEvalArgs, LdaFitArgs, LdaGenArgs, ModeArg};
use crate::error::{CliError, CliResult};
use crate::io::{config_hash, format_results, read_text, write_atomic, LdaModelFile, Metadata};

/// Fraction of documents held out by `lda eval`.
pub const HOLDOUT_FRACTION: f64 = 0.2;
/// Stream id of the document holdout shuffle.
const HOLDOUT_STREAM: u64 = 7;

pub fn mode(m: ModeArg) -> LdaMode {
    match m {
        ModeArg::Standard => LdaMode::Standard,
        ModeArg::Robust => LdaMode::Robust,
    }
}

/// Model name used in results tables.
pub fn model_name(mode: LdaMode) -> &'static str {
    match mode {
        LdaMode::Standard => "lda",
        LdaMode::Robust => "rlda",
    }
}

pub fn lda_config(control: &LdaControl) -> CliResult<LdaConfig> {
    let mut config = LdaConfig {
        alpha: control.alpha,
        seed: control.seed,
        ..LdaConfig::default()
    };
    if let Some(tol) = control.tol {
        config.em_tol = tol;
    }
    if let Some(n) = control.max_iters {
        config.em_max_iters = n;
    }
    config.validate()?;
    if control.topics == 0 {
        return Err(CliError::Config("--topics must be positive".into()));
    }
    Ok(config)
}

pub fn read_corpus(path: &std::path::Path) -> CliResult<Corpus> {
    let text = read_text(path)?;
    Corpus::parse_ldac(&text, None).map_err(|e| CliError::data(path, e.to_string()))
}

pub fn gen(args: &LdaGenArgs) -> CliResult<()> {
    let spec = BurstySpec {
        docs: args.docs,
        topics: args.topics,
        vocab: args.vocab,
        burstiness: args.burstiness,
        alpha: args.alpha,
        doc_length: args.doc_length,
        seed: args.seed,
        ..BurstySpec::default()
    };
    let corpus = generate_bursty_corpus(&spec)?;
    write_atomic(&args.out, corpus.to_ldac().as_bytes())?;
    eprintln!(
        "wrote {} documents to {}",
        corpus.documents.len(),
        args.out.display()
    );
    Ok(())
}

pub fn fit(args: &LdaFitArgs) -> CliResult<()> {
    let config = lda_config(&args.control)?;
    let corpus = read_corpus(&args.corpus)?;
    let state = fit_lda(&corpus, args.control.topics, mode(args.mode), &config)?;
    if !state.converged {
        eprintln!(
            "warning: EM stopped after {} rounds without converging",
            state.iterations
        );
    }
    LdaModelFile::new(state).write(&args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

/// Seeded document holdout: returns `(train, test)` with `ceil(fraction·D)`
/// test documents.
pub fn holdout(corpus: &Corpus, fraction: f64, seed: u64) -> CliResult<(Corpus, Corpus)> {
    let d = corpus.documents.len();
    let n_test = ((fraction * d as f64).ceil() as usize).min(d.saturating_sub(1));
    if n_test == 0 {
        return Err(CliError::Config(format!(
            "corpus has {d} documents; at least 2 are needed for a holdout"
        )));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng_for(seed, &[HOLDOUT_STREAM]));
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Corpus::new(
            corpus.vocab_size,
            idx.iter().map(|&i| corpus.documents[i].clone()).collect(),
        )
    };
    Ok((pick(train_idx)?, pick(test_idx)?))
}

/// Fits one mode and scores it on `test`; fit failures become failed rows.
pub fn fit_and_score(
    run_id: usize,
    train: &Corpus,
    test: &Corpus,
    k: usize,
    mode: LdaMode,
    config: &LdaConfig,
    split_ratio: f64,
) -> MetricRecord {
    let outcome = fit_lda(train, k, mode, config).and_then(|state| {
        heldout_perword_loglik(&state, test, split_ratio, config.seed, &config.estep)
    });
    let (value, status) = match outcome {
        Ok(r) => (Some(-r.per_word), RunStatus::Ok),
        Err(e) => {
            eprintln!("warning: {} fit with K={k} failed: {e}", model_name(mode));
            (None, RunStatus::Failed)
        }
    };
    MetricRecord {
        run_id,
        model: model_name(mode).into(),
        noise_level: k as f64,
        metric: Metric::NegPredLoglik,
        value,
        seed: config.seed,
        status,
    }
}

pub fn eval(args: &LdaEvalArgs) -> CliResult<()> {
    if !(args.split_ratio > 0.0 && args.split_ratio < 1.0) {
        return Err(CliError::Config(format!(
            "--split-ratio must be in (0, 1), got {}",
            args.split_ratio
        )));
    }
    let config = lda_config(&args.control)?;
    let corpus = read_corpus(&args.corpus)?;
    let report = if let Some(path) = &args.model_file {
        let model = LdaModelFile::read(path)?;
        let r = heldout_perword_loglik(
            &model.state,
            &corpus,
            args.split_ratio,
            args.control.seed,
            &config.estep,
        )?;
        let record = MetricRecord {
            run_id: 0,
            model: model_name(model.state.mode).into(),
            noise_level: model.state.k as f64,
            metric: Metric::NegPredLoglik,
            value: Some(-r.per_word),
            seed: args.control.seed,
            status: RunStatus::Ok,
        };
        eprintln!(
            "{}: per-word log likelihood {} over {} tokens ({} documents skipped)",
            record.model, r.per_word, r.scored_tokens, r.skipped_docs
        );
        vec![record]
    } else {
        let (train, test) = holdout(&corpus, HOLDOUT_FRACTION, args.control.seed)?;
        let modes = match args.mode {
            Some(m) => vec![mode(m)],
            None => vec![LdaMode::Standard, LdaMode::Robust],
        };
        let mut records: Vec<MetricRecord> = modes
            .par_iter()
            .map(|&m| {
                fit_and_score(
                    0,
                    &train,
                    &test,
                    args.control.topics,
                    m,
                    &config,
                    args.split_ratio,
                )
            })
            .collect();
        sort_records(&mut records);
        for r in &records {
            match r.value {
                Some(v) => eprintln!("{}: per-word log likelihood {}", r.model, -v),
                None => eprintln!("{}: failed", r.model),
            }
        }
        if records.iter().all(|r| r.status == RunStatus::Failed) {
            return Err(CliError::AllFailed {
                failures: records.len(),
            });
        }
        records
    };
    let meta = Metadata {
        config_hash: config_hash("lda eval", args),
        deviations: vec![
            "metric neg_pred_loglik is the negated held-out per-word log likelihood; noise_level holds K".into(),
        ],
    };
    let text = format_results(&report, &meta);
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
