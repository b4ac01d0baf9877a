//! Mini-batch training, held-out evaluation and the end-to-end `fit` pipeline.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::dataset::{
    self, build_vocabs, dataset_summary, encode_all, parse_movies, parse_ratings, DatasetSplit,
    DatasetSummary, EncodedExample, MovieTable, RatingRecord, Vocabs,
};
use crate::error::{Error, Result};
use crate::model::{adam_step, loss, AdamState, ModelConfig, ModelParams};
use crate::rng;

/// Error summary over a set of (prediction, rating) pairs. `rmse` is always
/// derived from `mse`, never accumulated separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

impl Metrics {
    /// Metrics of the residuals `prediction − target`.
    pub fn from_residuals<I: IntoIterator<Item = f64>>(residuals: I) -> Result<Self> {
        let (mut sq, mut abs, mut count) = (0.0, 0.0, 0usize);
        for r in residuals {
            sq += r * r;
            abs += r.abs();
            count += 1;
        }
        if count == 0 {
            return Err(Error::Argument("metrics need at least one example".into()));
        }
        let mse = sq / count as f64;
        Ok(Metrics {
            mse,
            rmse: mse.sqrt(),
            mae: abs / count as f64,
            count,
        })
    }
}

impl std::fmt::Display for Metrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mse={:.6} rmse={:.6} mae={:.6} n={}",
            self.mse, self.rmse, self.mae, self.count
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_metrics: Metrics,
    pub elapsed_seconds: f64,
}

impl EpochReport {
    pub fn progress_line(&self) -> String {
        format!(
            "epoch={} train_mse={:.6} test_mse={:.6} test_rmse={:.6} test_mae={:.6}",
            self.epoch,
            self.train_mse,
            self.test_metrics.mse,
            self.test_metrics.rmse,
            self.test_metrics.mae
        )
    }
}

/// Seed of the shuffle for 1-based `epoch`.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ epoch as u64
}

/// One pass over `train` in shuffled mini-batches, one Adam step per batch
/// with the batch-mean gradient. Returns the mean squared error of the
/// predictions made before each batch's update.
pub fn train_epoch(
    params: &mut ModelParams,
    state: &mut AdamState,
    train: &[EncodedExample],
    epoch: usize,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng::seeded(epoch_seed(params.config.seed, epoch)));

    let mut grads = params.tensors.zeros_like();
    let mut sq_sum = 0.0;
    for batch in order.chunks(params.config.batch_size) {
        grads.fill_zero();
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let x = &train[i];
            let (prediction, cache) = params.forward(x)?;
            sq_sum += loss(prediction, x.target);
            params.accumulate_gradients(x, &cache, x.target, scale, &mut grads);
        }
        state.steps += 1;
        let step = state.steps;
        adam_step(params, &grads, state, step)?;
    }
    Ok(sq_sum / train.len() as f64)
}

/// Metrics of clamped predictions against targets.
pub fn evaluate(params: &ModelParams, examples: &[EncodedExample]) -> Result<Metrics> {
    if examples.is_empty() {
        return Err(Error::Argument(
            "cannot evaluate an empty example list".into(),
        ));
    }
    let residuals = examples
        .iter()
        .map(|x| params.predict_clamped(x).map(|p| p - x.target))
        .collect::<Result<Vec<f64>>>()?;
    Metrics::from_residuals(residuals)
}

/// Predict the training-set mean rating for every test example.
pub fn baseline_global_mean(train: &[EncodedExample], test: &[EncodedExample]) -> Result<Metrics> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Argument(
            "baseline needs non-empty train and test sets".into(),
        ));
    }
    let mean = train.iter().map(|x| x.target).sum::<f64>() / train.len() as f64;
    Metrics::from_residuals(test.iter().map(|x| mean - x.target))
}

#[derive(Clone, Debug)]
pub struct DataPaths {
    pub ratings: PathBuf,
    pub movies: PathBuf,
    pub tags: Option<PathBuf>,
}

/// Parsed, encoded and split data, ready for training or evaluation.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub ratings: Vec<RatingRecord>,
    pub movies: MovieTable,
    pub vocabs: Vocabs,
    pub split: DatasetSplit,
    pub summary: DatasetSummary,
}

fn read(paths: &DataPaths) -> Result<(Vec<RatingRecord>, MovieTable)> {
    let ratings = parse_ratings(&paths.ratings)?;
    let movies = parse_movies(&paths.movies, paths.tags.as_deref())?;
    Ok((ratings, movies))
}

/// Parse, build fresh vocabularies, encode and split.
pub fn prepare(paths: &DataPaths, test_frac: f64, seed: u64) -> Result<Prepared> {
    let (ratings, movies) = read(paths)?;
    let vocabs = build_vocabs(&ratings, &movies.movies);
    assemble(ratings, movies, vocabs, test_frac, seed)
}

/// Like [`prepare`], but encodes with existing vocabularies (e.g. those of a
/// saved model); unseen tokens become UNK.
pub fn prepare_with_vocabs(
    paths: &DataPaths,
    vocabs: Vocabs,
    test_frac: f64,
    seed: u64,
) -> Result<Prepared> {
    let (ratings, movies) = read(paths)?;
    assemble(ratings, movies, vocabs, test_frac, seed)
}

pub fn assemble(
    ratings: Vec<RatingRecord>,
    movies: MovieTable,
    vocabs: Vocabs,
    test_frac: f64,
    seed: u64,
) -> Result<Prepared> {
    let examples = encode_all(&ratings, &movies.movies, &vocabs)?;
    let split = dataset::split(&examples, test_frac, seed)?;
    let summary = dataset_summary(&ratings);
    Ok(Prepared {
        ratings,
        movies,
        vocabs,
        split,
        summary,
    })
}

pub struct FitOutcome {
    pub params: ModelParams,
    pub reports: Vec<EpochReport>,
    pub prepared: Prepared,
}

/// Train on already prepared data. With `patience = Some(n)`, stops once the
/// test RMSE has failed to improve for `n` consecutive epochs. The returned
/// parameters are those of the last epoch run.
pub fn train_prepared(
    prepared: &Prepared,
    config: &ModelConfig,
    patience: Option<usize>,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<(ModelParams, Vec<EpochReport>)> {
    let mut params = ModelParams::init(prepared.vocabs.sizes(), config, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut reports = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let train_mse = train_epoch(&mut params, &mut state, &prepared.split.train, epoch)?;
        let test_metrics = evaluate(&params, &prepared.split.test)?;
        let report = EpochReport {
            epoch,
            train_mse,
            test_metrics,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        reports.push(report);
        if test_metrics.rmse < best {
            best = test_metrics.rmse;
            stale = 0;
        } else {
            stale += 1;
        }
        if patience.is_some_and(|p| stale >= p) {
            log::info!("stopping after epoch {epoch}: no test RMSE improvement for {stale} epochs");
            break;
        }
    }
    Ok((params, reports))
}

/// parse → vocabularies → encode → split → init → epochs.
pub fn fit(
    paths: &DataPaths,
    config: &ModelConfig,
    patience: Option<usize>,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<FitOutcome> {
    config.validate()?;
    let prepared = prepare(paths, config.test_frac, config.seed)?;
    let (params, reports) = train_prepared(&prepared, config, patience, on_epoch)?;
    Ok(FitOutcome {
        params,
        reports,
        prepared,
    })
}
