//! `embrec` command line: train, evaluate, recommend, similar, export.
//!
//! Results go to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 data or runtime error, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::VocabKind;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::recommend::{self, Corpus, Recommendation};
use crate::store::{self, Export, Provenance};
use crate::training::{self, baseline_global_mean, evaluate, DataPaths};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "embrec",
    about = "Content-based movie recommendations from learned entity embeddings",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write it to --out
    Train(TrainArgs),
    /// Re-derive the held-out split of a model and report its metrics
    Evaluate(EvaluateArgs),
    /// Recommend unseen movies for a user
    Recommend(RecommendArgs),
    /// List movies closest to a given movie
    Similar(SimilarArgs),
    /// Write embeddings or content vectors as TSV
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// MovieLens ratings.csv
    #[arg(long, value_name = "P")]
    ratings: PathBuf,
    /// MovieLens movies.csv
    #[arg(long, value_name = "P")]
    movies: PathBuf,
    /// MovieLens tags.csv (keywords)
    #[arg(long, value_name = "P")]
    tags: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> DataPaths {
        DataPaths {
            ratings: self.ratings.clone(),
            movies: self.movies.clone(),
            tags: self.tags.clone(),
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 32)]
    dim_user: usize,
    #[arg(long, default_value_t = 32)]
    dim_movie: usize,
    #[arg(long, default_value_t = 8)]
    dim_cat: usize,
    /// Comma-separated hidden layer widths
    #[arg(long, default_value = "64,32", value_delimiter = ',')]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 1024)]
    batch: usize,
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Stop when test RMSE has not improved for N epochs
    #[arg(long, value_name = "N")]
    patience: Option<usize>,
    /// Model file to write
    #[arg(long, value_name = "MODEL")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "MODEL")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct RecommendArgs {
    #[arg(long, value_name = "MODEL")]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_name = "ID")]
    user: String,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Ratings at or above this count as liked
    #[arg(long, default_value_t = recommend::DEFAULT_THRESHOLD)]
    min_rating: f64,
}

#[derive(Debug, Args)]
struct SimilarArgs {
    #[arg(long, value_name = "MODEL")]
    model: PathBuf,
    #[arg(long, value_name = "P")]
    movies: PathBuf,
    #[arg(long, value_name = "P")]
    tags: Option<PathBuf>,
    #[arg(long, value_name = "ID")]
    movie: String,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum What {
    Movie,
    User,
    Genre,
    Keyword,
    Content,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long, value_name = "MODEL")]
    model: PathBuf,
    #[arg(long)]
    what: What,
    /// TSV file to write
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// movies.csv; required for `--what content`
    #[arg(long, value_name = "P", required_if_eq("what", "content"))]
    movies: Option<PathBuf>,
    #[arg(long, value_name = "P")]
    tags: Option<PathBuf>,
}

/// Run with the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a, out, err),
        Command::Evaluate(a) => evaluate_cmd(a, out, err),
        Command::Recommend(a) => recommend_cmd(a, out),
        Command::Similar(a) => similar_cmd(a, out),
        Command::Export(a) => export_cmd(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = ModelConfig {
        dim_user: a.dim_user,
        dim_movie: a.dim_movie,
        dim_cat: a.dim_cat,
        hidden_sizes: a.hidden,
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        test_frac: a.test_frac,
        ..ModelConfig::default()
    };
    config.validate()?;
    let prepared = training::prepare(&a.data.paths(), config.test_frac, config.seed)?;
    writeln!(out, "{}", prepared.summary).map_err(io_err)?;
    let split = &prepared.split;
    let baseline = baseline_global_mean(&split.train, &split.test)?;
    let _ = writeln!(
        err,
        "train={} test={} baseline_test_rmse={:.6}",
        split.train.len(),
        split.test.len(),
        baseline.rmse
    );
    let (params, _) = training::train_prepared(&prepared, &config, a.patience, |r| {
        let _ = writeln!(err, "{}", r.progress_line());
    })?;
    let provenance = Provenance {
        seed: split.seed,
        test_frac: split.test_frac,
        source_count: split.source_count,
    };
    store::save(&params, &prepared.vocabs, provenance, &a.out)
}

fn load_prepared(
    model: &std::path::Path,
    data: &DataArgs,
    err: &mut dyn Write,
) -> Result<(store::SavedModel, training::Prepared)> {
    let saved = store::load(model)?;
    let p = saved.provenance;
    let prepared =
        training::prepare_with_vocabs(&data.paths(), saved.vocabs.clone(), p.test_frac, p.seed)?;
    if prepared.split.source_count != p.source_count {
        let _ = writeln!(
            err,
            "warning: ratings file has {} records but the model was trained on {}; the split will differ",
            prepared.split.source_count, p.source_count
        );
    }
    Ok((saved, prepared))
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (saved, prepared) = load_prepared(&a.model, &a.data, err)?;
    let metrics = evaluate(&saved.params, &prepared.split.test)?;
    writeln!(out, "{metrics}").map_err(io_err)
}

fn print_recommendations(
    recs: &[Recommendation],
    corpus: &Corpus,
    out: &mut dyn Write,
) -> Result<()> {
    for r in recs {
        let title = corpus
            .catalog
            .get(r.movie_idx)
            .map(|e| e.title.as_str())
            .unwrap_or("");
        writeln!(out, "{}\t{}\t{}\t{:.6}", r.rank, r.movie_id, title, r.score).map_err(io_err)?;
    }
    Ok(())
}

fn recommend_cmd(a: RecommendArgs, out: &mut dyn Write) -> Result<()> {
    let mut sink = std::io::stderr();
    let (saved, prepared) = load_prepared(&a.model, &a.data, &mut sink)?;
    let corpus = Corpus::new(
        prepared.vocabs,
        &prepared.movies.movies,
        prepared.split.train,
    );
    let recs =
        recommend::recommend_for_user(&saved.params, &corpus, &a.user, a.k as usize, a.min_rating)?;
    print_recommendations(&recs, &corpus, out)
}

fn similar_cmd(a: SimilarArgs, out: &mut dyn Write) -> Result<()> {
    let saved = store::load(&a.model)?;
    let movies = crate::dataset::parse_movies(&a.movies, a.tags.as_deref())?;
    let corpus = Corpus::new(saved.vocabs, &movies.movies, Vec::new());
    let recs = recommend::similar_movies(&saved.params, &corpus, &a.movie, a.k as usize)?;
    print_recommendations(&recs, &corpus, out)
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let saved = store::load(&a.model)?;
    let kind = match a.what {
        What::Movie => VocabKind::Movie,
        What::User => VocabKind::User,
        What::Genre => VocabKind::Genre,
        What::Keyword => VocabKind::Keyword,
        What::Content => {
            let movies_path = a.movies.as_deref().expect("clap enforces --movies");
            let movies = crate::dataset::parse_movies(movies_path, a.tags.as_deref())?;
            let catalog = recommend::Catalog::new(&saved.vocabs, &movies.movies);
            return store::export_embeddings(
                &saved.params,
                &saved.vocabs,
                Export::Content(&catalog),
                &a.out,
            );
        }
    };
    store::export_embeddings(&saved.params, &saved.vocabs, Export::Table(kind), &a.out)
}
