use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gml_core::corpus::{load_corpus, Corpus};
use gml_core::embeddings::load_embeddings;
use gml_core::engine::{self, Resources};
use gml_core::lexicon::{load_connectives, load_lexicon, ConnectiveLists, Lexicon};
use gml_core::synthetic::generate_synthetic;

mod config;

use config::{ConfigError, Settings};

#[derive(Parser)]
#[command(
    name = "gml",
    version,
    about = "Gradual machine learning for aspect-level sentiment analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every aspect unit of a corpus
    Label {
        #[command(flatten)]
        common: Common,
        /// Output directory for predictions.jsonl and metrics.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against the corpus gold labels
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Time full runs on synthetic corpora of increasing size
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending sizes, e.g. 1000,2000,4000
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// CSV output path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the easy-instance proportion and accuracy
    EasyStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump one unit's features, support and subgraph before labeling
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        unit: usize,
    },
    /// Write a synthetic corpus and its lexicon
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        units: usize,
        /// Output directory for corpus.json and lexicon.tsv
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Lexicon TSV (token<TAB>score); the bundled English list when absent
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    connectives: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// key = value file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    df: Option<f64>,
    #[arg(long)]
    dfp: Option<f64>,
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<gml_core::Error> for Failure {
    fn from(e: gml_core::Error) -> Self {
        let hint = match e {
            gml_core::Error::MissingEmbeddings => {
                "\nhint: pass --embeddings <vectors.txt> (text format, one `token v1 ... vd` per line)"
            }
            _ => "",
        };
        if e.is_input_error() {
            Failure::Usage(format!("{e}{hint}"))
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

impl Common {
    fn settings(&self) -> Result<Settings, Failure> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        s.set("corpus", path(&self.corpus));
        s.set("lexicon", path(&self.lexicon));
        s.set("connectives", path(&self.connectives));
        s.set("embeddings", path(&self.embeddings));
        s.set("seed", self.seed.map(|v| v.to_string()));
        s.set("m", self.m.map(|v| v.to_string()));
        s.set("k", self.k.map(|v| v.to_string()));
        s.set("df", self.df.map(|v| v.to_string()));
        s.set("dfp", self.dfp.map(|v| v.to_string()));
        Ok(s)
    }
}

fn existing(settings: &Settings, key: &str) -> Result<Option<PathBuf>, Failure> {
    match settings.path(key) {
        Some(p) if !p.is_file() => Err(Failure::Usage(format!(
            "--{key}: file not found: {}",
            p.display()
        ))),
        other => Ok(other),
    }
}

fn resources(settings: &Settings) -> Result<Resources, Failure> {
    let mut lexicon = match existing(settings, "lexicon")? {
        Some(p) => load_lexicon(&p, settings.flag("normalize_lexicon", true)?)?,
        None => Lexicon::bundled(),
    };
    if let Some(v) = settings.number("min_strength")? {
        lexicon = lexicon.with_min_strength(v);
    }
    let connectives = match existing(settings, "connectives")? {
        Some(p) => load_connectives(&p)?,
        None => ConnectiveLists::bundled(),
    };
    let embeddings = existing(settings, "embeddings")?
        .map(load_embeddings)
        .transpose()?;
    Ok(Resources {
        lexicon,
        connectives,
        embeddings,
    })
}

fn corpus(settings: &Settings) -> Result<Corpus, Failure> {
    let path = settings
        .path("corpus")
        .ok_or_else(|| Failure::Usage("--corpus is required".into()))?;
    if !path.is_file() {
        return Err(Failure::Usage(format!(
            "--corpus: file not found: {}",
            path.display()
        )));
    }
    Ok(load_corpus(&path)?)
}

fn write(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> Outcome {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn label(common: &Common, out: &Path) -> Outcome {
    let settings = common.settings()?;
    let config = settings.engine_config()?;
    let resources = resources(&settings)?;
    let corpus = corpus(&settings)?;
    let result = engine::run(&corpus, &resources, &config)?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::Usage(format!("--out: cannot create {}: {e}", out.display())))?;
    write(&out.join("predictions.jsonl"), &result.to_jsonl())?;
    write(
        &out.join("metrics.json"),
        &pretty(&result.metrics_json(&corpus)?),
    )?;
    log::info!(
        "labeled {} units in {} iterations",
        result.records.len(),
        result.iterations
    );
    Ok(())
}

fn evaluate(predictions: &Path, corpus_path: &Path) -> Outcome {
    let text = fs::read_to_string(predictions).map_err(|e| {
        Failure::Usage(format!(
            "--predictions: cannot read {}: {e}",
            predictions.display()
        ))
    })?;
    let records = engine::parse_predictions(&text)?;
    let mut s = Settings::default();
    s.set("corpus", Some(corpus_path.display().to_string()));
    let corpus = corpus(&s)?;
    let metrics = engine::evaluate(&records, &corpus)?;
    print!("{}", pretty(&metrics));
    Ok(())
}

fn bench(common: &Common, sizes: &[usize], out: Option<&Path>) -> Outcome {
    let settings = common.settings()?;
    let config = settings.engine_config()?;
    let params = settings.synthetic_params()?;
    let rows = engine::bench_scaling(sizes, &params, &config)?;
    emit(out, &engine::scaling_csv(&rows))
}

fn easy_stats(common: &Common, out: Option<&Path>) -> Outcome {
    let settings = common.settings()?;
    let config = settings.engine_config()?;
    let resources = resources(&settings)?;
    let corpus = corpus(&settings)?;
    let stats = engine::easy_report(&corpus, &resources, &config)?;
    emit(out, &pretty(&stats))
}

fn inspect(common: &Common, unit: usize) -> Outcome {
    let settings = common.settings()?;
    let config = settings.engine_config()?;
    let resources = resources(&settings)?;
    let corpus = corpus(&settings)?;
    print!(
        "{}",
        pretty(&engine::inspect(&corpus, &resources, &config, unit)?)
    );
    Ok(())
}

fn synth(common: &Common, units: usize, out: &Path) -> Outcome {
    let settings = common.settings()?;
    let mut params = settings.synthetic_params()?;
    params.n_units = units;
    let synthetic = generate_synthetic(&params)?;
    fs::create_dir_all(out)
        .map_err(|e| Failure::Usage(format!("--out: cannot create {}: {e}", out.display())))?;
    write(
        &out.join("corpus.json"),
        &pretty(&synthetic.corpus.to_json()),
    )?;
    write(&out.join("lexicon.tsv"), &synthetic.lexicon.to_tsv())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("GML_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "GML_THREADS must be a positive integer, got `{value}`"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Internal(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Label { common, out } => label(common, out),
        Command::Evaluate {
            predictions,
            corpus,
        } => evaluate(predictions, corpus),
        Command::Bench { common, sizes, out } => bench(common, sizes, out.as_deref()),
        Command::EasyStats { common, out } => easy_stats(common, out.as_deref()),
        Command::Inspect { common, unit } => inspect(common, *unit),
        Command::Synth { common, units, out } => synth(common, *units, out),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
