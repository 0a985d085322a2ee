use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use mstml::pipeline::{link_batch, load_hrg, report, run_until, PipelineConfig, Stage, StageStatus};
use mstml::{Error, Exec, Result};

/// Multiscale topic manifold learning over time-stamped, co-authored corpora.
#[derive(Debug, Parser)]
#[command(name = "mstml", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// TOML configuration file. Unset keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output (run) directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override any config key, e.g. `--set metrics.tno_windows=[1,3]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Input JSON-lines corpus (`input.path`).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Chunk length such as `3m`, `90d`, `1y` (`chunking.length`).
    #[arg(long, global = true)]
    chunk_length: Option<String>,

    /// Topics in the global model (`global.k`).
    #[arg(long, global = true)]
    k_global: Option<usize>,

    /// Relevancy weight (`global.lambda`).
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Terms kept per global topic (`global.keep_per_topic`).
    #[arg(long, global = true)]
    keep_per_topic: Option<usize>,

    /// Neighbours in the topic graph (`geometry.knn_k`).
    #[arg(long, global = true)]
    knn_k: Option<usize>,

    /// Dendrogram cut height in [0, 1] (`geometry.cut_height`).
    #[arg(long, global = true)]
    cut_height: Option<f64>,

    /// TNO windows, comma separated (`metrics.tno_windows`).
    #[arg(long, global = true, value_delimiter = ',')]
    tno_windows: Option<Vec<usize>>,

    /// ETSG decay values, comma separated (`metrics.etsg_taus`).
    #[arg(long, global = true, value_delimiter = ',')]
    etsg_taus: Option<Vec<f64>>,

    /// Author whose topic mass sizes embedding points (`embed.author`).
    #[arg(long, global = true)]
    author: Option<String>,

    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,

    /// Log progress (repeat for more detail).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read and tokenize the corpus.
    Ingest,
    /// Train the global model, filter the vocabulary and train the ensemble.
    Train,
    /// Build topic geometry, the Ward dendrogram and link probabilities.
    Dendrogram,
    /// Compute alignment and coherence metrics.
    Metrics,
    /// Compute and export the 2D embedding.
    Embed,
    /// Run every stage.
    Run,
    /// Print a Markdown summary of a completed run.
    Report {
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Co-authorship probability for an author pair, or for every pair in a CSV.
    Link {
        #[arg(required_unless_present = "batch")]
        author_u: Option<String>,
        #[arg(required_unless_present = "batch")]
        author_v: Option<String>,
        /// CSV of `author,author` lines.
        #[arg(long, conflicts_with_all = ["author_u", "author_v"])]
        batch: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn build_config(opts: &GlobalOpts) -> Result<PipelineConfig> {
    let mut cfg = match &opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let quote = |s: &str| format!("{s:?}");
    let list = |v: &[String]| format!("[{}]", v.join(","));
    let mut sets: Vec<(String, String)> = Vec::new();
    if let Some(v) = opts.seed {
        sets.push(("seed".into(), v.to_string()));
    }
    if let Some(v) = &opts.out {
        sets.push(("out".into(), quote(&v.to_string_lossy())));
    }
    if let Some(v) = &opts.input {
        sets.push(("input.path".into(), quote(&v.to_string_lossy())));
    }
    if let Some(v) = &opts.chunk_length {
        sets.push(("chunking.length".into(), quote(v)));
    }
    if let Some(v) = opts.k_global {
        sets.push(("global.k".into(), v.to_string()));
    }
    if let Some(v) = opts.lambda {
        sets.push(("global.lambda".into(), format!("{v:?}")));
    }
    if let Some(v) = opts.keep_per_topic {
        sets.push(("global.keep_per_topic".into(), v.to_string()));
    }
    if let Some(v) = opts.knn_k {
        sets.push(("geometry.knn_k".into(), v.to_string()));
    }
    if let Some(v) = opts.cut_height {
        sets.push(("geometry.cut_height".into(), format!("{v:?}")));
    }
    if let Some(v) = &opts.tno_windows {
        sets.push((
            "metrics.tno_windows".into(),
            list(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
        ));
    }
    if let Some(v) = &opts.etsg_taus {
        sets.push((
            "metrics.etsg_taus".into(),
            list(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>()),
        ));
    }
    if let Some(v) = &opts.author {
        sets.push(("embed.author".into(), quote(v)));
    }
    for kv in &opts.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        sets.push((k.trim().to_string(), v.trim().to_string()));
    }
    cfg.set_all(&sets)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    let exec = if cli.global.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let last = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Train => Some(Stage::Ensemble),
        Command::Dendrogram => Some(Stage::Dendrogram),
        Command::Metrics => Some(Stage::Metrics),
        Command::Embed | Command::Run => Some(Stage::Embed),
        _ => None,
    };
    if let Some(last) = last {
        let manifest = run_until(&cfg, last, exec)?;
        for s in &manifest.stages {
            let status = match s.status {
                StageStatus::Computed => "computed",
                StageStatus::Cached => "cached",
            };
            println!("{:<11} {status}", s.name);
        }
        if let Some(m) = &manifest.meta_topics {
            println!("meta topics at h = {}: {}", m.cut_height, m.count);
        }
        println!("output: {}", cfg.out.display());
        return Ok(());
    }
    match cli.command {
        Command::Report { output } => {
            let text = report(&cfg.out)?;
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
                None => print!("{text}"),
            }
        }
        Command::Link {
            author_u,
            author_v,
            batch,
        } => {
            let model = load_hrg(&cfg.out)?;
            match batch {
                Some(path) => {
                    let csv = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    print!("{}", link_batch(&model, &csv)?);
                }
                None => {
                    let (u, v) = (author_u.unwrap_or_default(), author_v.unwrap_or_default());
                    println!("{}", model.link(&u, &v)?);
                }
            }
        }
        Command::Config => print!("{}", cfg.to_toml()),
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
