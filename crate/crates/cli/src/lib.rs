//! Command-line workbench: index a corpus, run episodes and baselines,
//! evaluate, replay and compare runs.

pub mod config;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use chronicle_core::baselines::{run_baseline, BaselineKind};
use chronicle_core::cache::DiskCache;
use chronicle_core::evaluation::{evaluate, load_references};
use chronicle_core::llm::{ChatBackend, Gateway, GatewayOptions, HttpChatBackend, ScriptedResponder};
use chronicle_core::orchestrator::{run_episode, Backends, EpisodeOutcome};
use chronicle_core::retrieval::{read_corpus, LocalBackend, RemoteSearch, SearchBackend};
use chronicle_core::workbench::{
    load_manifest, load_report_row, load_timeline, render_replay, render_report, write_metrics, write_run,
    METRICS_JSON,
};

use config::{ResolvedRun, RunFlags, SearchSource};

#[derive(Debug, Parser)]
#[command(name = "chronicle", version, about = "Build, evaluate and compare news timelines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a BM25 index over a JSON Lines corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full timeline episode.
    Run(RunFlags),
    /// Run a comparison method.
    Baseline {
        #[arg(long)]
        method: BaselineKind,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Score a predicted timeline against reference timelines.
    Eval {
        /// timeline.json or a run directory.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        truncate_to_ref: bool,
        /// Where to write the metric report; defaults to metrics.json in the
        /// run directory when --pred is one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the trace of a run from its manifest.
    Replay {
        /// manifest.jsonl or a run directory.
        path: PathBuf,
    },
    /// Compare evaluated runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn open_cache(root: Option<&Path>, name: &str) -> anyhow::Result<Option<DiskCache>> {
    root.map(|r| DiskCache::open(r.join(name)).with_context(|| format!("opening cache under {}", r.display())))
        .transpose()
}

fn build_search(run: &ResolvedRun) -> anyhow::Result<Box<dyn SearchBackend>> {
    Ok(match &run.search {
        SearchSource::Corpus(path) => {
            let file = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
            let docs = read_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
            Box::new(LocalBackend::new(docs)?)
        }
        SearchSource::Index(path) => {
            Box::new(LocalBackend::load(path).with_context(|| format!("loading index {}", path.display()))?)
        }
        SearchSource::Remote(endpoint) => {
            let cache = open_cache(run.cache_dir.as_deref(), "search")?;
            Box::new(RemoteSearch::from_env(endpoint.clone(), cache)?)
        }
    })
}

fn build_gateway(run: &ResolvedRun) -> anyhow::Result<Gateway> {
    let backend: Arc<dyn ChatBackend> = match &run.scenario {
        Some(path) => Arc::new(ScriptedResponder::from_file(path)?),
        None => Arc::new(HttpChatBackend::from_env()?),
    };
    let options = GatewayOptions {
        cache: open_cache(run.cache_dir.as_deref(), "llm")?,
        seed: Some(run.episode.seed),
        ..GatewayOptions::with_budget(run.episode.token_budget)
    };
    Ok(Gateway::new(backend, options))
}

fn finish_run(run: &ResolvedRun, outcome: &EpisodeOutcome) -> anyhow::Result<()> {
    write_run(&run.out, &run.episode.query, outcome)?;
    let usage = outcome.manifest.usage().unwrap_or_default();
    println!(
        "{}: {} entries, {} iterations, {} tokens over {} calls -> {}",
        outcome.termination.as_str(),
        outcome.timeline.len(),
        outcome.manifest.iterations().len(),
        usage.total(),
        usage.call_count,
        run.out.display()
    );
    if let Some(refs) = &run.references {
        let refs = load_references(refs)?;
        let report = evaluate(&outcome.timeline, &refs, run.truncate_to_ref)?;
        write_metrics(&run.out.join(METRICS_JSON), &report)?;
        print!("{}", report.to_table());
    }
    Ok(())
}

fn execute(flags: &RunFlags, baseline: Option<BaselineKind>) -> anyhow::Result<()> {
    let run = flags.resolve()?;
    let search = build_search(&run)?;
    let gateway = build_gateway(&run)?;
    let backends = Backends {
        search: search.as_ref(),
        gateway: &gateway,
        models: &run.models,
    };
    let outcome = match baseline {
        None => run_episode(&run.episode, backends)?,
        Some(kind) => run_baseline(kind, &run.episode, backends)?,
    };
    finish_run(&run, &outcome)
}

pub fn run_cli(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index { corpus, out } => {
            let file = File::open(&corpus).with_context(|| format!("opening corpus {}", corpus.display()))?;
            let docs = read_corpus(BufReader::new(file)).with_context(|| format!("reading {}", corpus.display()))?;
            let backend = LocalBackend::new(docs)?;
            backend.save(&out)?;
            println!(
                "indexed {} documents, {} distinct terms -> {}",
                backend.index().doc_count,
                backend.index().vocabulary_size(),
                out.display()
            );
        }
        Command::Run(flags) => execute(&flags, None)?,
        Command::Baseline { method, flags } => execute(&flags, Some(method))?,
        Command::Eval {
            pred,
            refs,
            truncate_to_ref,
            out,
        } => {
            let timeline = load_timeline(&pred)?;
            let refs = load_references(&refs)?;
            let report = evaluate(&timeline, &refs, truncate_to_ref)?;
            let out = out.or_else(|| pred.is_dir().then(|| pred.join(METRICS_JSON)));
            if let Some(path) = out {
                write_metrics(&path, &report)?;
            }
            print!("{}", report.to_table());
        }
        Command::Replay { path } => {
            let manifest = load_manifest(&path)?;
            print!("{}", render_replay(&manifest));
        }
        Command::Report { runs } => {
            let mut rows = Vec::new();
            for dir in &runs {
                if !dir.is_dir() {
                    bail!("{} is not a run directory", dir.display());
                }
                rows.push(load_report_row(dir)?);
            }
            print!("{}", render_report(&rows));
        }
    }
    Ok(())
}
