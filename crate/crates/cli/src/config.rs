//! Run configuration: command-line flags over a TOML file over defaults.
//! Credentials never appear here; they come from the environment only.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Deserialize;

use chronicle_core::llm::{ModelProfile, ModelProfiles};
use chronicle_core::model::EpisodeConfig;
use chronicle_core::updater::UpdaterMode;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub reasoner: Option<String>,
    pub scraper: Option<String>,
    pub reasoner_max_tokens: Option<u32>,
    pub scraper_max_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub references: Option<PathBuf>,
    pub truncate_to_ref: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub episode: EpisodeConfig,
    pub models: ModelsSection,
    pub search: SearchSection,
    pub llm: LlmSection,
    pub evaluation: EvaluationSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags shared by `run` and `baseline`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for timeline and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Topic to build a timeline for
    #[arg(long)]
    pub query: Option<String>,
    /// Scenario file for the offline scripted model backend.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// JSON Lines corpus searched with BM25.
    #[arg(long, conflicts_with = "index")]
    pub corpus: Option<PathBuf>,
    /// Index built by `chronicle index`.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Web search endpoint; the key is read from SEARCH_API_KEY.
    #[arg(long)]
    pub search_endpoint: Option<String>,
    /// Directory for cached search and model responses.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Documents scraped to seed the global event memory
    #[arg(long)]
    pub n_init: Option<usize>,
    /// Documents scraped per exploration search
    #[arg(long)]
    pub n_exp: Option<usize>,
    /// Retrieval depth used by the baseline methods
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Supervisor review rounds before the episode stops
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Search actions allowed per iteration
    #[arg(long)]
    pub max_searches: Option<usize>,
    /// Total prompt plus completion tokens for the episode
    #[arg(long)]
    pub token_budget: Option<u64>,
    /// Words per extraction chunk
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Sampling seed sent with every model request
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent extraction calls
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// `deterministic` or `assisted` timeline merging
    #[arg(long, value_parser = parse_updater_mode)]
    pub updater_mode: Option<UpdaterMode>,
    /// Skip the model rewrite of the global event memory.
    #[arg(long)]
    pub no_synthesis: bool,
    /// Model name for the reasoner role
    #[arg(long)]
    pub reasoner_model: Option<String>,
    /// Model name for the scraper role
    #[arg(long)]
    pub scraper_model: Option<String>,
    /// Reference timelines; when given, metrics.json is written after the run.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Keep only the most salient entries, as many as each reference has dates
    #[arg(long)]
    pub truncate_to_ref: bool,
}

fn parse_updater_mode(s: &str) -> Result<UpdaterMode, String> {
    match s {
        "deterministic" => Ok(UpdaterMode::Deterministic),
        "assisted" => Ok(UpdaterMode::Assisted),
        other => Err(format!("unknown updater mode {other:?}; expected deterministic or assisted")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchSource {
    Corpus(PathBuf),
    Index(PathBuf),
    Remote(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub episode: EpisodeConfig,
    pub models: ModelProfiles,
    pub search: SearchSource,
    pub scenario: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub truncate_to_ref: bool,
    pub out: PathBuf,
}

fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}

impl RunFlags {
    pub fn resolve(&self) -> anyhow::Result<ResolvedRun> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        self.resolve_with(file)
    }

    pub fn resolve_with(&self, file: ConfigFile) -> anyhow::Result<ResolvedRun> {
        let mut ep = file.episode;
        set(&mut ep.query, self.query.clone());
        set(&mut ep.n_init, self.n_init);
        set(&mut ep.n_exp, self.n_exp);
        set(&mut ep.top_k, self.top_k);
        set(&mut ep.max_iterations, self.max_iterations);
        set(&mut ep.max_searches_per_iteration, self.max_searches);
        set(&mut ep.token_budget, self.token_budget);
        set(&mut ep.chunk_size_words, self.chunk_size);
        set(&mut ep.seed, self.seed);
        set(&mut ep.tuning.parallelism, self.parallelism);
        if self.updater_mode.is_some() {
            ep.tuning.updater_mode = self.updater_mode;
        }
        if self.no_synthesis {
            ep.tuning.synthesize_memory = false;
        }
        ep.validate()?;

        let mut models = ModelProfiles::default();
        let m = file.models;
        if let Some(name) = self.reasoner_model.clone().or(m.reasoner) {
            models.reasoner = ModelProfile::reasoner(name);
        }
        if let Some(name) = self.scraper_model.clone().or(m.scraper) {
            models.scraper = ModelProfile::scraper(name);
        }
        set(&mut models.reasoner.params.max_tokens, m.reasoner_max_tokens);
        set(&mut models.scraper.params.max_tokens, m.scraper_max_tokens);

        let s = file.search;
        let corpus = self.corpus.clone().or(if self.index.is_some() { None } else { s.corpus });
        let index = self.index.clone().or(if self.corpus.is_some() { None } else { s.index });
        let endpoint = self.search_endpoint.clone().or(s.endpoint);
        let search = match (corpus, index, endpoint) {
            (Some(c), None, _) => SearchSource::Corpus(c),
            (None, Some(i), _) => SearchSource::Index(i),
            (None, None, Some(e)) => SearchSource::Remote(e),
            (Some(_), Some(_), _) => bail!("both a corpus and an index are configured; pick one"),
            (None, None, None) => bail!("no search source: give --corpus, --index or --search-endpoint"),
        };

        Ok(ResolvedRun {
            episode: ep,
            models,
            search,
            scenario: self.scenario.clone().or(file.llm.scenario),
            cache_dir: self.cache_dir.clone().or(s.cache_dir),
            references: self.refs.clone().or(file.evaluation.references),
            truncate_to_ref: self.truncate_to_ref || file.evaluation.truncate_to_ref,
            out: self.out.clone(),
        })
    }
}
