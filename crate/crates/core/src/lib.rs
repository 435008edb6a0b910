//! Timeline construction from news collections: a global event memory built
//! from an initial broad scrape, refined by a reasoning model that searches,
//! updates a fine-grained timeline and is steered by a deficiency reviewer.

pub mod baselines;
pub mod cache;
pub mod cognition;
pub mod date;
pub mod evaluation;
pub mod llm;
pub mod model;
pub mod orchestrator;
pub mod parallel;
pub mod prompt;
pub mod retrieval;
pub mod scraper;
pub mod supervisor;
pub mod text;
pub mod updater;
pub mod workbench;

#[doc(hidden)]
pub mod testkit;
