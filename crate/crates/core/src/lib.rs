//! Core data model and algorithms for a language-model web navigation agent.
//!
//! Everything in this crate is pure and `no_std` (it needs `alloc`):
//!
//! - [`dom`]: element tree, operable-element marking and the pruner's seed set.
//! - [`pruner`]: neighbourhood-based HTML pruning and simplified serialization.
//! - [`action`]: the function-call action language (parse, validate, render).
//! - [`observation`]: viewport position, command history and the agent prompt.
//! - [`episode`]: the observe / act loop over pluggable policies and environments.
//! - [`evaluator`]: teacher-forced step success rate and benchmark splits.
//! - [`alignment`]: SFT / DPO reference losses, preference-pair and RFT filters,
//!   and the data-construction prompt templates.
//!
//! IO, HTML5 parsing, HTTP backends and the CLI live in the `webnav` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod action;
pub mod alignment;
pub mod dom;
pub mod episode;
pub mod evaluator;
pub mod observation;
pub mod pruner;
mod template;
mod text;

pub use action::{parse_action, Action, Command, ParseDiagnostic};
pub use dom::{DomNode, DomTree, PageContent, PageState, Tab};
pub use episode::{run_episode, Environment, EpisodeOptions, Outcome, Policy, Trace, TraceStep};
pub use evaluator::{evaluate, judge_step, BenchReport, SplitSpec};
pub use observation::{render_prompt, History, Observation};
pub use pruner::{prune, serialize_simplified, PrunerConfig, SimplifiedHtml};
