//! Semi-automatic entity-linking corpus bootstrapping.
//!
//! The pipeline runs in rounds over an NER-annotated CoNLL corpus:
//!
//! 1. [`corpus`] parses the corpus and extracts linkable mentions.
//! 2. [`candidate`] asks an external generator backend for (language, title)
//!    candidates per mention, over a newline-delimited wire protocol.
//! 3. [`resolver`] maps (language, title) pairs to Wikidata QIDs.
//! 4. Reviewers accept or reject the model's top candidate ([`workflow`],
//!    served by [`review`]).
//! 5. [`wapis`] runs the verbatim-text wiki search fallback; reviewers pick a
//!    match for mentions the model did not cover.
//! 6. [`workflow::Store::finalize`] marks the rest unlabeled, and [`stats`]
//!    produces the coverage figures.

pub mod candidate;
pub mod clock;
pub mod config;
pub mod corpus;
pub mod net;
pub mod pipeline;
pub mod resolver;
pub mod review;
pub mod stats;
pub mod wapis;
pub mod workflow;

pub use candidate::{Candidate, CandidateSource, GeneratorBackend, GeneratorRequest};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::Config;
pub use corpus::{Document, Mention, NeType, Token};
pub use resolver::{Resolution, ResolvedEntity, Resolver};
pub use stats::{BreakdownRow, CoverageReport, Dimension, Measure};
pub use wapis::{SearchQuery, SearchResult, WikiSearch};
pub use workflow::{Store, UnlabeledTag, WorkflowRecord, WorkflowState};
