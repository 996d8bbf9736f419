//! Political-alignment inference from user-generated text.
//!
//! The crate is organized as a pipeline:
//!
//! * [`corpus`] loads and preprocesses debate-style and comment-style corpora
//!   into [`corpus::TextUnit`]s.
//! * [`backend`] renders prompts, talks to an LLM (or the deterministic
//!   [`backend::MockBackend`]), parses structured answers and caches them.
//! * [`aggregate`] turns text-level predictions into user-level verdicts.
//! * [`metrics`], [`proximity`], [`lexical`] and [`baseline`] hold the
//!   analytic battery.
//! * [`pipeline`] wires everything into reproducible commands with run
//!   manifests; [`synth`] generates planted-marker corpora for end-to-end
//!   checks.

pub mod aggregate;
pub mod backend;
pub mod baseline;
pub mod corpus;
pub mod http;
pub mod lexical;
pub mod metrics;
pub mod pipeline;
pub mod proximity;
pub mod rng;
pub mod synth;

pub use corpus::{Category, PartyLabel, TextUnit, UserRecord};
