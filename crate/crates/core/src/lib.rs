//! Knowledge-grounded FAQ selection for task-oriented dialogue.
//!
//! A user turn first goes through knowledge-seeking detection. Turns that
//! need outside knowledge are routed by domain: train and taxi questions go
//! straight to their domain-level FAQs, while hotel, restaurant and
//! attraction questions are narrowed to the entities mentioned in the
//! dialogue before a relevance scorer ranks the remaining snippets.

pub mod detection;
pub mod dialogue;
pub mod domain;
pub mod entity;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gateway;
pub mod kb;
pub mod linear;
pub mod model_file;
pub mod pipeline;
pub mod ranker;
pub mod synth;
pub mod text;

pub use dialogue::{Dialogue, LabeledCorpus, Speaker, Turn, TurnLabel};
pub use error::{Error, Result, Stage};
pub use kb::{EntityRef, KnowledgeBase, Snippet, SnippetRef};
