//! Co-evolution engine: turns a problem specification into validated
//! candidate solutions through an LLM gateway, evolves them functionally and
//! structurally, and reports against the built-in evaluation domains.

pub mod config;
pub mod domains;
pub mod engine;
pub mod gateway;
pub mod reference;
pub mod report;
pub mod run;
pub mod sandbox;
pub mod stub;
mod sync;
