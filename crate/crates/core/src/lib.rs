//! Bridge-assisted code data generation for low-resource programming
//! languages: screen seed tasks, solve them in a well-supported language with
//! explained code, transfer those solutions into the target language, and
//! assemble instruction-tuning data from the results.

pub mod bridge;
pub mod comments;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod extract;
pub mod gateway;
pub mod jsonl;
pub mod model;
mod par;
pub mod pipeline;
pub mod prompt;
pub mod screening;
pub mod script;
pub mod transfer;
pub mod validate;
