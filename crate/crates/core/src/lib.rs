//! Instructional video to structured, renderable notes.

pub mod config;
pub mod dedup;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod ingest;
pub mod keyinfo;
pub mod media;
pub mod notegen;
pub mod par;
pub mod pipeline;
pub mod providers;
pub mod render;
pub mod structure;
pub mod text;

pub use config::Config;
pub use error::{Error, Result, Warnings};
pub use pipeline::Stage;
