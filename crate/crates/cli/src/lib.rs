//! Library backing the `flmarket` binary: config and file formats,
//! experiment orchestration and report verification. The binary itself is
//! a thin argument-parsing shell over [`run`].

pub mod config;
pub mod errors;
pub mod files;
pub mod run;

pub use errors::CliError;
