//! Database access, execution, corpus storage, the HTTP service and the
//! command-line tool built on `infospace-core`.

pub mod cli;
pub mod corpus;
pub mod db;
pub mod executor;
pub mod fixtures;
pub mod harvest;
pub mod service;
pub mod session;
pub mod validate;

pub use infospace_core as core;
