//! Domain labeling, analytic plans, SQL compilation and question-space
//! generation for tabular databases. IO lives in the `infospace` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod compiler;
pub mod labeling;
pub mod plan;
pub mod post;
pub mod questions;
pub mod spacegen;
pub mod taxonomy;
mod util;

pub use util::closest_match;
