//! Shared with the core crate's test suites.

#[path = "../../../core/tests/common/mod.rs"]
mod common;

pub use common::*;
