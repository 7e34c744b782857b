//! Checks shared between the per-module tests and the acceptance run.
#![allow(dead_code)]

pub mod env_oracle;
pub mod gradcheck;
pub mod invariants;
