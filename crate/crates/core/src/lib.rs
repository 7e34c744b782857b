//! A small embodied agent in a two-gradient grid world.
//!
//! The numerical core ([`numcore`]) is generic over the float type; everything
//! built on top of it runs in `f64` through the aliases below.

pub mod agent;
pub mod assays;
pub mod config;
pub mod environment;
pub mod harness;
pub mod numcore;
pub mod perspective;
pub mod rng;
pub mod trainer;

pub type Tensor = numcore::Tensor<f64>;
pub type Tape = numcore::Tape<f64>;
pub type GruCell = numcore::GruCell<f64>;
pub type Linear = numcore::Linear<f64>;
pub type Pca = numcore::Pca<f64>;
pub type AdamState = numcore::AdamState<f64>;
