pub mod audio;
pub mod container;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod pipeline;
pub mod style;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
