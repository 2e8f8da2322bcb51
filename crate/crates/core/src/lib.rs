pub mod codec;
pub mod curriculum;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod cli;
pub mod introspect;
pub mod lm;
pub mod metrics;

pub use error::{Error, Result};
