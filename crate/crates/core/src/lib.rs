pub mod error;
pub mod lct;
pub mod pose;
pub mod rescan;
pub mod synth;
pub mod volumes;

pub use error::{Error, Result};
