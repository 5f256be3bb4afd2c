pub mod approx;
pub mod basis;
pub mod distortion;
pub mod error;
pub mod io;
pub mod measure;
pub mod mesh;
pub mod metric;
pub mod optimize;
mod par;
pub mod stats;

pub use error::{Error, Result};
