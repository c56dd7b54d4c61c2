pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod hydrodynamics;
pub mod io;
pub mod model;
pub mod mwls;
pub mod oracle;
pub mod snapshot;

pub use error::{Error, Result};
