pub mod classify;
pub mod driver;
pub mod error;
pub mod experiments;
pub mod frame;
pub mod gamma;
pub mod lattice;
pub mod propagate;

pub use error::{Error, Result};
