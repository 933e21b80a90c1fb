pub mod cloud;
pub mod detect;
pub mod error;
pub mod io;
pub mod planner;
pub mod rotgeom;
pub mod scenegen;

pub use error::{Error, Result};
