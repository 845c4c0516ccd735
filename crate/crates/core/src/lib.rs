//! Estimation of population quantities from surveys with callback records
//! under the stableness-of-resistance assumption: the odds ratio linking the
//! outcome to response is the same at the first and second call.

pub mod equations;
pub mod error;
pub mod estimate;
pub mod io;
pub mod math;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod solver;
pub mod tilting;

pub use error::{Error, Result};
