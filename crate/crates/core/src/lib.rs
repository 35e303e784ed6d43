pub mod colloc;
pub mod control;
pub mod dataset;
pub mod error;
pub mod figures;
pub mod integrate;
pub mod loss;
pub mod network;
pub mod plot;
pub mod problem;
pub mod tpbvp;
pub mod train;

pub use error::{Error, Result};
