//! Network-wide statistical modeling and prediction of link traffic.

pub mod chart;
pub mod config;
pub mod error;
pub mod eval;
pub mod kriging;
pub mod joint;
pub mod linalg;
pub mod mean_model;
pub mod sim;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
