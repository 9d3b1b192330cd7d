//! Synthetic flow-level traffic.

pub mod fgn;
pub mod flows;

pub use fgn::{fgn_autocorrelation, fgn_autocovariance, generate_fgn, FgnGenerator, FgnSpec};
pub use flows::{
    add_trend, inject_mean_shift, synthesize_flows, synthesize_flows_with_means, AnomalySpec,
    TrendSpec,
};
