//! Numeric evaluation of the explicit theoretical bounds and Monte-Carlo
//! checks of their probabilistic ingredients.
//!
//! Offline quantities ([`offline`]) bound the distance between the meta
//! initialization and any task; online quantities ([`stationary`], [`adaptation`])
//! bound the mean-square error of projected adaptation under state feedback.

pub mod bmsb;
pub mod inputs;
pub mod offline;
pub mod adaptation;
pub mod report;
pub mod stationary;

pub use bmsb::{empirical_bmsb, BmsbEstimate, BmsbSettings};
pub use inputs::{BoundInputs, BoundSettings};
pub use offline::{
    bar_lambda, c_v, d_lambda_lhs, d_lambda_requirement, d_lambda_satisfied, eig_lower_bound, offline_bound,
    similarity_stats, OfflineBound, SimilarityStats,
};
pub use adaptation::{chi_mean, adaptation_bound, EigenMode, AdaptationBound};
pub use report::{format_f64, parse_kv, BoundReport};
pub use stationary::{stationary_analysis, StationaryAnalysis};
