//! Command-line front end: batch analysis, evaluation, group comparison,
//! training-set preparation and the HTTP service.

pub mod analyze;
pub mod compare;
pub mod dataset;
pub mod eval;
pub mod serve;
