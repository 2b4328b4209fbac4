//! Core engine for detecting, segmenting and measuring overlapping fibers and
//! vessels in large brightfield microscopy images.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] polygons, raster masks and overlap measures,
//! * [`dataset`] annotation parsing, tiling, augmentation and label export,
//! * [`inference`] letterboxing, raw tensor decoding, NMS and mask composition,
//! * [`pipeline`] tiled processing of huge images with duplicate merging,
//! * [`morphometry`] skeleton length, distance-transform width and area,
//! * [`evaluation`] matching, AP/mAP and F1-confidence curves,
//! * [`stats`] two-sample t-tests and group summaries.

pub mod dataset;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod morphometry;
pub mod pipeline;
pub mod raster;
pub mod stats;

mod class;

pub use class::{CellClass, UnknownClass};
