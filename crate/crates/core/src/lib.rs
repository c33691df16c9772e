//! Action recognition from 2D human-pose sequences.
//!
//! The pipeline turns detector keypoints into action labels:
//!
//! 1. [`ingest`] parses detector exports and manifests into [`pose::Sample`]s;
//! 2. [`preprocess`] drops unusable frames, fills missing landmarks, and
//!    centers and scales every pose;
//! 3. [`augment`] flips and noises training sequences;
//! 4. [`reduce`], [`som`] and [`library`] build per-action prototype
//!    libraries;
//! 5. [`embed`] turns a sequence into classifier channels;
//! 6. [`classifier`] is a convolutional + recurrent sequence classifier;
//! 7. [`eval`] runs cross-validation protocols end to end.
//!
//! [`synth`] generates labelled synthetic corpora for testing.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod classifier;
pub mod embed;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod library;
pub mod pipeline;
pub mod pose;
pub mod preprocess;
pub mod records;
pub mod reduce;
pub mod som;
pub mod synth;

pub use error::{Error, Result};
