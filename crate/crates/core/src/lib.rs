//! Spotting of short facial micro-movement intervals in long, high frame-rate
//! face videos.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`dataio`] loads frame directories, 68-point landmark files and
//!    ground-truth tables (or generates a deterministic synthetic dataset).
//! 2. [`preprocess`] cuts each video into overlapping fixed-length windows,
//!    aligns each window on the eye line of its first frame and extracts
//!    three regions of interest (both brows, the mouth corners).
//! 3. [`optflow`] and [`features`] turn each window into a sequence of
//!    soft-binned histograms of oriented optical flow, one per ROI per
//!    timestep.
//! 4. [`network`] classifies each sequence with a small two-layer LSTM.
//! 5. [`spotting`] and [`evaluation`] label windows, suppress overlapping
//!    detections and score the result with leave-one-subject-out folds.
//!
//! [`review`] holds the proposal and annotator-feedback model used by the
//! annotation service.

pub mod config;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod network;
pub mod optflow;
pub mod pipeline;
pub mod preprocess;
pub mod review;
pub mod spotting;

pub use error::{Error, Result};
