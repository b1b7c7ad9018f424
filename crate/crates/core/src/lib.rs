// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod blocks;
pub mod cli;
pub mod color_names;
pub mod config;
pub mod error;
pub mod geometry;
pub mod graded;
pub mod meanshift;
pub mod records;
pub mod sequence_io;
pub mod synth;
pub mod tracker;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use tracker::{track_frames, StreamTracker, TrackMode, TrackRecord, TrackState, Tracker};
