//! The per-frame tracking loop and its building blocks.

pub mod boost;
pub mod config;
pub mod tracker;
pub mod vote;

pub use config::{LearnerConfig, QbstConfig, QueryMode, SearchConfig, TrackerConfig};
pub use tracker::{
    read_results, run_sequence, run_tracker, write_diagnostics, write_results, FrameDiagnostics,
    FrameLabels, ResultRow, ScoredFrame, TrackResult, Tracker,
};
