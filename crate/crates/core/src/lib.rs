//! Functional ratings for sports teams.
//!
//! Each game's home-minus-away point differential is sampled at every second
//! of regulation, and team ratings are fitted by least squares separately at
//! each second. The result is a rating curve `β_i(t)` per team (plus
//! home-advantage curves for the models that include them) whose differences
//! predict the expected point differential at any moment of a game.
//!
//! Module map:
//!
//! * [`ingest`]: game files, scoring-summary repair, per-second resampling.
//! * [`design`]: design matrices for the three models and connectivity.
//! * [`solver`]: the pointwise constrained least-squares fit.
//! * [`inference`]: per-second nested-model F tests and confidence bands.
//! * [`ratings`]: smoothing, scalar rankings, schedule strength, predictions.
//! * [`synth`]: synthetic seasons with known ground truth.
//! * [`io`]: on-disk formats for fits and curves.

pub mod curve;
pub mod design;
pub mod inference;
pub mod ingest;
pub mod io;
pub mod ratings;
pub mod solver;
pub mod synth;

pub use curve::CurveSeries;
pub use design::{build_design, check_connectivity, DesignMatrix, ModelKind, ModelSpec, TeamIndex};
pub use ingest::{DifferentialTrack, GameRecord, ScoringEvent};
pub use solver::{fit, residuals, stack_tracks, Constraint, FitOptions, RatingSet};
