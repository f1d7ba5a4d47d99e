//! Relationship labeling and betrayal prediction for Diplomacy game logs.
//!
//! The pipeline runs in stages:
//!
//! 1. [`gamelog`] parses JSONL transcripts and keeps player-to-player messages.
//! 2. [`relations`] turns orders into friendly/hostile acts, finds stable
//!    friendships and the betrayals that end them.
//! 3. [`cohort`] matches every betrayal with a lasting friendship and
//!    produces labeled seasons for the long-term and imminent tasks.
//! 4. [`lingcues`] scores each season's messages into per-direction cues.
//! 5. [`model`] selects features, fits regularized logistic regression and
//!    evaluates it with game-grouped cross-validation.
//!
//! [`stats`] holds the hypothesis tests and bootstrap used throughout,
//! [`synth`] generates seeded corpora with planted effects and
//! [`pipeline`] chains the stages into file-to-file commands.

pub mod cohort;
pub mod gamelog;
pub mod lingcues;
pub mod model;
pub mod pipeline;
pub mod relations;
pub mod rng;
pub mod stats;
pub mod synth;
