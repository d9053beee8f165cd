//! Belief maps from multi-group tabletop role-playing transcripts.
//!
//! The pipeline runs in stages, each consuming the previous stage's output:
//!
//! 1. [`lexicon`]: build the stop-word configuration.
//! 2. [`alignment`]: find marker posts shared by every group and cut each
//!    run into sections.
//! 3. [`extraction`]: rank shared place terms per section and per-group
//!    space terms.
//! 4. [`cartography`]: assemble and emit the map.
//!
//! [`convergence`] measures how labels stabilize as groups are added, and
//! [`syngen`] generates seeded corpora with known answers, and [`pipeline`]
//! runs the stages over a workspace directory.

pub mod alignment;
pub mod cartography;
pub mod convergence;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod ingest;
pub mod lexicon;
pub mod pipeline;
pub mod syngen;

pub use error::{Error, Result};
