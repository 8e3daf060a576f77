//! Semi-supervised novelty detection with ensembles that disagree only where
//! they should.
//!
//! Each ensemble member starts from a classifier trained on the labeled
//! in-distribution set S, then is fine-tuned on S together with the unlabeled
//! mixture U, where every point of U carries one artificial label `c`
//! (distinct per member). Early stopping on validation accuracy keeps the
//! members from memorizing `c` on unlabeled in-distribution points, so they
//! agree there and disagree on the novel points. Test points whose mean
//! pairwise total-variation distance exceeds a threshold are flagged.
//!
//! The crate is `no_std` and needs only `alloc`; file formats and the
//! command-line driver live in a separate crate.

#![no_std]

extern crate alloc;

pub mod baselines;
pub mod datagen;
pub mod ensemble;
mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod propcheck;

pub use error::{Error, Result};
