//! Annotation-bias analytics for multi-annotator NLP datasets.
//!
//! The crate is `no_std` with `alloc`: every routine here is a pure function
//! over in-memory data. File formats, persistence, threading and the command
//! line live in the companion `annobias` crate.
//!
//! Module map:
//!
//! * [`label`], [`dataset`]: label sets, soft labels, annotated datasets.
//! * [`agreement`]: Cohen's kappa, Fleiss' kappa, Krippendorff's alpha.
//! * [`divergence`]: model/model and model/human disagreement.
//! * [`metadata`]: demographic gap, pool entropy, iteration variance,
//!   cultural distance.
//! * [`learn`], [`eval`]: weak learners and F1 / cross-entropy / Manhattan
//!   distance.
//! * [`wel`]: weak ensemble learning and post-hoc output debiasing.
//! * [`text`]: preprocessing, score binarization, dialogue flattening.
//! * [`synth`]: seeded synthetic multi-annotator corpora.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agreement;
pub mod dataset;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod label;
pub mod learn;
pub mod metadata;
pub mod rng;
pub mod synth;
pub mod text;
pub mod wel;

pub use dataset::{
    AnnotatedDataset, Annotation, AnnotationValue, AnnotatorProfile, Instance, LabelMode, Split,
};
pub use error::{Error, Result};
pub use label::{LabelId, LabelSet, SoftLabel, TieBreak};
