//! Desk-scale toolkit for skin hyperspectral spectrum classification.
//!
//! The pipeline: per-image median spectra extracted from annotated
//! hyperspectral cubes feed a shrinkage-regularized linear discriminant
//! classifier, evaluated over seeded bootstrap train/test splits with
//! patient-level metric aggregation. Companion modules quantify cohort
//! confounding (group descriptives, standardized mean differences,
//! batch-effect separation tests) and generate synthetic tissue-optics
//! cohorts with injectable group and confounder effects for controlled
//! experiments.

pub mod confound;
pub mod data;
pub mod eval;
pub mod lda;
pub mod rng;
pub mod synth;
