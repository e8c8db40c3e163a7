//! Core algorithms for dataset-classification bias audits.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the CLI,
//! the results store and the study HTTP service live in the `biasaudit`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod grid;
pub mod hash;
pub mod image;
pub mod model;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod study;
pub mod synth;
pub mod train;
pub mod transform;

mod math;

pub use dataset::{DatasetManifest, ImageRecord, PseudoDatasetSpec, SplitSpec};
pub use error::{DatasetError, ModelError, ProbeError, StudyError, TrainError, TransformError};
pub use image::Image;
pub use model::{ModelSpec, ReferenceCnn};
pub use rng::CounterRng;
pub use train::{ConvergenceStatus, RunRecord, TrainConfig};
pub use transform::{AugmentationLevel, AugmentationPolicy, CorruptionKind, CorruptionSpec, Geometry};
