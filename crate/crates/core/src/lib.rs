//! Core algorithms for a glioma analysis pipeline.
//!
//! The crate covers everything that is pure computation: subregion label
//! semantics, intensity normalization and slicing, a dense-encoder U-Net with
//! hand-written backpropagation, soft-dice and focal losses, the whole-tumor to
//! subregion training cascade, segmentation metrics, radiomic shape features
//! and a random-forest survival regressor.
//!
//! It builds without `std` (only `alloc` is required). The default `std`
//! feature turns on wall-clock timing and runtime CPU feature detection in the
//! matrix-multiply kernels. File formats, configuration and the command line
//! live in the companion `glioma-pipeline` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data_model;
pub mod error;
pub mod features;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod preprocess;
pub mod stats;
pub mod survival;
pub mod trainer;
pub mod volume;

pub use data_model::{
    merge_subregion_masks, subregion_mask, Case, LabelMap, Modality, MultiModalScan,
    ResectionStatus, SubregionId, SurvivalRecord,
};
pub use error::{Error, Result};
pub use nn::{Network, NetworkSpec, WeightSet};
pub use volume::{BinaryMask, Spacing, Volume};
