//! Feature-extraction and evaluation toolkit for differential
//! morphological profiles (DMP) on remote-sensing rasters.
//!
//! The pipeline: flat structuring-element grayscale morphology
//! ([`morphology`]), multi-scale opening/closing profiles and their
//! differentials ([`profile`]), depth-extended channel stacking with the
//! standard presets ([`stack`]), sliding-window tiling of large rasters
//! ([`tiler`]), per-class segmentation metrics and error-mask rendering
//! ([`metrics`]), and bit-exact PNG / tensor persistence ([`formats`]).
//!
//! Everything is deterministic: morphology is pure integer arithmetic,
//! parallel execution never changes results, and identical inputs always
//! produce identical bytes.

pub mod error;
pub mod formats;
pub mod image;
pub mod metrics;
pub mod morphology;
pub mod profile;
pub mod stack;
pub mod tiler;

pub use error::{Error, Result};
pub use image::{GrayImage, LabelMask, RgbImage};
pub use morphology::{close, dilate, erode, make_se, open, SeShape, StructuringElement};
pub use profile::{closing_profile, dmp, opening_profile, DifferentialSpec, Profile, ProfileKind, ProfileSpec};
pub use stack::{
    preset, stack_depth_extended, stack_depth_extended_gray, to_luma, DmpPreset, FeatureStack,
    StackData, ValueDomain,
};
pub use tiler::{plan_tiles, stitch_labels, TilePlan};
pub use metrics::{render_error_mask, ClassMetrics, ConfusionMatrix};
