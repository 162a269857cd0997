//! Denoised self-training of 3D object detectors, end to end on a synthetic
//! detector.
//!
//! - [`geom`]: oriented boxes, rotated IoU, NMS
//! - [`augment`]: random object scaling, world/object augmentation,
//!   curriculum intensity schedule
//! - [`scoring`]: hybrid score and triplet partition
//! - [`memory`]: per-scene pseudo-label memory with ensemble and voting
//! - [`losses`], [`dsnorm`]: loss composition and domain-specific
//!   normalization
//! - [`simdet`]: scene generator and noisy detector
//! - [`evalkit`]: AP and error decomposition
//! - [`pipeline`]: the round loop and ablation grid
//! - [`io`], [`cli`]: file formats and the command line

pub mod assignment;
pub mod augment;
pub mod cli;
pub mod dsnorm;
pub mod error;
pub mod evalkit;
pub mod geom;
pub mod io;
pub mod losses;
pub mod memory;
pub mod pipeline;
pub mod scoring;
pub mod simdet;

pub use error::{Error, Result};
pub use geom::{OrientedBox, Point3};
pub use scoring::{ClassId, Detection, LabelState, PseudoLabelEntry};
