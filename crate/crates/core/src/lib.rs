//! Ground-truth-free benchmarking of medical image harmonization.
//!
//! Intensity harmonization is scored with normalized 1-D Wasserstein
//! distances between the foreground intensity distributions of the input,
//! target and predicted images ([`metrics_wd`]); anatomy preservation with the
//! relative volume change of segmented structures ([`metrics_anatomy`]).
//! Classical paired metrics ([`metrics_reference`]) and Spearman correlation
//! ([`stats`]) support comparison when a ground truth exists, and
//! [`harness`] runs all of it over a manifest of site-wise triplets.

pub mod cli;
pub mod distribution;
pub mod harness;
pub mod metrics_anatomy;
pub mod metrics_reference;
pub mod metrics_wd;
mod serde_util;
pub mod stats;
pub mod synth;
pub mod volume_io;

pub use distribution::{extract_foreground, EmpiricalDistribution, ForegroundPolicy};
pub use metrics_anatomy::{anatomy_preservation, LabelVolume};
pub use metrics_reference::{paired_metrics, SsimParams};
pub use metrics_wd::{classify, nwd, wasserstein_1d, WdMethod, WdPair};
pub use volume_io::{load_volume, write_volume, VoxelGrid};
