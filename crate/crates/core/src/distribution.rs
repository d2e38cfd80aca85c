//! Background removal and the foreground intensity distribution.

use std::sync::Arc;

use thiserror::Error;

use crate::metrics_anatomy::LabelVolume;
use crate::volume_io::VoxelGrid;

/// Bin count used by the binned Wasserstein path.
pub const DEFAULT_BINS: usize = 4096;
/// Combined sample count above which the binned path replaces the exact one.
pub const DEFAULT_EXACT_CAP: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("no voxel passes the foreground policy")]
    EmptyForeground,
    #[error("mask dims {mask:?} differ from image dims {image:?}")]
    MaskDimsMismatch { mask: [usize; 3], image: [usize; 3] },
    #[error("threshold must be finite, got {0}")]
    NonFiniteThreshold(f64),
    #[error("invalid histogram range ({lo}, {hi}) with {bins} bins")]
    InvalidRange { lo: f64, hi: f64, bins: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// How background voxels are removed before any metric is computed.
#[derive(Debug, Clone)]
pub enum ForegroundPolicy {
    /// Voxels strictly greater than the threshold are foreground.
    Threshold(f64),
    /// Voxels with a nonzero mask label are foreground.
    Mask(Arc<LabelVolume>),
}

impl Default for ForegroundPolicy {
    fn default() -> Self {
        ForegroundPolicy::Threshold(0.0)
    }
}

impl ForegroundPolicy {
    /// Foreground flags for the first channel of `grid`.
    pub fn mask_for(&self, grid: &VoxelGrid) -> Result<Vec<bool>, DistributionError> {
        let n = grid.voxel_count();
        let values = &grid.values()[..n];
        match self {
            ForegroundPolicy::Threshold(t) => {
                if !t.is_finite() {
                    return Err(DistributionError::NonFiniteThreshold(*t));
                }
                Ok(values.iter().map(|v| v > t).collect())
            }
            ForegroundPolicy::Mask(mask) => {
                if mask.dims() != grid.dims() {
                    return Err(DistributionError::MaskDimsMismatch {
                        mask: mask.dims(),
                        image: grid.dims(),
                    });
                }
                Ok(mask.labels().iter().map(|&l| l != 0).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Uniform,
    Explicit(Vec<f64>),
}

/// Sorted samples with positive weights summing to one.
///
/// Equal-weight samples (the common case for voxel data) store no weight
/// vector; their cumulative weights are computed as `k / n` directly so that
/// breakpoints shared by two distributions compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Weights,
}

impl EmpiricalDistribution {
    pub fn uniform(mut values: Vec<f64>) -> Result<Self, DistributionError> {
        if values.is_empty() {
            return Err(DistributionError::EmptyForeground);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DistributionError::InvalidDistribution(
                "non-finite sample".into(),
            ));
        }
        values.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalDistribution {
            values,
            weights: Weights::Uniform,
        })
    }

    /// Builds a weighted distribution; weights are normalized to sum to one.
    pub fn weighted(samples: Vec<(f64, f64)>) -> Result<Self, DistributionError> {
        if samples.is_empty() {
            return Err(DistributionError::EmptyForeground);
        }
        if samples
            .iter()
            .any(|(v, w)| !v.is_finite() || !(*w > 0.0 && w.is_finite()))
        {
            return Err(DistributionError::InvalidDistribution(
                "samples must be finite with positive finite weights".into(),
            ));
        }
        let mut samples = samples;
        samples.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = samples.iter().map(|s| s.1).sum();
        let (values, weights) = samples.into_iter().map(|(v, w)| (v, w / total)).unzip();
        Ok(EmpiricalDistribution {
            values,
            weights: Weights::Explicit(weights),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.weights, Weights::Uniform)
    }

    pub fn weight(&self, k: usize) -> f64 {
        match &self.weights {
            Weights::Uniform => 1.0 / self.values.len() as f64,
            Weights::Explicit(w) => w[k],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// Cumulative weight up to and including sample `k`; the last entry is exactly 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let n = self.values.len();
        match &self.weights {
            Weights::Uniform => (1..=n).map(|k| k as f64 / n as f64).collect(),
            Weights::Explicit(w) => {
                let mut acc = 0.0;
                let mut c: Vec<f64> = w
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                c[n - 1] = 1.0;
                c
            }
        }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, DistributionError> {
        match &self.weights {
            Weights::Uniform => Self::uniform(self.values.iter().map(|&v| f(v)).collect()),
            Weights::Explicit(w) => Self::weighted(
                self.values
                    .iter()
                    .zip(w)
                    .map(|(&v, &w)| (f(v), w))
                    .collect(),
            ),
        }
    }
}

/// Sorted foreground intensities of the first channel of `grid`.
pub fn extract_foreground(
    grid: &VoxelGrid,
    policy: &ForegroundPolicy,
) -> Result<EmpiricalDistribution, DistributionError> {
    let mask = policy.mask_for(grid)?;
    let values: Vec<f64> = grid.values()[..grid.voxel_count()]
        .iter()
        .zip(&mask)
        .filter_map(|(v, &fg)| fg.then_some(*v))
        .collect();
    EmpiricalDistribution::uniform(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<f64>,
}

impl Histogram {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.edges[self.edges.len() - 1] - self.edges[0]) / self.bins() as f64
    }

    /// Bin midpoints.
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// Index of the bin holding `v` for equal-width bins over `[lo, hi]`;
/// values outside the range land in the boundary bins.
pub(crate) fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if v <= lo {
        return 0;
    }
    if v >= hi {
        return bins - 1;
    }
    let k = ((v - lo) / (hi - lo) * bins as f64) as usize;
    k.min(bins - 1)
}

/// Bins `dist` into `bins` equal-width half-open bins over `[lo, hi]`, the
/// last bin closed.
pub fn to_histogram(
    dist: &EmpiricalDistribution,
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram, DistributionError> {
    let (lo, hi) = range;
    if bins == 0 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(DistributionError::InvalidRange { lo, hi, bins });
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    edges[bins] = hi;
    let mut counts = vec![0.0; bins];
    for (k, &v) in dist.values().iter().enumerate() {
        counts[bin_index(v, lo, hi, bins)] += dist.weight(k);
    }
    Ok(Histogram { edges, counts })
}
