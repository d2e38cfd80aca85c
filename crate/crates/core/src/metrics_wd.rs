//! One-dimensional Wasserstein-1 distance and the normalized intensity
//! harmonization metrics built on it.
//!
//! For a triplet of input `i`, target `t` and prediction `p` the distances
//! `WD(i,p)` and `WD(t,p)` are divided by `WD(i,t)`, the distance separating
//! the two acquisition protocols:
//!
//! * `nwd_ip = 0, nwd_tp = 1`: the prediction still looks like the input,
//! * `nwd_ip = 1, nwd_tp = 0`: the prediction matches the target protocol,
//! * `nwd_ip > 1`: intensities were pushed past the target (over-correction).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{bin_index, EmpiricalDistribution, DEFAULT_BINS, DEFAULT_EXACT_CAP};

/// Relative size of the normalizer below which `WD(i,t)` counts as zero.
pub const NORMALIZER_EPS: f64 = 1e-9;
/// Default half-width of the verdict bands around 0 and 1.
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WdError {
    #[error(
        "WD(i,t) = {wd_it} is below {eps}: input and target protocols are \
         indistinguishable, normalization undefined"
    )]
    DegenerateNormalizer { wd_it: f64, eps: f64 },
    #[error("binned distance needs at least one bin")]
    NoBins,
}

/// Exact W1 between two weighted empirical distributions.
///
/// Walks the merged breakpoints of both cumulative weight sequences and
/// integrates `|Fa^-1(q) - Fb^-1(q)|` over each constant piece. The loop is
/// written symmetrically so `W(a,b)` and `W(b,a)` are bitwise equal.
pub fn wasserstein_1d(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (va, vb) = (a.values(), b.values());
    let (ca, cb) = (a.cumulative(), b.cumulative());
    let (mut i, mut j) = (0usize, 0usize);
    let mut q = 0.0;
    let mut total = 0.0;
    while i < va.len() && j < vb.len() {
        let next = ca[i].min(cb[j]);
        total += (next - q) * (va[i] - vb[j]).abs();
        q = next;
        if ca[i] == next {
            i += 1;
        }
        if cb[j] == next {
            j += 1;
        }
    }
    total
}

/// W1 between the binned forms of `a` and `b` on a shared equal-width grid.
///
/// Mass in each bin sits at the bin center, so the distance is the
/// L1 norm of the CDF difference at interior edges times the bin width.
pub fn wasserstein_1d_binned(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    bins: usize,
    range: (f64, f64),
) -> Result<f64, WdError> {
    if bins == 0 {
        return Err(WdError::NoBins);
    }
    let (lo, hi) = range;
    if hi <= lo {
        // Everything sits on a single point.
        return Ok(0.0);
    }
    let mass = |d: &EmpiricalDistribution| {
        let mut m = vec![0.0f64; bins];
        for (k, &v) in d.values().iter().enumerate() {
            m[bin_index(v, lo, hi, bins)] += d.weight(k);
        }
        m
    };
    let (ma, mb) = (mass(a), mass(b));
    let width = (hi - lo) / bins as f64;
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut total = 0.0;
    for (x, y) in ma[..bins - 1].iter().zip(&mb[..bins - 1]) {
        fa += x;
        fb += y;
        total += (fa - fb).abs();
    }
    Ok(total * width)
}

/// How distances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum WdMethod {
    /// Exact unless the three distributions together exceed `exact_cap` samples.
    Auto {
        bins: usize,
        exact_cap: usize,
    },
    Exact,
    Binned {
        bins: usize,
    },
}

impl Default for WdMethod {
    fn default() -> Self {
        WdMethod::Auto {
            bins: DEFAULT_BINS,
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

/// Distances for one input/target/prediction triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WdPair {
    pub wd_ip: f64,
    pub wd_tp: f64,
    pub wd_it: f64,
    pub nwd_ip: f64,
    pub nwd_tp: f64,
}

/// Computes `WD(i,p)`, `WD(t,p)`, `WD(i,t)` and their normalized forms.
pub fn nwd(
    input: &EmpiricalDistribution,
    target: &EmpiricalDistribution,
    pred: &EmpiricalDistribution,
    method: WdMethod,
) -> Result<WdPair, WdError> {
    let lo = input.min().min(target.min()).min(pred.min());
    let hi = input.max().max(target.max()).max(pred.max());
    let total = input.len() + target.len() + pred.len();
    let binned = match method {
        WdMethod::Exact => None,
        WdMethod::Binned { bins } => Some(bins),
        WdMethod::Auto { bins, exact_cap } => (total > exact_cap).then_some(bins),
    };
    let dist = |a: &EmpiricalDistribution, b: &EmpiricalDistribution| match binned {
        None => Ok(wasserstein_1d(a, b)),
        Some(bins) => wasserstein_1d_binned(a, b, bins, (lo, hi)),
    };
    let wd_it = dist(input, target)?;
    let eps = NORMALIZER_EPS * (hi - lo);
    if wd_it <= eps {
        return Err(WdError::DegenerateNormalizer { wd_it, eps });
    }
    let wd_ip = dist(input, pred)?;
    let wd_tp = dist(target, pred)?;
    Ok(WdPair {
        wd_ip,
        wd_tp,
        wd_it,
        nwd_ip: wd_ip / wd_it,
        nwd_tp: wd_tp / wd_it,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    NoHarmonization,
    Perfect,
    Partial,
    OverCorrected,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictKind::NoHarmonization => "NoHarmonization",
            VerdictKind::Perfect => "Perfect",
            VerdictKind::Partial => "Partial",
            VerdictKind::OverCorrected => "OverCorrected",
        })
    }
}

impl FromStr for VerdictKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NoHarmonization" => Ok(VerdictKind::NoHarmonization),
            "Perfect" => Ok(VerdictKind::Perfect),
            "Partial" => Ok(VerdictKind::Partial),
            "OverCorrected" => Ok(VerdictKind::OverCorrected),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonizationVerdict {
    pub kind: VerdictKind,
    pub tolerance: f64,
}

/// Buckets a pair into the interpretation bands; `tol` should lie in (0, 0.5).
pub fn classify(pair: &WdPair, tol: f64) -> HarmonizationVerdict {
    debug_assert!(tol > 0.0 && tol < 0.5, "tolerance {tol} outside (0, 0.5)");
    let (ip, tp) = (pair.nwd_ip, pair.nwd_tp);
    let kind = if ip <= tol && (tp - 1.0).abs() <= tol {
        VerdictKind::NoHarmonization
    } else if (ip - 1.0).abs() <= tol && tp <= tol {
        VerdictKind::Perfect
    } else if ip > 1.0 + tol {
        VerdictKind::OverCorrected
    } else {
        VerdictKind::Partial
    };
    HarmonizationVerdict {
        kind,
        tolerance: tol,
    }
}
