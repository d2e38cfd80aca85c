//! Paired reference metrics (MAE, MSE, PSNR, 3-D SSIM) between a prediction
//! and its ground truth, restricted to foreground.
//!
//! Both images are min-max normalized with the same affine map, taken from
//! the joint extremes of both images over the union of their foregrounds.
//! MAE and MSE average over that union. SSIM averages the local index over
//! every window lying fully inside the grid whose center is a union
//! foreground voxel; windows are cubic with uniform weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{DistributionError, ForegroundPolicy};
use crate::volume_io::VoxelGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("image dims differ: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("neither image has a foreground voxel")]
    EmptyForeground,
    #[error("joint foreground intensity range is degenerate (min == max == {0})")]
    DegenerateRange(f64),
    #[error("no {window}^3 window fits inside dims {dims:?} with a foreground center")]
    NoFullWindow { window: usize, dims: [usize; 3] },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Foreground(#[from] DistributionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<(), ReferenceError> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(ReferenceError::InvalidParams(format!(
                "window {} must be odd and >= 3",
                self.window
            )));
        }
        for (name, v) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("dynamic range", self.dynamic_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ReferenceError::InvalidParams(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedMetricRow {
    pub ssim: f64,
    /// `+inf` when the images agree exactly.
    #[serde(with = "crate::serde_util")]
    pub psnr_db: f64,
    pub mae: f64,
    pub mse: f64,
}

/// PSNR in dB for dynamic range `l`; `+inf` when `mse == 0`.
pub fn psnr(mse: f64, l: f64) -> f64 {
    if mse > 0.0 {
        10.0 * (l * l / mse).log10()
    } else {
        f64::INFINITY
    }
}

pub fn paired_metrics(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    policy: &ForegroundPolicy,
    params: &SsimParams,
) -> Result<PairedMetricRow, ReferenceError> {
    params.validate()?;
    if pred.dims() != gt.dims() {
        return Err(ReferenceError::DimsMismatch(pred.dims(), gt.dims()));
    }
    let n = pred.voxel_count();
    let (xs, ys) = (&pred.values()[..n], &gt.values()[..n]);
    let fg_pred = policy.mask_for(pred)?;
    let fg_gt = policy.mask_for(gt)?;
    let union: Vec<bool> = fg_pred.iter().zip(&fg_gt).map(|(a, b)| *a || *b).collect();

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut fg_count = 0usize;
    for k in (0..n).filter(|&k| union[k]) {
        lo = lo.min(xs[k]).min(ys[k]);
        hi = hi.max(xs[k]).max(ys[k]);
        fg_count += 1;
    }
    if fg_count == 0 {
        return Err(ReferenceError::EmptyForeground);
    }
    if hi <= lo {
        return Err(ReferenceError::DegenerateRange(lo));
    }
    let range = hi - lo;
    let x: Vec<f64> = xs.iter().map(|v| (v - lo) / range).collect();
    let y: Vec<f64> = ys.iter().map(|v| (v - lo) / range).collect();

    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for k in (0..n).filter(|&k| union[k]) {
        let d = x[k] - y[k];
        abs_sum += d.abs();
        sq_sum += d * d;
    }
    let mae = abs_sum / fg_count as f64;
    let mse = sq_sum / fg_count as f64;

    let ssim = mean_ssim(&x, &y, &union, pred.dims(), params)?;
    Ok(PairedMetricRow {
        ssim,
        psnr_db: psnr(mse, params.dynamic_range),
        mae,
        mse,
    })
}

/// Sums over every full `w`-long window along one axis; output shrinks on that axis.
fn box_sum_axis(input: &[f64], dims: [usize; 3], axis: usize, w: usize) -> (Vec<f64>, [usize; 3]) {
    let mut out_dims = dims;
    out_dims[axis] = dims[axis] + 1 - w;
    let [ox, oy, oz] = out_dims;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let mut out = Vec::with_capacity(ox * oy * oz);
    for k in 0..oz {
        for j in 0..oy {
            for i in 0..ox {
                let base = i + dims[0] * (j + dims[1] * k);
                let mut s = 0.0;
                for d in 0..w {
                    s += input[base + d * stride];
                }
                out.push(s);
            }
        }
    }
    (out, out_dims)
}

fn box_sum(input: &[f64], dims: [usize; 3], w: usize) -> Vec<f64> {
    let (a, da) = box_sum_axis(input, dims, 0, w);
    let (b, db) = box_sum_axis(&a, da, 1, w);
    box_sum_axis(&b, db, 2, w).0
}

/// Local SSIM from window sums over `count` voxels.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ssim_from_sums(
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
    count: f64,
    c1: f64,
    c2: f64,
) -> f64 {
    let mu_x = sx / count;
    let mu_y = sy / count;
    let var_x = sxx / count - mu_x * mu_x;
    let var_y = syy / count - mu_y * mu_y;
    let cov = sxy / count - mu_x * mu_y;
    let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
    let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
    num / den
}

fn mean_ssim(
    x: &[f64],
    y: &[f64],
    foreground: &[bool],
    dims: [usize; 3],
    params: &SsimParams,
) -> Result<f64, ReferenceError> {
    let w = params.window;
    let none = ReferenceError::NoFullWindow { window: w, dims };
    if dims.iter().any(|&d| d < w) {
        return Err(none);
    }
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let sx = box_sum(x, dims, w);
    let sy = box_sum(y, dims, w);
    let sxx = box_sum(&xx, dims, w);
    let syy = box_sum(&yy, dims, w);
    let sxy = box_sum(&xy, dims, w);

    let r = w / 2;
    let [ox, oy, oz] = [dims[0] + 1 - w, dims[1] + 1 - w, dims[2] + 1 - w];
    let count = (w * w * w) as f64;
    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    let mut windows = 0usize;
    for k in 0..oz {
        for j in 0..oy {
            for i in 0..ox {
                let center = (i + r) + dims[0] * ((j + r) + dims[1] * (k + r));
                if !foreground[center] {
                    continue;
                }
                let o = i + ox * (j + oy * k);
                total += ssim_from_sums(sx[o], sy[o], sxx[o], syy[o], sxy[o], count, c1, c2);
                windows += 1;
            }
        }
    }
    if windows == 0 {
        return Err(none);
    }
    Ok(total / windows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, f: impl Fn(usize) -> f64) -> VoxelGrid {
        VoxelGrid::new([n; 3], [1.0; 3], (0..n * n * n).map(f).collect()).unwrap()
    }

    #[test]
    fn identity_pair() {
        let a = cube(8, |k| 1.0 + (k % 13) as f64);
        let r =
            paired_metrics(&a, &a, &ForegroundPolicy::default(), &SsimParams::default()).unwrap();
        assert_eq!((r.mae, r.mse, r.ssim), (0.0, 0.0, 1.0));
        assert_eq!(r.psnr_db, f64::INFINITY);
    }

    #[test]
    fn psnr_formula() {
        assert!((psnr(0.01, 1.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn constant_volumes_at_zero_and_one() {
        let a = cube(8, |_| 2.0);
        let b = cube(8, |_| 5.0);
        let p = SsimParams::default();
        let r = paired_metrics(&a, &b, &ForegroundPolicy::default(), &p).unwrap();
        let expected = p.c1() / (1.0 + p.c1());
        assert!((r.ssim - expected).abs() < 1e-12, "{}", r.ssim);
        assert!((expected - 9.999e-5).abs() < 1e-8);
        assert_eq!((r.mae, r.mse), (1.0, 1.0));
        assert_eq!(r.psnr_db, 0.0);
    }

    #[test]
    fn error_paths() {
        let p = SsimParams::default();
        let fg = ForegroundPolicy::default();
        let a = cube(8, |_| 1.0);
        let b = VoxelGrid::new([8, 8, 4], [1.0; 3], vec![1.0; 256]).unwrap();
        assert!(matches!(
            paired_metrics(&a, &b, &fg, &p),
            Err(ReferenceError::DimsMismatch(..))
        ));
        let z = cube(8, |_| 0.0);
        assert_eq!(
            paired_metrics(&z, &z, &fg, &p),
            Err(ReferenceError::EmptyForeground)
        );
        assert!(matches!(
            paired_metrics(&a, &a, &fg, &p),
            Err(ReferenceError::DegenerateRange(_))
        ));
        let small = cube(4, |k| k as f64 + 1.0);
        assert!(matches!(
            paired_metrics(&small, &small, &fg, &p),
            Err(ReferenceError::NoFullWindow { .. })
        ));
        let bad = SsimParams { window: 4, ..p };
        assert!(matches!(
            paired_metrics(&a, &a, &fg, &bad),
            Err(ReferenceError::InvalidParams(_))
        ));
    }

    #[test]
    fn background_in_one_image_counts_in_union() {
        // Voxel 0 is tissue in gt only; it still enters MAE.
        let mut gv = vec![1.0; 512];
        gv[0] = 3.0;
        let mut pv = vec![1.0; 512];
        pv[0] = 0.0;
        let g = VoxelGrid::new([8; 3], [1.0; 3], gv).unwrap();
        let p = VoxelGrid::new([8; 3], [1.0; 3], pv).unwrap();
        let r =
            paired_metrics(&p, &g, &ForegroundPolicy::default(), &SsimParams::default()).unwrap();
        // Joint range [0, 3]; only voxel 0 differs, by 1.0 after normalization.
        assert!((r.mae - 1.0 / 512.0).abs() < 1e-15);
    }
}
