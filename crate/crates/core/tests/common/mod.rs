//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;

/// W1 between equal-size uniform samples: minimum mean cost over every
/// perfect matching (Heap's permutation walk).
pub fn w1_matching(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| {
        p.iter()
            .enumerate()
            .map(|(i, &j)| (a[i] - b[j]).abs())
            .sum::<f64>()
    };
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn ecdf(sample: &[f64], x: f64) -> f64 {
    sample.iter().filter(|&&v| v <= x).count() as f64 / sample.len() as f64
}

/// ∫ |F_a − F_b| over [lo, hi] by midpoint sums on `steps` cells per unit.
/// Exact when every jump of both CDFs sits on a cell edge.
pub fn w1_cdf_integral(a: &[f64], b: &[f64], lo: f64, hi: f64, steps: usize) -> f64 {
    let cells = ((hi - lo) * steps as f64).round() as usize;
    let h = 1.0 / steps as f64;
    (0..cells)
        .map(|k| {
            let x = lo + (k as f64 + 0.5) * h;
            (ecdf(a, x) - ecdf(b, x)).abs() * h
        })
        .sum()
}

/// Average ranks (1-based) by counting, quadratic.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-pass Pearson; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&brute_ranks(x), &brute_ranks(y))
}

/// Paired metrics computed straight from their definitions: joint min-max
/// scaling over the union foreground, then per-window SSIM with two-pass
/// moments over every full window centred on a foreground voxel.
pub struct RefOracle {
    pub mae: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn reference_oracle(
    pred: &[f64],
    gt: &[f64],
    dims: [usize; 3],
    threshold: f64,
    w: usize,
) -> RefOracle {
    let [nx, ny, nz] = dims;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let fg: Vec<bool> = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| *p > threshold || *g > threshold)
        .collect();
    let fg_vals = || (0..pred.len()).filter(|&k| fg[k]);
    let lo = fg_vals()
        .map(|k| pred[k].min(gt[k]))
        .fold(f64::INFINITY, f64::min);
    let hi = fg_vals()
        .map(|k| pred[k].max(gt[k]))
        .fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = pred.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let y: Vec<f64> = gt.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let count = fg_vals().count() as f64;
    let mae = fg_vals().map(|k| (x[k] - y[k]).abs()).sum::<f64>() / count;
    let mse = fg_vals().map(|k| (x[k] - y[k]).powi(2)).sum::<f64>() / count;
    let psnr = if mse > 0.0 {
        10.0 * (1.0 / mse).log10()
    } else {
        f64::INFINITY
    };

    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let half = w / 2;
    let mut total = 0.0;
    let mut windows = 0usize;
    for k in 0..=nz - w {
        for j in 0..=ny - w {
            for i in 0..=nx - w {
                if !fg[idx(i + half, j + half, k + half)] {
                    continue;
                }
                let mut px = Vec::with_capacity(w * w * w);
                let mut py = Vec::with_capacity(w * w * w);
                for dk in 0..w {
                    for dj in 0..w {
                        for di in 0..w {
                            px.push(x[idx(i + di, j + dj, k + dk)]);
                            py.push(y[idx(i + di, j + dj, k + dk)]);
                        }
                    }
                }
                let m = px.len() as f64;
                let mx = px.iter().sum::<f64>() / m;
                let my = py.iter().sum::<f64>() / m;
                let vx = px.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / m;
                let vy = py.iter().map(|v| (v - my).powi(2)).sum::<f64>() / m;
                let cov = px
                    .iter()
                    .zip(&py)
                    .map(|(a, b)| (a - mx) * (b - my))
                    .sum::<f64>()
                    / m;
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                windows += 1;
            }
        }
    }
    RefOracle {
        mae,
        mse,
        psnr,
        ssim: total / windows as f64,
    }
}

/// On-disk voxel encodings used by the fixture builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl RawType {
    pub const ALL: [RawType; 5] = [
        RawType::U8,
        RawType::I16,
        RawType::I32,
        RawType::F32,
        RawType::F64,
    ];

    pub fn code(self) -> i16 {
        match self {
            RawType::U8 => 2,
            RawType::I16 => 4,
            RawType::I32 => 8,
            RawType::F32 => 16,
            RawType::F64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            RawType::U8 => 1,
            RawType::I16 => 2,
            RawType::F32 | RawType::I32 => 4,
            RawType::F64 => 8,
        }
    }
}

/// A NIfTI-1 file described field by field, so tests can break any of them.
#[derive(Debug, Clone)]
pub struct NiftiFixture {
    pub big_endian: bool,
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub pixdim: [f32; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub magic: [u8; 4],
    pub raw: RawType,
    pub values: Vec<f64>,
}

impl NiftiFixture {
    pub fn new(dims: &[usize], raw: RawType, values: Vec<f64>) -> Self {
        let mut dim = [1i16; 8];
        dim[0] = dims.len() as i16;
        for (k, d) in dims.iter().enumerate() {
            dim[k + 1] = *d as i16;
        }
        let mut pixdim = [1f32; 8];
        pixdim[0] = 1.0;
        pixdim[1] = 0.5;
        pixdim[2] = 1.25;
        NiftiFixture {
            big_endian: false,
            sizeof_hdr: 348,
            dim,
            pixdim,
            datatype: raw.code(),
            bitpix: (raw.bytes() * 8) as i16,
            vox_offset: 352.0,
            scl_slope: 0.0,
            scl_inter: 0.0,
            magic: *b"n+1\0",
            raw,
            values,
        }
    }

    pub fn bytes(&self) -> Vec<u8> {
        let be = self.big_endian;
        let mut h = vec![0u8; 348];
        let put = |h: &mut Vec<u8>, at: usize, b: &[u8]| h[at..at + b.len()].copy_from_slice(b);
        let i32b = |v: i32| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        let i16b = |v: i16| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        let f32b = |v: f32| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        put(&mut h, 0, &i32b(self.sizeof_hdr));
        for (k, d) in self.dim.iter().enumerate() {
            put(&mut h, 40 + 2 * k, &i16b(*d));
        }
        put(&mut h, 70, &i16b(self.datatype));
        put(&mut h, 72, &i16b(self.bitpix));
        for (k, p) in self.pixdim.iter().enumerate() {
            put(&mut h, 76 + 4 * k, &f32b(*p));
        }
        put(&mut h, 108, &f32b(self.vox_offset));
        put(&mut h, 112, &f32b(self.scl_slope));
        put(&mut h, 116, &f32b(self.scl_inter));
        put(&mut h, 123, &[10]);
        put(&mut h, 344, &self.magic);
        let offset = (self.vox_offset.max(348.0)) as usize;
        h.resize(offset, 0);
        for v in &self.values {
            match self.raw {
                RawType::U8 => h.push(*v as u8),
                RawType::I16 => h.extend(i16b(*v as i16)),
                RawType::I32 => h.extend(if be {
                    (*v as i32).to_be_bytes()
                } else {
                    (*v as i32).to_le_bytes()
                }),
                RawType::F32 => h.extend(f32b(*v as f32)),
                RawType::F64 => h.extend(if be { v.to_be_bytes() } else { v.to_le_bytes() }),
            }
        }
        h
    }

    /// Values a reader must produce after scaling.
    pub fn expected(&self) -> Vec<f64> {
        let slope = self.scl_slope as f64;
        let inter = self.scl_inter as f64;
        self.values
            .iter()
            .map(|v| {
                let raw = match self.raw {
                    RawType::F32 => *v as f32 as f64,
                    _ => *v,
                };
                if slope != 0.0 {
                    slope * raw + inter
                } else {
                    raw
                }
            })
            .collect()
    }
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).unwrap();
    enc.finish().unwrap()
}
