//! Synthetic multi-site phantoms and a histogram-matching baseline harmonizer.
//!
//! Phantoms are disjoint spheres of Gaussian intensity on a zero background.
//! A per-site monotone transform `v -> gain * v^gamma + bias` emulates the
//! acquisition protocol. Histogram matching remaps foreground intensities only,
//! so the foreground set (and any segmentation derived from it) is unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::distribution::{extract_foreground, DistributionError, ForegroundPolicy};
use crate::metrics_anatomy::{AnatomyError, LabelVolume};
use crate::volume_io::{write_volume, VolumeError, VoxelGrid};

/// Lowest intensity a phantom foreground voxel may take.
pub const INTENSITY_FLOOR: f64 = 1e-3;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;

/// Counter-based generator: the `k`-th draw of stream `seed` is the SplitMix64
/// finalizer applied to `seed + (k + 1) * 0x9E3779B97F4A7C15`.
///
/// Only integer arithmetic and exact float conversions are involved, so
/// draws are identical on every platform and independent of evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn u64_at(&self, counter: u64) -> u64 {
        let mut z = self
            .seed
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform_at(&self, counter: u64) -> f64 {
        (self.u64_at(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Approximately standard normal: Irwin-Hall sum of twelve uniforms minus 6.
    /// Uses draws `12 * counter .. 12 * counter + 12`.
    pub fn normal_at(&self, counter: u64) -> f64 {
        let base = counter.wrapping_mul(12);
        (0..12).map(|k| self.uniform_at(base + k)).sum::<f64>() - 6.0
    }

    /// Derived independent stream.
    pub fn fork(&self, stream: u64) -> CounterRng {
        CounterRng::new(self.u64_at(stream ^ 0x5DEE_CE66_D000_0000))
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("structures {0} and {1} overlap")]
    OverlappingStructures(u32, u32),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Foreground(#[from] DistributionError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Labels(#[from] AnatomyError),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereStructure {
    pub label: u32,
    pub name: String,
    /// Voxel coordinates.
    pub center: [f64; 3],
    /// Radius in voxels.
    pub radius: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteTransform {
    pub gain: f64,
    pub bias: f64,
    pub gamma: f64,
}

impl SiteTransform {
    pub const IDENTITY: SiteTransform = SiteTransform {
        gain: 1.0,
        bias: 0.0,
        gamma: 1.0,
    };

    pub fn apply(&self, v: f64) -> f64 {
        let v = v.max(INTENSITY_FLOOR);
        let curved = if self.gamma == 1.0 {
            v
        } else {
            v.powf(self.gamma)
        };
        (self.gain * curved + self.bias).max(INTENSITY_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub seed: u64,
    pub structures: Vec<SphereStructure>,
    pub site: SiteTransform,
}

impl PhantomSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.dims.contains(&0) {
            return bad(format!("dims {:?}", self.dims));
        }
        if self.site.gain.is_nan()
            || self.site.gain <= 0.0
            || self.site.gamma.is_nan()
            || self.site.gamma <= 0.0
        {
            return bad(format!(
                "site transform {:?} needs gain > 0 and gamma > 0",
                self.site
            ));
        }
        for s in &self.structures {
            if s.label == 0 {
                return bad(format!("structure {:?} uses the background label", s.name));
            }
            if s.radius.is_nan() || s.radius <= 0.0 || s.std.is_nan() || s.std < 0.0 {
                return bad(format!("structure {} radius/std", s.label));
            }
            for a in 0..3 {
                if s.center[a] - s.radius < 0.0
                    || s.center[a] + s.radius > (self.dims[a] - 1) as f64
                {
                    return bad(format!("structure {} leaves the grid on axis {a}", s.label));
                }
            }
        }
        Ok(())
    }

    /// Two-structure phantom ("GM" label 1, "WM" label 2) whose sphere radii
    /// vary with `subject_seed` by up to ±10%.
    pub fn two_structure(
        size: usize,
        subject_seed: u64,
        noise_seed: u64,
        site: SiteTransform,
    ) -> Self {
        let n = size as f64;
        let rng = CounterRng::new(subject_seed);
        let scale = |k| 0.9 + 0.2 * rng.uniform_at(k);
        let c = (n - 1.0) / 2.0;
        PhantomSpec {
            dims: [size; 3],
            spacing: [1.0; 3],
            seed: noise_seed,
            structures: vec![
                SphereStructure {
                    label: 1,
                    name: "GM".into(),
                    center: [0.28 * n, c, c],
                    radius: 0.16 * n * scale(0),
                    mean: 60.0,
                    std: 8.0,
                },
                SphereStructure {
                    label: 2,
                    name: "WM".into(),
                    center: [0.72 * n, c, c],
                    radius: 0.18 * n * scale(1),
                    mean: 100.0,
                    std: 6.0,
                },
            ],
            site,
        }
    }
}

/// Renders the phantom and its label volume.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(VoxelGrid, LabelVolume), SynthError> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let rng = CounterRng::new(spec.seed);
    let mut labels = vec![0u32; nx * ny * nz];
    let mut values = vec![0.0; nx * ny * nz];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                let p = [i as f64, j as f64, k as f64];
                for s in &spec.structures {
                    let d2: f64 = (0..3).map(|a| (p[a] - s.center[a]).powi(2)).sum();
                    if d2 > s.radius * s.radius {
                        continue;
                    }
                    if labels[idx] != 0 {
                        return Err(SynthError::OverlappingStructures(labels[idx], s.label));
                    }
                    labels[idx] = s.label;
                    let raw = s.mean + s.std * rng.normal_at(idx as u64);
                    values[idx] = spec.site.apply(raw);
                }
            }
        }
    }
    let legend: BTreeMap<u32, String> = spec
        .structures
        .iter()
        .map(|s| (s.label, s.name.clone()))
        .collect();
    let grid = VoxelGrid::new(spec.dims, spec.spacing, values)?;
    let seg = LabelVolume::new(spec.dims, spec.spacing, labels, legend)?;
    Ok((grid, seg))
}

/// Piecewise-linear reference quantile function, with sample `k` of `n`
/// placed at probability `(k + 0.5) / n` and flat beyond the end samples.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Remaps the foreground of `source` through `F_ref^-1 ∘ F_src`; background
/// voxels are copied unchanged. Tied source values map to the same output.
pub fn histogram_match(
    source: &VoxelGrid,
    reference: &VoxelGrid,
    policy: &ForegroundPolicy,
) -> Result<VoxelGrid, SynthError> {
    let reference_fg = extract_foreground(reference, policy)?;
    let mask = policy.mask_for(source)?;
    let n = source.voxel_count();
    let src = &source.values()[..n];
    let mut fg: Vec<usize> = (0..n).filter(|&k| mask[k]).collect();
    if fg.is_empty() {
        return Err(DistributionError::EmptyForeground.into());
    }
    fg.sort_by(|&a, &b| src[a].total_cmp(&src[b]));

    let mut out = source.values().to_vec();
    let total = fg.len() as f64;
    let mut start = 0;
    while start < fg.len() {
        let mut end = start + 1;
        while end < fg.len() && src[fg[end]] == src[fg[start]] {
            end += 1;
        }
        // Mid-rank of the tie block, as a probability.
        let q = (start + end) as f64 / 2.0 / total;
        let mapped = quantile(reference_fg.values(), q);
        for &k in &fg[start..end] {
            out[k] = mapped;
        }
        start = end;
    }
    Ok(source.with_values(out)?)
}

/// Transform used for the `index`-th synthetic site.
pub fn site_transform(index: usize) -> SiteTransform {
    match index {
        0 => SiteTransform::IDENTITY,
        1 => SiteTransform {
            gain: 1.6,
            bias: 15.0,
            gamma: 1.0,
        },
        k => SiteTransform {
            gain: 1.0 + 0.25 * k as f64,
            bias: 10.0 * k as f64,
            gamma: 1.0,
        },
    }
}

/// Site names: A, B, ..., Z, then S26, S27, ...
pub fn site_name(index: usize) -> String {
    if index < 26 {
        char::from(b'A' + index as u8).to_string()
    } else {
        format!("S{index}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub sites: usize,
    pub triplets: usize,
    pub seed: u64,
    pub size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sites: 2,
            triplets: 10,
            seed: 42,
            size: 64,
        }
    }
}

/// Manifest CSV header written by [`write_dataset`].
pub const MANIFEST_HEADER: &str =
    "id,input_path,target_path,pred_path,gt_path,seg_input_path,seg_pred_path,site_in,site_out,channel";

/// Writes a synthetic benchmark under `out`: per triplet an input, a target
/// (different subject, other site), a ground truth (same subject, other
/// site), a histogram-matched prediction and the two segmentations, plus
/// `manifest.csv`. Returns the manifest path.
pub fn write_dataset(out: &Path, cfg: &SynthConfig) -> Result<PathBuf, SynthError> {
    if cfg.sites < 2 {
        return Err(SynthError::InvalidSpec(
            "at least two sites are needed".into(),
        ));
    }
    if cfg.size < 8 {
        return Err(SynthError::InvalidSpec(format!(
            "volume size {} below 8",
            cfg.size
        )));
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let root = CounterRng::new(cfg.seed);
    let subjects = root.fork(1);
    let noise = root.fork(2);
    let phantom = |subject: usize, site: usize| {
        let spec = PhantomSpec::two_structure(
            cfg.size,
            subjects.u64_at(subject as u64),
            noise.u64_at((subject * cfg.sites + site) as u64),
            site_transform(site),
        );
        generate_phantom(&spec)
    };
    let fg = ForegroundPolicy::default();

    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for k in 0..cfg.triplets {
        let site_in = k % cfg.sites;
        let site_out = (k + 1) % cfg.sites;
        let (input, seg_input) = phantom(k, site_in)?;
        let (gt, _) = phantom(k, site_out)?;
        // Targets are other subjects scanned at the output site.
        let (target, _) = phantom(cfg.triplets + k, site_out)?;
        let pred = histogram_match(&input, &target, &fg)?;

        let id = format!("t{k:03}");
        let names = [
            format!("{id}_input.nii.gz"),
            format!("{id}_target.nii.gz"),
            format!("{id}_pred.nii.gz"),
            format!("{id}_gt.nii.gz"),
            format!("{id}_seg_input.nii.gz"),
            format!("{id}_seg_pred.nii.gz"),
        ];
        let seg_grid = seg_input.to_grid();
        // The matched prediction keeps every voxel's tissue class.
        let grids = [&input, &target, &pred, &gt, &seg_grid, &seg_grid];
        for (name, grid) in names.iter().zip(grids) {
            write_volume(grid, out.join(name))?;
        }
        let _ = writeln!(
            manifest,
            "{id},{},{},{},{},{},{},{},{},",
            names[0],
            names[1],
            names[2],
            names[3],
            names[4],
            names[5],
            site_name(site_in),
            site_name(site_out)
        );
    }
    let path = out.join("manifest.csv");
    fs::write(&path, manifest).map_err(io(&path))?;
    Ok(path)
}
