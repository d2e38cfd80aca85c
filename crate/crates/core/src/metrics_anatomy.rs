//! Anatomy preservation: relative volume change of segmented structures
//! between the input image and its harmonized prediction.
//!
//! For each structure `AP = 1 - |vol(p) - vol(i)| / vol(i)`. Values are never
//! clamped; a negative AP means the structure more than doubled in volume.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume_io::VoxelGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnatomyError {
    #[error("structure {0:?} has zero volume in the input segmentation")]
    ZeroInputVolume(String),
    #[error("the two segmentations share no labelled structure")]
    NoCommonStructures,
    #[error("voxel {index} holds {value}, which is not a nonnegative integer label")]
    NonIntegerLabel { index: usize, value: f64 },
    #[error("invalid label volume: {0}")]
    InvalidLabels(String),
}

/// Integer segmentation with a label-to-name legend; label 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    spacing: [f64; 3],
    labels: Vec<u32>,
    legend: BTreeMap<u32, String>,
}

pub fn default_structure_name(label: u32) -> String {
    format!("label-{label}")
}

impl LabelVolume {
    /// Nonzero labels missing from `legend` are named `label-<k>`.
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        labels: Vec<u32>,
        mut legend: BTreeMap<u32, String>,
    ) -> Result<Self, AnatomyError> {
        if dims.contains(&0) || labels.len() != dims[0] * dims[1] * dims[2] {
            return Err(AnatomyError::InvalidLabels(format!(
                "{} labels for dims {dims:?}",
                labels.len()
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(AnatomyError::InvalidLabels(format!(
                "spacing {spacing:?} must be positive"
            )));
        }
        legend.remove(&0);
        let present: BTreeSet<u32> = labels.iter().copied().filter(|&l| l != 0).collect();
        for l in present {
            legend.entry(l).or_insert_with(|| default_structure_name(l));
        }
        Ok(LabelVolume {
            dims,
            spacing,
            labels,
            legend,
        })
    }

    /// Reads labels from the first channel of an intensity grid.
    pub fn from_grid(grid: &VoxelGrid) -> Result<Self, AnatomyError> {
        let n = grid.voxel_count();
        let labels = grid.values()[..n]
            .iter()
            .enumerate()
            .map(|(index, &v)| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(AnatomyError::NonIntegerLabel { index, value: v })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        LabelVolume::new(grid.dims(), grid.spacing(), labels, BTreeMap::new())
    }

    /// Keeps only the structures named in `legend`; all other labels become background.
    pub fn select(&self, legend: &BTreeMap<u32, String>) -> LabelVolume {
        let dropped: BTreeSet<u32> = self
            .legend
            .keys()
            .filter(|l| !legend.contains_key(l))
            .copied()
            .collect();
        if !dropped.is_empty() {
            log::info!("treating unlisted labels {dropped:?} as background");
        }
        let labels = self
            .labels
            .iter()
            .map(|l| if legend.contains_key(l) { *l } else { 0 })
            .collect();
        let mut legend = legend.clone();
        legend.remove(&0);
        LabelVolume {
            dims: self.dims,
            spacing: self.spacing,
            labels,
            legend,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn legend(&self) -> &BTreeMap<u32, String> {
        &self.legend
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn to_grid(&self) -> VoxelGrid {
        VoxelGrid::new(
            self.dims,
            self.spacing,
            self.labels.iter().map(|&l| l as f64).collect(),
        )
        .expect("label volume geometry is validated on construction")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureVolume {
    pub label: u32,
    pub name: String,
    pub volume_mm3: f64,
}

/// Physical volume of every legend structure, in legend order.
pub fn structure_volumes(seg: &LabelVolume) -> Vec<StructureVolume> {
    let mut counts: BTreeMap<u32, u64> = seg.legend.keys().map(|&l| (l, 0)).collect();
    for l in &seg.labels {
        if let Some(c) = counts.get_mut(l) {
            *c += 1;
        }
    }
    let voxel = seg.voxel_volume();
    seg.legend
        .iter()
        .map(|(&label, name)| StructureVolume {
            label,
            name: name.clone(),
            volume_mm3: counts[&label] as f64 * voxel,
        })
        .collect()
}

fn volumes_by_name(seg: &LabelVolume) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for s in structure_volumes(seg) {
        *out.entry(s.name).or_insert(0.0) += s.volume_mm3;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApWeighting {
    #[default]
    Unweighted,
    /// Mean weighted by each structure's input volume.
    InputVolume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub per_structure: BTreeMap<String, f64>,
    pub mean_ap: f64,
    pub weighting: ApWeighting,
    /// Structures whose AP fell below zero.
    pub negative: Vec<String>,
}

/// AP for one structure volume pair.
pub fn ap_value(vol_input: f64, vol_pred: f64) -> f64 {
    1.0 - (vol_pred - vol_input).abs() / vol_input
}

/// AP per structure shared by both legends (matched by structure name) and
/// their mean.
pub fn anatomy_preservation(
    seg_input: &LabelVolume,
    seg_pred: &LabelVolume,
    weighting: ApWeighting,
) -> Result<ApReport, AnatomyError> {
    if seg_input.dims != seg_pred.dims {
        log::warn!(
            "segmentation grids differ ({:?} vs {:?}); comparing physical volumes",
            seg_input.dims,
            seg_pred.dims
        );
    }
    let vi = volumes_by_name(seg_input);
    let vp = volumes_by_name(seg_pred);
    let mut per_structure = BTreeMap::new();
    let mut weights = Vec::new();
    for (name, &vol_i) in &vi {
        let Some(&vol_p) = vp.get(name) else { continue };
        if vol_i <= 0.0 {
            return Err(AnatomyError::ZeroInputVolume(name.clone()));
        }
        per_structure.insert(name.clone(), ap_value(vol_i, vol_p));
        weights.push(vol_i);
    }
    if per_structure.is_empty() {
        return Err(AnatomyError::NoCommonStructures);
    }
    let mean_ap = match weighting {
        ApWeighting::Unweighted => per_structure.values().sum::<f64>() / per_structure.len() as f64,
        ApWeighting::InputVolume => {
            let total: f64 = weights.iter().sum();
            per_structure
                .values()
                .zip(&weights)
                .map(|(ap, w)| ap * w)
                .sum::<f64>()
                / total
        }
    };
    let negative: Vec<String> = per_structure
        .iter()
        .filter(|(_, &ap)| ap < 0.0)
        .map(|(n, _)| n.clone())
        .collect();
    if !negative.is_empty() {
        log::warn!("negative AP for {negative:?}: structure volume more than doubled");
    }
    Ok(ApReport {
        per_structure,
        mean_ap,
        weighting,
        negative,
    })
}
