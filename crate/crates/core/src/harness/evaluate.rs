//! Per-record evaluation with failure containment.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::TripletRecord;
use super::HarnessError;
use crate::distribution::{extract_foreground, ForegroundPolicy};
use crate::metrics_anatomy::{anatomy_preservation, ApReport, ApWeighting, LabelVolume};
use crate::metrics_reference::{paired_metrics, PairedMetricRow, SsimParams};
use crate::metrics_wd::{classify, nwd, VerdictKind, WdMethod, WdPair, DEFAULT_TOLERANCE};
use crate::volume_io::{load_volume, VoxelGrid};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub foreground: ForegroundPolicy,
    pub wd_method: WdMethod,
    pub tolerance: f64,
    pub ssim: SsimParams,
    pub ap_weighting: ApWeighting,
    /// Structures to score; `None` scores every nonzero label as `label-<k>`.
    pub legend: Option<BTreeMap<u32, String>>,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            foreground: ForegroundPolicy::default(),
            wd_method: WdMethod::default(),
            tolerance: DEFAULT_TOLERANCE,
            ssim: SsimParams::default(),
            ap_weighting: ApWeighting::default(),
            legend: None,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Error(String),
}

/// Metrics for one (record, channel). Metric fields are populated only on
/// success, and only when the record supplied the inputs they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub id: String,
    pub channel: Option<usize>,
    pub site_in: String,
    pub site_out: String,
    pub status: RowStatus,
    pub wd: Option<WdPair>,
    pub verdict: Option<VerdictKind>,
    pub ap: Option<ApReport>,
    pub reference: Option<PairedMetricRow>,
}

impl EvaluationRow {
    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    fn failed(record: &TripletRecord, channel: Option<usize>, error: String) -> Self {
        EvaluationRow {
            id: record.id.clone(),
            channel,
            site_in: record.site_in.clone(),
            site_out: record.site_out.clone(),
            status: RowStatus::Error(error),
            wd: None,
            verdict: None,
            ap: None,
            reference: None,
        }
    }
}

fn load(path: &Path) -> Result<VoxelGrid, String> {
    load_volume(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn pick_channel(grid: &VoxelGrid, channel: Option<usize>, what: &str) -> Result<VoxelGrid, String> {
    match channel {
        None if grid.channel_count() == 1 => Ok(grid.clone()),
        None => Err(format!(
            "{what} has {} channels; set the manifest channel column",
            grid.channel_count()
        )),
        Some(c) if grid.channel_count() == 1 && c == 0 => Ok(grid.clone()),
        Some(c) => grid.channel(c).map_err(|e| format!("{what}: {e}")),
    }
}

struct Loaded {
    input: VoxelGrid,
    target: VoxelGrid,
    pred: VoxelGrid,
    gt: Option<VoxelGrid>,
    ap: Option<ApReport>,
}

fn load_record(record: &TripletRecord, config: &EvalConfig) -> Result<Loaded, String> {
    let input = load(&record.input_path)?;
    let target = load(&record.target_path)?;
    let pred = load(&record.pred_path)?;
    let gt = record.gt_path.as_deref().map(load).transpose()?;
    let ap = match (&record.seg_input_path, &record.seg_pred_path) {
        (Some(si), Some(sp)) => {
            let to_labels = |p: &Path| -> Result<LabelVolume, String> {
                let seg = LabelVolume::from_grid(&load(p)?)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
                Ok(match &config.legend {
                    Some(legend) => seg.select(legend),
                    None => seg,
                })
            };
            let report =
                anatomy_preservation(&to_labels(si)?, &to_labels(sp)?, config.ap_weighting)
                    .map_err(|e| format!("anatomy preservation: {e}"))?;
            Some(report)
        }
        _ => None,
    };
    Ok(Loaded {
        input,
        target,
        pred,
        gt,
        ap,
    })
}

fn evaluate_channel(
    record: &TripletRecord,
    loaded: &Loaded,
    channel: Option<usize>,
    config: &EvalConfig,
) -> Result<EvaluationRow, String> {
    let input = pick_channel(&loaded.input, channel, "input")?;
    let target = pick_channel(&loaded.target, channel, "target")?;
    let pred = pick_channel(&loaded.pred, channel, "pred")?;
    let fg = &config.foreground;
    let dist =
        |g: &VoxelGrid, what: &str| extract_foreground(g, fg).map_err(|e| format!("{what}: {e}"));
    let pair = nwd(
        &dist(&input, "input")?,
        &dist(&target, "target")?,
        &dist(&pred, "pred")?,
        config.wd_method,
    )
    .map_err(|e| e.to_string())?;
    let verdict = classify(&pair, config.tolerance).kind;
    let reference = match &loaded.gt {
        Some(gt) => {
            let gt = pick_channel(gt, channel, "gt")?;
            Some(
                paired_metrics(&pred, &gt, fg, &config.ssim)
                    .map_err(|e| format!("reference metrics: {e}"))?,
            )
        }
        None => None,
    };
    Ok(EvaluationRow {
        id: record.id.clone(),
        channel,
        site_in: record.site_in.clone(),
        site_out: record.site_out.clone(),
        status: RowStatus::Ok,
        wd: Some(pair),
        verdict: Some(verdict),
        ap: loaded.ap.clone(),
        reference,
    })
}

/// Rows for one record: one per channel when the record leaves `channel`
/// empty and the input has several channels, otherwise exactly one.
pub fn evaluate_record(record: &TripletRecord, config: &EvalConfig) -> Vec<EvaluationRow> {
    let loaded = match load_record(record, config) {
        Ok(l) => l,
        Err(e) => return vec![EvaluationRow::failed(record, record.channel, e)],
    };
    let channels: Vec<Option<usize>> = match record.channel {
        Some(c) => vec![Some(c)],
        None if loaded.input.channel_count() > 1 => {
            (0..loaded.input.channel_count()).map(Some).collect()
        }
        None => vec![None],
    };
    channels
        .into_iter()
        .map(|c| {
            evaluate_channel(record, &loaded, c, config)
                .unwrap_or_else(|e| EvaluationRow::failed(record, c, e))
        })
        .collect()
}

/// Evaluates every record on `config.workers` threads. Rows come back in
/// manifest order; the batch fails only when no row succeeds.
pub fn evaluate_all(
    records: &[TripletRecord],
    config: &EvalConfig,
) -> Result<Vec<EvaluationRow>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Workers(e.to_string()))?;
    let rows: Vec<EvaluationRow> = pool
        .install(|| {
            records
                .par_iter()
                .map(|r| evaluate_record(r, config))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    for row in &rows {
        if let RowStatus::Error(e) = &row.status {
            log::warn!("record {}: {e}", row.id);
        }
    }
    if rows.iter().any(EvaluationRow::is_ok) {
        Ok(rows)
    } else {
        Err(HarnessError::AllRecordsFailed(rows))
    }
}
