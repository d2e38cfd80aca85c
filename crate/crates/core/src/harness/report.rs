//! Site-wise summaries, report emission, and the per-row results file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluate::{EvaluationRow, RowStatus};
use super::HarnessError;
use crate::metrics_anatomy::{ApReport, ApWeighting};
use crate::metrics_reference::PairedMetricRow;
use crate::metrics_wd::{VerdictKind, WdPair};
use crate::stats::{mean_std, MetricSeries};

/// Reported metrics, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Ssim,
    Psnr,
    Mae,
    Mse,
    NwdIp,
    NwdTp,
    Ap,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Ssim,
        Metric::Psnr,
        Metric::Mae,
        Metric::Mse,
        Metric::NwdIp,
        Metric::NwdTp,
        Metric::Ap,
    ];

    /// Column name in results files.
    pub fn key(self) -> &'static str {
        match self {
            Metric::Ssim => "ssim",
            Metric::Psnr => "psnr",
            Metric::Mae => "mae",
            Metric::Mse => "mse",
            Metric::NwdIp => "nwd_ip",
            Metric::NwdTp => "nwd_tp",
            Metric::Ap => "ap",
        }
    }

    /// Column heading in markdown tables.
    pub fn title(self) -> &'static str {
        match self {
            Metric::Ssim => "SSIM",
            Metric::Psnr => "PSNR",
            Metric::Mae => "MAE",
            Metric::Mse => "MSE",
            Metric::NwdIp => "nWD(i,p)",
            Metric::NwdTp => "nWD(t,p)",
            Metric::Ap => "AP(i,p)",
        }
    }

    pub fn of(self, row: &EvaluationRow) -> Option<f64> {
        match self {
            Metric::Ssim => row.reference.map(|r| r.ssim),
            Metric::Psnr => row.reference.map(|r| r.psnr_db),
            Metric::Mae => row.reference.map(|r| r.mae),
            Metric::Mse => row.reference.map(|r| r.mse),
            Metric::NwdIp => row.wd.map(|w| w.nwd_ip),
            Metric::NwdTp => row.wd.map(|w| w.nwd_tp),
            Metric::Ap => row.ap.as_ref().map(|a| a.mean_ap),
        }
    }
}

impl FromStr for Metric {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.key() == s)
            .ok_or_else(|| HarnessError::UnknownMetric(s.to_string()))
    }
}

/// Pools every successful row's value of `metric`, sentinels included.
pub fn metric_series(rows: &[EvaluationRow], metric: Metric) -> MetricSeries {
    MetricSeries::new(
        metric.key(),
        rows.iter()
            .filter(|r| r.is_ok())
            .filter_map(|r| metric.of(r))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupBy {
    /// `site_in→site_out`
    #[default]
    Direction,
    SiteOut,
    SiteIn,
    All,
}

impl FromStr for GroupBy {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direction" => Ok(GroupBy::Direction),
            "site-out" | "site_out" => Ok(GroupBy::SiteOut),
            "site-in" | "site_in" => Ok(GroupBy::SiteIn),
            "all" => Ok(GroupBy::All),
            other => Err(HarnessError::UnknownGroupKey(other.to_string())),
        }
    }
}

impl GroupBy {
    /// Group label; channels are always kept apart.
    pub fn key(self, row: &EvaluationRow) -> String {
        let base = match self {
            GroupBy::Direction => format!("{}→{}", row.site_in, row.site_out),
            GroupBy::SiteOut => row.site_out.clone(),
            GroupBy::SiteIn => row.site_in.clone(),
            GroupBy::All => "all".to_string(),
        };
        match row.channel {
            Some(c) => format!("{base} [ch {c}]"),
            None => base,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// `None` when every value was a sentinel.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Finite values contributing to the moments.
    pub n: usize,
    pub sentinel_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub group: String,
    pub metrics: Vec<MetricSummary>,
}

impl SummaryTable {
    pub fn get(&self, metric: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric.key())
    }
}

/// Mean ± std of every metric per group, groups in lexicographic order.
pub fn summarize(
    rows: &[EvaluationRow],
    group_by: GroupBy,
) -> Result<Vec<SummaryTable>, HarnessError> {
    let mut groups: BTreeMap<String, Vec<EvaluationRow>> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.is_ok()) {
        groups
            .entry(group_by.key(row))
            .or_default()
            .push(row.clone());
    }
    if groups.is_empty() {
        return Err(HarnessError::NoSuccessfulRows);
    }
    Ok(groups
        .into_iter()
        .map(|(group, rows)| {
            let metrics = Metric::ALL
                .into_iter()
                .filter_map(|m| {
                    let series = metric_series(&rows, m);
                    if series.values.is_empty() {
                        return None;
                    }
                    let moments = mean_std(&series).ok();
                    Some(MetricSummary {
                        metric: m.key().to_string(),
                        mean: moments.map(|x| x.0),
                        std: moments.map(|x| x.1),
                        n: series.finite().count(),
                        sentinel_count: series.sentinel_count(),
                    })
                })
                .collect();
            SummaryTable { group, metrics }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(HarnessError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Provenance echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
}

impl ReportMeta {
    pub fn new(config: serde_json::Value) -> Self {
        ReportMeta {
            tool: "harmbench".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
        }
    }

    fn comment(&self) -> String {
        format!("{} {} config={}", self.tool, self.version, self.config)
    }
}

/// `"0.906 ± 0.038"`
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    meta: ReportMeta,
    tables: Vec<SummaryTable>,
}

pub fn emit_report(
    tables: &[SummaryTable],
    fmt: ReportFormat,
    meta: &ReportMeta,
) -> Result<Vec<u8>, HarnessError> {
    if tables.is_empty() {
        return Err(HarnessError::NoSuccessfulRows);
    }
    let mut out = String::new();
    match fmt {
        ReportFormat::Json => {
            let doc = JsonReport {
                meta: meta.clone(),
                tables: tables.to_vec(),
            };
            out = serde_json::to_string_pretty(&doc).expect("report serializes");
            out.push('\n');
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "# {}", meta.comment());
            out.push_str("group,metric,mean,std,n,sentinel_count\n");
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            for t in tables {
                for m in &t.metrics {
                    w.write_record([
                        t.group.as_str(),
                        m.metric.as_str(),
                        &opt(m.mean),
                        &opt(m.std),
                        &m.n.to_string(),
                        &m.sentinel_count.to_string(),
                    ])
                    .map_err(|e| HarnessError::Output(e.to_string()))?;
                }
            }
            let body = w
                .into_inner()
                .map_err(|e| HarnessError::Output(e.to_string()))?;
            out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        }
        ReportFormat::Markdown => {
            let columns: Vec<Metric> = Metric::ALL
                .into_iter()
                .filter(|m| tables.iter().any(|t| t.get(*m).is_some()))
                .collect();
            let _ = writeln!(out, "<!-- {} -->", meta.comment());
            out.push_str("| |");
            for m in &columns {
                let _ = write!(out, " {} |", m.title());
            }
            out.push_str("\n|---|");
            out.push_str(&"---|".repeat(columns.len()));
            out.push('\n');
            for t in tables {
                let _ = write!(out, "| {} |", t.group);
                for m in &columns {
                    let cell = match t.get(*m) {
                        None => "n/a".to_string(),
                        Some(s) => {
                            let mut c = match (s.mean, s.std) {
                                (Some(mean), Some(std)) => format_cell(mean, std),
                                _ => "inf".to_string(),
                            };
                            if s.sentinel_count > 0 && s.mean.is_some() {
                                let _ = write!(c, " (+{} inf)", s.sentinel_count);
                            }
                            c
                        }
                    };
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
        }
    }
    Ok(out.into_bytes())
}

/// Inverse of the JSON report.
pub fn parse_json_report(bytes: &[u8]) -> Result<(ReportMeta, Vec<SummaryTable>), HarnessError> {
    let doc: JsonReport =
        serde_json::from_slice(bytes).map_err(|e| HarnessError::Output(e.to_string()))?;
    Ok((doc.meta, doc.tables))
}

/// Column order of the per-row results file.
pub const RESULT_COLUMNS: [&str; 19] = [
    "id",
    "channel",
    "site_in",
    "site_out",
    "status",
    "error",
    "wd_ip",
    "wd_tp",
    "wd_it",
    "nwd_ip",
    "nwd_tp",
    "verdict",
    "ap",
    "ap_weighting",
    "ap_structures",
    "ssim",
    "psnr",
    "mae",
    "mse",
];

/// Per-row results as CSV with a provenance comment line; floats are written
/// with their shortest exact representation and `inf` for the PSNR sentinel.
pub fn write_results_csv(
    rows: &[EvaluationRow],
    meta: &ReportMeta,
) -> Result<Vec<u8>, HarnessError> {
    let mut buf = format!("# {}\n", meta.comment()).into_bytes();
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(RESULT_COLUMNS)
        .map_err(|e| HarnessError::Output(e.to_string()))?;
    for r in rows {
        let (status, error) = match &r.status {
            RowStatus::Ok => ("ok", String::new()),
            RowStatus::Error(e) => ("error", e.clone()),
        };
        let wd = |f: fn(&WdPair) -> f64| opt(r.wd.as_ref().map(f));
        let rf = |f: fn(&PairedMetricRow) -> f64| opt(r.reference.as_ref().map(f));
        let ap_structures =
            r.ap.as_ref()
                .map(|a| {
                    a.per_structure
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(";")
                })
                .unwrap_or_default();
        let ap_weighting = match r.ap.as_ref().map(|a| a.weighting) {
            Some(ApWeighting::Unweighted) => "unweighted",
            Some(ApWeighting::InputVolume) => "input_volume",
            None => "",
        };
        w.write_record([
            r.id.clone(),
            r.channel.map(|c| c.to_string()).unwrap_or_default(),
            r.site_in.clone(),
            r.site_out.clone(),
            status.to_string(),
            error,
            wd(|w| w.wd_ip),
            wd(|w| w.wd_tp),
            wd(|w| w.wd_it),
            wd(|w| w.nwd_ip),
            wd(|w| w.nwd_tp),
            r.verdict.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.ap.as_ref().map(|a| a.mean_ap)),
            ap_weighting.to_string(),
            ap_structures,
            rf(|m| m.ssim),
            rf(|m| m.psnr_db),
            rf(|m| m.mae),
            rf(|m| m.mse),
        ])
        .map_err(|e| HarnessError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::Output(e.to_string()))?;
    drop(w);
    Ok(buf)
}

/// Parses a results file written by [`write_results_csv`].
pub fn read_results_csv(text: &str) -> Result<Vec<EvaluationRow>, HarnessError> {
    let bad = |e: String| HarnessError::InvalidResults(e);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let idx: BTreeMap<&str, usize> = RESULT_COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .map(|i| (*c, i))
                .ok_or_else(|| HarnessError::MissingColumn(c.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |c: &str| rec.get(idx[c]).unwrap_or("").trim();
        let num = |c: &str| -> Result<Option<f64>, HarnessError> {
            match field(c) {
                "" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(format!("{c}: {s:?} is not a number"))),
            }
        };
        let status = match field("status") {
            "ok" => RowStatus::Ok,
            _ => RowStatus::Error(field("error").to_string()),
        };
        let wd = match (
            num("wd_ip")?,
            num("wd_tp")?,
            num("wd_it")?,
            num("nwd_ip")?,
            num("nwd_tp")?,
        ) {
            (Some(wd_ip), Some(wd_tp), Some(wd_it), Some(nwd_ip), Some(nwd_tp)) => Some(WdPair {
                wd_ip,
                wd_tp,
                wd_it,
                nwd_ip,
                nwd_tp,
            }),
            _ => None,
        };
        let reference = match (num("ssim")?, num("psnr")?, num("mae")?, num("mse")?) {
            (Some(ssim), Some(psnr_db), Some(mae), Some(mse)) => Some(PairedMetricRow {
                ssim,
                psnr_db,
                mae,
                mse,
            }),
            _ => None,
        };
        let ap = match num("ap")? {
            None => None,
            Some(mean_ap) => {
                let mut per_structure = BTreeMap::new();
                for part in field("ap_structures").split(';').filter(|p| !p.is_empty()) {
                    let (k, v) = part
                        .rsplit_once('=')
                        .ok_or_else(|| bad(format!("ap_structures entry {part:?}")))?;
                    let v: f64 = v
                        .parse()
                        .map_err(|_| bad(format!("ap_structures value {v:?}")))?;
                    per_structure.insert(k.to_string(), v);
                }
                let negative = per_structure
                    .iter()
                    .filter(|(_, v)| **v < 0.0)
                    .map(|(k, _)| k.clone())
                    .collect();
                let weighting = match field("ap_weighting") {
                    "input_volume" => ApWeighting::InputVolume,
                    _ => ApWeighting::Unweighted,
                };
                Some(ApReport {
                    per_structure,
                    mean_ap,
                    weighting,
                    negative,
                })
            }
        };
        let verdict = match field("verdict") {
            "" => None,
            s => Some(s.parse::<VerdictKind>().map_err(bad)?),
        };
        let channel = match field("channel") {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(format!("channel {s:?}")))?),
        };
        rows.push(EvaluationRow {
            id: field("id").to_string(),
            channel,
            site_in: field("site_in").to_string(),
            site_out: field("site_out").to_string(),
            status,
            wd,
            verdict,
            ap,
            reference,
        });
    }
    Ok(rows)
}
