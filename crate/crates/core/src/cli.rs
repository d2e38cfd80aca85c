//! The `harmbench` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors (including
//! a batch where every record failed).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::distribution::{extract_foreground, ForegroundPolicy, DEFAULT_BINS, DEFAULT_EXACT_CAP};
use crate::harness::{
    emit_report, evaluate_all, load_manifest, metric_series, read_results_csv, summarize,
    write_results_csv, EvalConfig, EvaluationRow, GroupBy, HarnessError, Metric, ReportFormat,
    ReportMeta,
};
use crate::metrics_anatomy::{anatomy_preservation, structure_volumes, ApWeighting, LabelVolume};
use crate::metrics_reference::{paired_metrics, SsimParams};
use crate::metrics_wd::{classify, nwd, WdMethod, DEFAULT_TOLERANCE};
use crate::stats::correlation_matrix;
use crate::synth::{write_dataset, SynthConfig};
use crate::volume_io::load_volume;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "harmbench",
    version,
    about = "Benchmark image harmonization without ground truth"
)]
struct Cli {
    /// Emit one JSON document on stdout instead of tab-separated text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalized Wasserstein intensity metrics for one triplet.
    Wd(WdCmd),
    /// Anatomy preservation between two segmentations.
    Ap(ApCmd),
    /// MAE, MSE, PSNR and SSIM between a prediction and its ground truth.
    Refmetrics(RefCmd),
    /// Spearman correlations between metric columns of a results file.
    Corr(CorrCmd),
    /// Evaluate every triplet of a manifest.
    Evaluate(EvaluateCmd),
    /// Write a synthetic multi-site benchmark with a ready manifest.
    Synth(SynthCmd),
    /// Summarize a results file.
    Report(ReportCmd),
}

#[derive(Debug, Clone, Args)]
struct ForegroundArgs {
    /// Voxels strictly above this intensity are foreground.
    #[arg(
        long,
        env = "HARMBENCH_BG_THRESHOLD",
        default_value_t = 0.0,
        allow_negative_numbers = true
    )]
    bg_threshold: f64,
    /// Label volume whose nonzero voxels define the foreground (overrides the threshold).
    #[arg(long)]
    fg_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct WdArgs {
    /// Use binned distances with this many bins.
    #[arg(long, env = "HARMBENCH_BINS")]
    bins: Option<usize>,
    /// Always use the exact distance.
    #[arg(long)]
    exact: bool,
    /// Total sample count above which the automatic mode switches to bins.
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    exact_cap: usize,
    /// Verdict band half-width, in (0, 0.5).
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
}

#[derive(Debug, Clone, Args)]
struct SsimArgs {
    #[arg(long, default_value_t = 7)]
    window: usize,
    #[arg(long, default_value_t = 0.01)]
    k1: f64,
    #[arg(long, default_value_t = 0.03)]
    k2: f64,
}

#[derive(Debug, Args)]
struct WdCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[command(flatten)]
    wd: WdArgs,
    #[command(flatten)]
    fg: ForegroundArgs,
}

#[derive(Debug, Args)]
struct ApCmd {
    #[arg(long)]
    seg_input: PathBuf,
    #[arg(long)]
    seg_pred: PathBuf,
    /// Structures to score, e.g. `1=GM,2=WM`; other labels count as background.
    #[arg(long)]
    labels: Option<String>,
    /// Weight the mean by input structure volume.
    #[arg(long)]
    weighted: bool,
}

#[derive(Debug, Args)]
struct RefCmd {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    ssim: SsimArgs,
    #[command(flatten)]
    fg: ForegroundArgs,
}

#[derive(Debug, Args)]
struct CorrCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "nwd_ip,nwd_tp,ap")]
    rows: String,
    #[arg(long, default_value = "ssim,psnr,mae,mse")]
    cols: String,
}

#[derive(Debug, Args)]
struct EvaluateCmd {
    #[arg(long)]
    manifest: PathBuf,
    /// Per-row results CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary format printed on stdout: md, csv or json.
    #[arg(long, default_value = "md")]
    report: String,
    /// Also write the summary to this file.
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long, default_value = "direction")]
    group_by: String,
    #[arg(long, env = "HARMBENCH_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    weighted: bool,
    #[command(flatten)]
    wd: WdArgs,
    #[command(flatten)]
    ssim: SsimArgs,
    #[command(flatten)]
    fg: ForegroundArgs,
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    sites: usize,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Edge length of the cubic volumes, in voxels.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Debug, Args)]
struct ReportCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "md")]
    format: String,
    #[arg(long, default_value = "direction")]
    group_by: String,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::UnsupportedFormat(_)
            | HarnessError::UnknownMetric(_)
            | HarnessError::UnknownGroupKey(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Every setting that influenced a result, echoed into report headers.
#[derive(Debug, Clone, Serialize)]
struct GlobalConfig {
    bg_threshold: f64,
    fg_mask: Option<PathBuf>,
    bins: usize,
    exact_cap: usize,
    wd_mode: &'static str,
    tol: f64,
    window: usize,
    k1: f64,
    k2: f64,
    workers: usize,
    labels: Option<String>,
    weighted: bool,
    group_by: String,
    report: String,
}

impl WdArgs {
    fn method(&self) -> WdMethod {
        match (self.exact, self.bins) {
            (true, _) => WdMethod::Exact,
            (false, Some(bins)) => WdMethod::Binned { bins },
            (false, None) => WdMethod::Auto {
                bins: DEFAULT_BINS,
                exact_cap: self.exact_cap,
            },
        }
    }

    fn mode_name(&self) -> &'static str {
        match self.method() {
            WdMethod::Exact => "exact",
            WdMethod::Binned { .. } => "binned",
            WdMethod::Auto { .. } => "auto",
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0 && self.tol < 0.5) {
            return Err(CliError::Usage(format!(
                "--tol {} must lie in (0, 0.5)",
                self.tol
            )));
        }
        if self.bins == Some(0) {
            return Err(CliError::Usage("--bins must be positive".into()));
        }
        Ok(())
    }
}

impl SsimArgs {
    fn params(&self) -> Result<SsimParams, CliError> {
        let p = SsimParams {
            window: self.window,
            k1: self.k1,
            k2: self.k2,
            dynamic_range: 1.0,
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

impl ForegroundArgs {
    fn policy(&self) -> Result<ForegroundPolicy, CliError> {
        if !self.bg_threshold.is_finite() {
            return Err(CliError::Usage(format!(
                "--bg-threshold {} must be finite",
                self.bg_threshold
            )));
        }
        match &self.fg_mask {
            None => Ok(ForegroundPolicy::Threshold(self.bg_threshold)),
            Some(p) => {
                let mask = LabelVolume::from_grid(&load_volume(p).map_err(data)?)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                Ok(ForegroundPolicy::Mask(Arc::new(mask)))
            }
        }
    }
}

fn parse_labels(spec: &str) -> Result<BTreeMap<u32, String>, CliError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (label, name) = part.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("label entry {part:?} is not <label>=<name>"))
            })?;
            let label: u32 = label
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("label {label:?} is not an integer")))?;
            if label == 0 {
                return Err(CliError::Usage("label 0 is reserved for background".into()));
            }
            Ok((label, name.trim().to_string()))
        })
        .collect()
}

fn metric_list(spec: &str) -> Result<Vec<Metric>, CliError> {
    spec.split(',')
        .map(|s| s.trim().parse::<Metric>().map_err(CliError::from))
        .collect()
}

struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl Output<'_> {
    fn emit(&mut self, doc: serde_json::Value, text: &str) -> Result<(), CliError> {
        let r = if self.json {
            writeln!(
                self.out,
                "{}",
                serde_json::to_string_pretty(&doc).expect("json value")
            )
        } else {
            self.out.write_all(text.as_bytes())
        };
        r.map_err(data)
    }
}

fn cmd_wd(cmd: &WdCmd, out: &mut Output) -> Result<(), CliError> {
    cmd.wd.validate()?;
    let policy = cmd.fg.policy()?;
    let dist = |p: &Path| -> Result<_, CliError> {
        let g = load_volume(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        extract_foreground(&g, &policy).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    let pair = nwd(
        &dist(&cmd.input)?,
        &dist(&cmd.target)?,
        &dist(&cmd.pred)?,
        cmd.wd.method(),
    )
    .map_err(data)?;
    let verdict = classify(&pair, cmd.wd.tol);
    let doc = json!({
        "wd_ip": pair.wd_ip, "wd_tp": pair.wd_tp, "wd_it": pair.wd_it,
        "nwd_ip": pair.nwd_ip, "nwd_tp": pair.nwd_tp,
        "verdict": verdict.kind.to_string(), "tolerance": verdict.tolerance,
        "wd_mode": cmd.wd.mode_name(),
    });
    let text = format!(
        "wd_ip\t{}\nwd_tp\t{}\nwd_it\t{}\nnwd_ip\t{}\nnwd_tp\t{}\nverdict\t{}\n",
        pair.wd_ip, pair.wd_tp, pair.wd_it, pair.nwd_ip, pair.nwd_tp, verdict.kind
    );
    out.emit(doc, &text)
}

fn cmd_ap(cmd: &ApCmd, out: &mut Output) -> Result<(), CliError> {
    let legend = cmd.labels.as_deref().map(parse_labels).transpose()?;
    let seg = |p: &Path| -> Result<LabelVolume, CliError> {
        let s = LabelVolume::from_grid(&load_volume(p).map_err(data)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        Ok(match &legend {
            Some(l) => s.select(l),
            None => s,
        })
    };
    let (si, sp) = (seg(&cmd.seg_input)?, seg(&cmd.seg_pred)?);
    let weighting = if cmd.weighted {
        ApWeighting::InputVolume
    } else {
        ApWeighting::Unweighted
    };
    let report = anatomy_preservation(&si, &sp, weighting).map_err(data)?;
    let doc = json!({
        "per_structure": report.per_structure,
        "mean_ap": report.mean_ap,
        "weighting": report.weighting,
        "negative": report.negative,
        "volumes_input_mm3": structure_volumes(&si),
        "volumes_pred_mm3": structure_volumes(&sp),
    });
    let mut text = String::new();
    for (name, ap) in &report.per_structure {
        text.push_str(&format!("{name}\t{ap}\n"));
    }
    text.push_str(&format!("mean\t{}\n", report.mean_ap));
    out.emit(doc, &text)
}

fn cmd_ref(cmd: &RefCmd, out: &mut Output) -> Result<(), CliError> {
    let params = cmd.ssim.params()?;
    let policy = cmd.fg.policy()?;
    let load =
        |p: &Path| load_volume(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())));
    let row = paired_metrics(&load(&cmd.pred)?, &load(&cmd.gt)?, &policy, &params).map_err(data)?;
    let doc = serde_json::to_value(row).expect("row serializes");
    let text = format!(
        "ssim\t{}\npsnr\t{}\nmae\t{}\nmse\t{}\n",
        row.ssim, row.psnr_db, row.mae, row.mse
    );
    out.emit(doc, &text)
}

fn read_results(path: &Path) -> Result<Vec<EvaluationRow>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(read_results_csv(&text)?)
}

fn cmd_corr(cmd: &CorrCmd, out: &mut Output) -> Result<(), CliError> {
    let rows_m = metric_list(&cmd.rows)?;
    let cols_m = metric_list(&cmd.cols)?;
    let rows = read_results(&cmd.input)?;
    // Pair metrics within each row: only rows carrying every requested metric.
    let complete: Vec<EvaluationRow> = rows
        .into_iter()
        .filter(|r| r.is_ok() && rows_m.iter().chain(&cols_m).all(|m| m.of(r).is_some()))
        .collect();
    let series = |ms: &[Metric]| {
        ms.iter()
            .map(|m| metric_series(&complete, *m))
            .collect::<Vec<_>>()
    };
    let matrix = correlation_matrix(&series(&rows_m), &series(&cols_m));
    let mut text = String::from("metric");
    for c in &matrix.col_names {
        text.push_str(&format!("\t{c}"));
    }
    text.push('\n');
    for (name, rho) in matrix.row_names.iter().zip(&matrix.rho) {
        text.push_str(name);
        for v in rho {
            match v {
                Some(v) => text.push_str(&format!("\t{v:.3}")),
                None => text.push_str("\tn/a"),
            }
        }
        text.push('\n');
    }
    let doc = json!({ "n": complete.len(), "matrix": matrix });
    out.emit(doc, &text)
}

fn cmd_evaluate(cmd: &EvaluateCmd, out: &mut Output) -> Result<(), CliError> {
    cmd.wd.validate()?;
    let fmt: ReportFormat = if out.json {
        ReportFormat::Json
    } else {
        cmd.report.parse()?
    };
    let group_by: GroupBy = cmd.group_by.parse()?;
    let legend = cmd.labels.as_deref().map(parse_labels).transpose()?;
    if cmd.workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let config = EvalConfig {
        foreground: cmd.fg.policy()?,
        wd_method: cmd.wd.method(),
        tolerance: cmd.wd.tol,
        ssim: cmd.ssim.params()?,
        ap_weighting: if cmd.weighted {
            ApWeighting::InputVolume
        } else {
            ApWeighting::Unweighted
        },
        legend,
        workers: cmd.workers,
    };
    let global = GlobalConfig {
        bg_threshold: cmd.fg.bg_threshold,
        fg_mask: cmd.fg.fg_mask.clone(),
        bins: cmd.wd.bins.unwrap_or(DEFAULT_BINS),
        exact_cap: cmd.wd.exact_cap,
        wd_mode: cmd.wd.mode_name(),
        tol: cmd.wd.tol,
        window: cmd.ssim.window,
        k1: cmd.ssim.k1,
        k2: cmd.ssim.k2,
        workers: cmd.workers,
        labels: cmd.labels.clone(),
        weighted: cmd.weighted,
        group_by: cmd.group_by.clone(),
        report: cmd.report.clone(),
    };
    let meta = ReportMeta::new(serde_json::to_value(&global).expect("config serializes"));

    let records = load_manifest(&cmd.manifest)?;
    let (rows, all_failed) = match evaluate_all(&records, &config) {
        Ok(rows) => (rows, false),
        Err(HarnessError::AllRecordsFailed(rows)) => (rows, true),
        Err(e) => return Err(e.into()),
    };
    let results = write_results_csv(&rows, &meta)?;
    fs::write(&cmd.out, results)
        .map_err(|e| CliError::Data(format!("{}: {e}", cmd.out.display())))?;
    if all_failed {
        return Err(CliError::Data(format!(
            "all {} rows failed; see {}",
            rows.len(),
            cmd.out.display()
        )));
    }
    let tables = summarize(&rows, group_by)?;
    let report = emit_report(&tables, fmt, &meta)?;
    if let Some(p) = &cmd.report_out {
        fs::write(p, &report).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    out.out.write_all(&report).map_err(data)
}

fn cmd_synth(cmd: &SynthCmd, out: &mut Output) -> Result<(), CliError> {
    let cfg = SynthConfig {
        sites: cmd.sites,
        triplets: cmd.n,
        seed: cmd.seed,
        size: cmd.size,
    };
    if cfg.sites < 2 || cfg.triplets == 0 || cfg.size < 8 {
        return Err(CliError::Usage(
            "need --sites >= 2, --n >= 1 and --size >= 8".into(),
        ));
    }
    let manifest = write_dataset(&cmd.out, &cfg).map_err(data)?;
    let doc = json!({ "manifest": manifest, "triplets": cfg.triplets, "sites": cfg.sites, "seed": cfg.seed });
    out.emit(doc, &format!("{}\n", manifest.display()))
}

fn cmd_report(cmd: &ReportCmd, out: &mut Output) -> Result<(), CliError> {
    let fmt: ReportFormat = if out.json {
        ReportFormat::Json
    } else {
        cmd.format.parse()?
    };
    let group_by: GroupBy = cmd.group_by.parse()?;
    let rows = read_results(&cmd.input)?;
    let tables = summarize(&rows, group_by)?;
    let meta = ReportMeta::new(json!({ "source": cmd.input, "group_by": cmd.group_by }));
    let report = emit_report(&tables, fmt, &meta)?;
    out.out.write_all(&report).map_err(data)
}

/// Runs the CLI with explicit streams and returns the exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let json = cli.json;
    let mut out = Output { json, out: stdout };
    let result = match &cli.command {
        Command::Wd(c) => cmd_wd(c, &mut out),
        Command::Ap(c) => cmd_ap(c, &mut out),
        Command::Refmetrics(c) => cmd_ref(c, &mut out),
        Command::Corr(c) => cmd_corr(c, &mut out),
        Command::Evaluate(c) => cmd_evaluate(c, &mut out),
        Command::Synth(c) => cmd_synth(c, &mut out),
        Command::Report(c) => cmd_report(c, &mut out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Data(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            if json {
                let _ = writeln!(out.out, "{}", json!({ "error": m }));
            }
            EXIT_DATA
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
