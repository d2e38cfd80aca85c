//! Triplet manifests (CSV with header, or a JSON array of objects).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Columns every manifest must carry.
pub const REQUIRED_COLUMNS: [&str; 6] = [
    "id",
    "input_path",
    "target_path",
    "pred_path",
    "site_in",
    "site_out",
];

/// One evaluation unit: input, target and prediction, plus the optional
/// ground truth and segmentations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub id: String,
    pub input_path: PathBuf,
    pub target_path: PathBuf,
    pub pred_path: PathBuf,
    #[serde(default)]
    pub gt_path: Option<PathBuf>,
    #[serde(default)]
    pub seg_input_path: Option<PathBuf>,
    #[serde(default)]
    pub seg_pred_path: Option<PathBuf>,
    pub site_in: String,
    pub site_out: String,
    #[serde(default)]
    pub channel: Option<usize>,
}

impl TripletRecord {
    /// `site_in→site_out`
    pub fn direction(&self) -> String {
        format!("{}→{}", self.site_in, self.site_out)
    }
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads, validates and path-resolves a manifest. JSON is recognized by a
/// `.json` extension or a leading `[`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<TripletRecord>, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::UnreadableFile(path.to_path_buf(), e.to_string()))?;
    let is_json =
        path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('[');
    let records = if is_json {
        parse_json(&text, path)?
    } else {
        parse_csv(&text, path)?
    };
    let base = path.parent().unwrap_or(Path::new("."));
    validate(records, base)
}

fn parse_csv(text: &str, path: &Path) -> Result<Vec<TripletRecord>, HarnessError> {
    let unreadable =
        |e: csv::Error| HarnessError::UnreadableFile(path.to_path_buf(), e.to_string());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(unreadable)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for name in REQUIRED_COLUMNS {
        if col(name).is_none() {
            return Err(HarnessError::MissingColumn(name.to_string()));
        }
    }
    let optional = |name: &str| col(name);
    let (gt, si, sp, ch) = (
        optional("gt_path"),
        optional("seg_input_path"),
        optional("seg_pred_path"),
        optional("channel"),
    );

    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(unreadable)?;
        let get = |idx: Option<usize>| idx.and_then(|i| rec.get(i)).and_then(non_empty);
        let req = |name: &str| get(col(name)).unwrap_or("").to_string();
        let channel = match get(ch) {
            None => None,
            Some(s) => Some(
                s.parse::<usize>()
                    .map_err(|_| HarnessError::InvalidRecord {
                        record: line + 1,
                        reason: format!("channel {s:?} is not a nonnegative integer"),
                    })?,
            ),
        };
        out.push(TripletRecord {
            id: req("id"),
            input_path: req("input_path").into(),
            target_path: req("target_path").into(),
            pred_path: req("pred_path").into(),
            gt_path: get(gt).map(PathBuf::from),
            seg_input_path: get(si).map(PathBuf::from),
            seg_pred_path: get(sp).map(PathBuf::from),
            site_in: req("site_in"),
            site_out: req("site_out"),
            channel,
        });
    }
    Ok(out)
}

fn parse_json(text: &str, path: &Path) -> Result<Vec<TripletRecord>, HarnessError> {
    let raw: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(text)
        .map_err(|e| HarnessError::UnreadableFile(path.to_path_buf(), e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(k, mut obj)| {
            for name in REQUIRED_COLUMNS {
                if !obj.contains_key(name) {
                    return Err(HarnessError::MissingColumn(name.to_string()));
                }
            }
            // Empty strings in optional fields mean "absent".
            obj.retain(|_, v| !(v.is_null() || v.as_str().is_some_and(|s| s.trim().is_empty())));
            serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| {
                HarnessError::InvalidRecord {
                    record: k + 1,
                    reason: e.to_string(),
                }
            })
        })
        .collect()
}

fn validate(records: Vec<TripletRecord>, base: &Path) -> Result<Vec<TripletRecord>, HarnessError> {
    let mut seen = HashSet::new();
    records
        .into_iter()
        .enumerate()
        .map(|(k, mut r)| {
            let invalid = |reason: String| HarnessError::InvalidRecord {
                record: k + 1,
                reason,
            };
            if r.id.trim().is_empty() {
                return Err(invalid("empty id".into()));
            }
            for (name, p) in [
                ("input_path", &r.input_path),
                ("target_path", &r.target_path),
                ("pred_path", &r.pred_path),
            ] {
                if p.as_os_str().is_empty() {
                    return Err(invalid(format!("empty {name}")));
                }
            }
            if r.seg_input_path.is_some() != r.seg_pred_path.is_some() {
                return Err(invalid(
                    "seg_input_path and seg_pred_path must be given together".into(),
                ));
            }
            if !seen.insert((r.id.clone(), r.channel)) {
                return Err(HarnessError::DuplicateId(r.id.clone()));
            }
            r.input_path = resolve(base, &r.input_path);
            r.target_path = resolve(base, &r.target_path);
            r.pred_path = resolve(base, &r.pred_path);
            r.gt_path = r.gt_path.map(|p| resolve(base, &p));
            r.seg_input_path = r.seg_input_path.map(|p| resolve(base, &p));
            r.seg_pred_path = r.seg_pred_path.map(|p| resolve(base, &p));
            Ok(r)
        })
        .collect()
}
