//! Summary statistics and Spearman rank correlation over metric series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series {0:?} holds no finite value")]
    AllSentinels(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("only {0} finite pairs; at least 3 are needed")]
    TooFewPairs(usize),
    #[error("series {0:?} has all ranks tied")]
    ZeroRankVariance(String),
}

/// One metric's values across triplets. Non-finite entries (the `+inf` PSNR
/// sentinel) are kept but excluded from every statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        MetricSeries {
            name: name.into(),
            values,
        }
    }

    pub fn finite(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| v.is_finite())
    }

    pub fn sentinel_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }
}

/// Mean and sample standard deviation (n - 1) of the finite values.
/// A single finite value has standard deviation 0.
pub fn mean_std(series: &MetricSeries) -> Result<(f64, f64), StatsError> {
    let finite: Vec<f64> = series.finite().collect();
    if finite.is_empty() {
        return Err(StatsError::AllSentinels(series.name.clone()));
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    if finite.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = finite.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy, sxx, syy)
}

/// Spearman's rho: Pearson correlation of average ranks, over the pairs where
/// both values are finite.
pub fn spearman(x: &MetricSeries, y: &MetricSeries) -> Result<f64, StatsError> {
    if x.values.len() != y.values.len() {
        return Err(StatsError::LengthMismatch(x.values.len(), y.values.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .values
        .iter()
        .zip(&y.values)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 3 {
        return Err(StatsError::TooFewPairs(xs.len()));
    }
    let (sxy, sxx, syy) = pearson(&average_ranks(&xs), &average_ranks(&ys));
    if sxx == 0.0 {
        return Err(StatsError::ZeroRankVariance(x.name.clone()));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroRankVariance(y.name.clone()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlations laid out with proposed metrics as rows and
/// reference metrics as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    /// `None` where the correlation is undefined (tied or too few pairs).
    pub rho: Vec<Vec<Option<f64>>>,
}

pub fn correlation_matrix(rows: &[MetricSeries], cols: &[MetricSeries]) -> CorrelationMatrix {
    let rho = rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|c| match spearman(r, c) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!("rho({}, {}) undefined: {e}", r.name, c.name);
                        None
                    }
                })
                .collect()
        })
        .collect();
    CorrelationMatrix {
        row_names: rows.iter().map(|s| s.name.clone()).collect(),
        col_names: cols.iter().map(|s| s.name.clone()).collect(),
        rho,
    }
}
