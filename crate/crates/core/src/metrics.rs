//! Correlation and scaled-error measures, pooled per output category.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Category;
use crate::error::{Error, Result};
use crate::numerics::{mean, population_sd, summary, SummaryStats};

/// Header of the aggregate CSV export.
pub const REPORT_CSV_HEADER: [&str; 9] = [
    "model", "setting", "category", "metric", "mean", "sd", "max", "min", "iqr",
];

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { got: a.len() });
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let (mp, mt) = (mean(pred), mean(truth));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if population_sd(pred) == 0.0 || population_sd(truth) == 0.0 || sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// RMSE divided by the population SD of `truth`.
pub fn nrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let e = rmse(pred, truth)?;
    let sd = population_sd(truth);
    if sd == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(e / sd)
}

/// Metrics of one output feature on one trial. `r` and `nrmse` are absent
/// when the series is constant; such rows carry `error` and are not pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub feature: String,
    pub trial_id: String,
    pub category: Category,
    pub r: Option<f64>,
    pub rmse: f64,
    pub nrmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MetricsRow {
    pub fn compute(
        feature: impl Into<String>,
        trial_id: impl Into<String>,
        category: Category,
        pred: &[f64],
        truth: &[f64],
    ) -> Result<Self> {
        let rmse = rmse(pred, truth)?;
        let (r, nrmse) = (pearson_r(pred, truth), nrmse(pred, truth));
        let error = match (&r, &nrmse) {
            (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
            _ => None,
        };
        Ok(Self {
            feature: feature.into(),
            trial_id: trial_id.into(),
            category,
            r: r.ok().filter(|_| error.is_none()),
            rmse,
            nrmse: nrmse.ok().filter(|_| error.is_none()),
            error,
        })
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAggregate {
    pub category: Category,
    pub rows: usize,
    pub excluded: usize,
    pub r: SummaryStats,
    pub nrmse: SummaryStats,
    pub rmse: SummaryStats,
}

/// Flat pooling of every valid (feature, trial) row of `category`.
pub fn aggregate(rows: &[MetricsRow], category: Category) -> Result<CategoryAggregate> {
    let in_cat: Vec<&MetricsRow> = rows.iter().filter(|r| r.category == category).collect();
    let valid: Vec<&MetricsRow> = in_cat.iter().copied().filter(|r| r.is_valid()).collect();
    let excluded = in_cat.len() - valid.len();
    if excluded > 0 {
        log::warn!("{excluded} constant-truth rows excluded from {category} aggregate");
    }
    if valid.is_empty() {
        return Err(Error::EmptyCategory(category.to_string()));
    }
    let pick = |f: fn(&MetricsRow) -> f64| -> Result<SummaryStats> {
        summary(&valid.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    Ok(CategoryAggregate {
        category,
        rows: valid.len(),
        excluded,
        r: pick(|r| r.r.expect("valid row"))?,
        nrmse: pick(|r| r.nrmse.expect("valid row"))?,
        rmse: pick(|r| r.rmse)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub setting: String,
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<CategoryAggregate>,
}

impl MetricsReport {
    /// Aggregates every category that has at least one valid row.
    pub fn new(model: impl Into<String>, setting: impl Into<String>, rows: Vec<MetricsRow>) -> Self {
        let mut cats: Vec<Category> = rows.iter().map(|r| r.category).collect();
        cats.sort();
        cats.dedup();
        let aggregates = cats
            .into_iter()
            .filter_map(|c| aggregate(&rows, c).ok())
            .collect();
        Self {
            model: model.into(),
            setting: setting.into(),
            rows,
            aggregates,
        }
    }

    pub fn aggregate_for(&self, category: Category) -> Result<&CategoryAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.category == category)
            .ok_or_else(|| Error::EmptyCategory(category.to_string()))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_reports_csv(std::slice::from_ref(self), None, out)
    }

    pub fn save(&self, json: impl AsRef<Path>, csv: impl AsRef<Path>) -> Result<()> {
        std::fs::write(json, serde_json::to_string_pretty(self)?)?;
        self.write_csv(std::fs::File::create(csv)?)
    }
}

/// Aggregate rows of several reports under one header, optionally limited
/// to `category`.
pub fn write_reports_csv<W: Write>(
    reports: &[MetricsReport],
    category: Option<Category>,
    out: W,
) -> Result<()> {
    let blocks: Vec<(&MetricsReport, &CategoryAggregate)> = reports
        .iter()
        .flat_map(|r| r.aggregates.iter().map(move |a| (r, a)))
        .filter(|(_, a)| category.is_none_or(|c| a.category == c))
        .collect();
    if let (Some(c), true) = (category, blocks.is_empty()) {
        return Err(Error::EmptyCategory(c.to_string()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for (rep, a) in blocks {
        for (metric, s) in [("r", &a.r), ("nrmse", &a.nrmse), ("rmse", &a.rmse)] {
            w.write_record([
                rep.model.clone(),
                rep.setting.clone(),
                a.category.to_string(),
                metric.to_string(),
                s.mean.to_string(),
                s.sd.to_string(),
                s.max.to_string(),
                s.min.to_string(),
                s.iqr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one `frame,truth,pred` curve.
pub fn write_curve<W: Write>(out: W, frames: &[usize], truth: &[f64], pred: &[f64]) -> Result<()> {
    if frames.len() != truth.len() || truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "truth", "pred"])?;
    for ((f, t), p) in frames.iter().zip(truth).zip(pred) {
        w.write_record([f.to_string(), t.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
