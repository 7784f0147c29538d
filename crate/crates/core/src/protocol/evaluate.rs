use std::collections::BTreeSet;
use std::path::Path;

use super::split::SplitPlan;
use crate::dataset::{Samples, TrialBundle};
use crate::error::{Error, Result};
use crate::metrics::{write_curve, MetricsReport, MetricsRow};
use crate::numerics::Matrix;
use crate::optim::TrainedModel;

/// Raw-unit predictions for one test trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPrediction {
    pub trial_id: String,
    pub feature_names: Vec<String>,
    /// Frame index each row is aligned to.
    pub frames: Vec<usize>,
    pub truth: Matrix,
    pub pred: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<TrialPrediction>,
}

impl Evaluation {
    /// One `frame,truth,pred` file per trial and feature under `dir`.
    pub fn write_curves(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for p in &self.predictions {
            for (j, name) in p.feature_names.iter().enumerate() {
                let file = std::fs::File::create(dir.join(format!("{}__{}.csv", p.trial_id, name)))?;
                write_curve(file, &p.frames, &p.truth.column(j), &p.pred.column(j))?;
            }
        }
        Ok(())
    }
}

/// Fails with the overlapping ids if any test trial was used for fitting.
pub fn check_leakage(model: &TrainedModel, plan: Option<&SplitPlan>, test_ids: &[String]) -> Result<()> {
    let mut seen: BTreeSet<&str> = model.trained_on.iter().map(String::as_str).collect();
    let dev = plan.map(SplitPlan::development).unwrap_or_default();
    seen.extend(dev.iter().map(String::as_str));
    let mut overlap: Vec<String> = test_ids.iter().filter(|t| seen.contains(t.as_str())).cloned().collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        overlap.sort();
        overlap.dedup();
        Err(Error::LeakageDetected(overlap))
    }
}

/// Metrics of `model` on held-out trials, with predictions in raw units.
pub fn evaluate_final(
    model: &TrainedModel,
    plan: Option<&SplitPlan>,
    test: &[TrialBundle],
    model_name: &str,
    jobs: usize,
) -> Result<Evaluation> {
    let ids: Vec<String> = test.iter().map(|b| b.trial_id.clone()).collect();
    check_leakage(model, plan, &ids)?;
    let seq_len = model.network.spec().seq_len();
    let mut rows = Vec::new();
    let mut predictions = Vec::with_capacity(test.len());
    for bundle in test {
        if !model.input_names.is_empty() && model.input_names != bundle.input_names {
            return Err(Error::ShapeMismatch(format!(
                "trial {} inputs differ from the model's training channels",
                bundle.trial_id
            )));
        }
        let samples = if seq_len == 1 {
            Samples::frames(bundle)
        } else {
            Samples::windows(bundle, seq_len)?
        };
        let pred = model.predict_samples(&samples, jobs)?;
        let truth = samples.targets_matrix();
        for (j, name) in bundle.output_names.iter().enumerate() {
            rows.push(MetricsRow::compute(
                name.clone(),
                bundle.trial_id.clone(),
                bundle.category,
                &pred.column(j),
                &truth.column(j),
            )?);
        }
        predictions.push(TrialPrediction {
            trial_id: bundle.trial_id.clone(),
            feature_names: bundle.output_names.clone(),
            frames: samples.origins().iter().map(|o| o.frame).collect(),
            truth,
            pred,
        });
    }
    let setting = plan.map_or_else(|| "unspecified".to_string(), |p| p.setting.to_string());
    Ok(Evaluation {
        report: MetricsReport::new(model_name, setting, rows),
        predictions,
    })
}
