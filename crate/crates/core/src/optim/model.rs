use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Samples};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::numerics::{Matrix, Scaler};
use crate::parallel::map_indexed;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Seeds that reproduce a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelSeeds {
    pub init: Option<u64>,
    pub shuffle: u64,
    pub dropout: u64,
}

/// Frozen network plus the scalers fitted on its training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub network: Network,
    pub input_scaler: Scaler,
    pub output_scaler: Scaler,
    pub seeds: ModelSeeds,
    /// Sorted, deduplicated trial ids seen during fitting.
    pub trained_on: Vec<String>,
    #[serde(default)]
    pub input_names: Vec<String>,
    #[serde(default)]
    pub output_names: Vec<String>,
    #[serde(default)]
    pub category: Option<Category>,
}

impl TrainedModel {
    pub(crate) fn assemble(
        network: Network,
        input_scaler: Scaler,
        output_scaler: Scaler,
        seeds: ModelSeeds,
        train: &Samples,
    ) -> Self {
        let mut trained_on: Vec<String> =
            train.origins().iter().map(|o| o.trial_id.to_string()).collect();
        trained_on.sort();
        trained_on.dedup();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            network,
            input_scaler,
            output_scaler,
            seeds,
            trained_on,
            input_names: Vec::new(),
            output_names: Vec::new(),
            category: None,
        }
    }

    pub fn with_names(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Self {
        self.input_names = inputs;
        self.output_names = outputs;
        self
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = Some(category);
        self
    }

    fn check(&self, samples: &Samples) -> Result<()> {
        let spec = self.network.spec();
        if samples.seq_len() != spec.seq_len()
            || samples.n_in() != spec.input_dim
            || samples.n_in() != self.input_scaler.dim()
        {
            return Err(Error::ShapeMismatch(format!(
                "samples are {}x{} per item, model expects {}x{}",
                samples.seq_len(),
                samples.n_in(),
                spec.seq_len(),
                spec.input_dim
            )));
        }
        Ok(())
    }

    /// Prediction for one raw-unit sample, returned in raw target units.
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let z = standardize_sample(&self.input_scaler, input);
        let y = self.network.predict(&z)?;
        let mut out = vec![0.0; y.len()];
        self.output_scaler.invert_row(&y, &mut out);
        Ok(out)
    }

    /// Predictions in raw units, one row per sample, spread over `jobs` workers.
    pub fn predict_samples(&self, samples: &Samples, jobs: usize) -> Result<Matrix> {
        self.check(samples)?;
        let rows = map_indexed(samples.len(), jobs, |i| self.predict_one(samples.input(i)));
        let mut data = Vec::with_capacity(samples.len() * self.network.spec().output_dim);
        for r in rows {
            data.extend(r?);
        }
        Matrix::new(samples.len(), self.network.spec().output_dim, data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(m.format_version));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Standardizes every frame row of a flat `seq_len x n_in` sample.
pub(crate) fn standardize_sample(scaler: &Scaler, input: &[f64]) -> Vec<f64> {
    let d = scaler.dim();
    let mut out = vec![0.0; input.len()];
    for (src, dst) in input.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        scaler.apply_row(src, dst);
    }
    out
}
