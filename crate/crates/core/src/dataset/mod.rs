//! Trial bundles: ingestion, kinetic normalization, feature transforms and
//! windowing into training samples.

mod io;
mod samples;
mod transforms;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use io::{load_trial, load_trials, write_bundle_dir, Table, TrialMeta};
pub use samples::{make_windows, SampleOrigin, Samples, Window, WindowedSet, DEFAULT_WINDOW};
pub use transforms::{
    append_time_feature, muscle_envelope, normalize_kinetics, GRAVITY, TIME_FEATURE,
};

/// Output category of a musculoskeletal model; fixes the reporting unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    JointAngles,
    JointReactionForces,
    JointMoments,
    MuscleForces,
    MuscleActivations,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::JointAngles,
        Category::JointReactionForces,
        Category::JointMoments,
        Category::MuscleForces,
        Category::MuscleActivations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::JointAngles => "joint_angles",
            Category::JointReactionForces => "joint_reaction_forces",
            Category::JointMoments => "joint_moments",
            Category::MuscleForces => "muscle_forces",
            Category::MuscleActivations => "muscle_activations",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Category::JointAngles => "deg",
            Category::JointReactionForces | Category::MuscleForces => "%BW",
            Category::JointMoments => "%BWxBH",
            Category::MuscleActivations => "%",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown category {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub subject_id: String,
    pub body_mass_kg: f64,
    pub height_m: f64,
}

impl SubjectMeta {
    pub fn new(subject_id: impl Into<String>, body_mass_kg: f64, height_m: f64) -> Result<Self> {
        if !(body_mass_kg > 0.0 && height_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "subject mass ({body_mass_kg}) and height ({height_m}) must be positive"
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            body_mass_kg,
            height_m,
        })
    }
}

/// One subject-trial with frame-aligned inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBundle {
    pub subject: SubjectMeta,
    pub trial_id: String,
    pub category: Category,
    pub input_hz: f64,
    pub output_hz: f64,
    /// Frame timestamps in seconds, one per row.
    pub times: Vec<f64>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub inputs: Matrix,
    pub outputs: Matrix,
}

impl TrialBundle {
    /// Builds an aligned bundle sampled at `hz` with timestamps `k / hz`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subject: SubjectMeta,
        trial_id: impl Into<String>,
        category: Category,
        hz: f64,
        input_names: Vec<String>,
        inputs: Matrix,
        output_names: Vec<String>,
        outputs: Matrix,
    ) -> Result<Self> {
        let times = (0..inputs.rows()).map(|k| k as f64 / hz).collect();
        let b = Self {
            subject,
            trial_id: trial_id.into(),
            category,
            input_hz: hz,
            output_hz: hz,
            times,
            input_names,
            output_names,
            inputs,
            outputs,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn frames(&self) -> usize {
        self.inputs.rows()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject.subject_id
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() != self.outputs.rows() || self.times.len() != self.inputs.rows() {
            return Err(Error::RowCountMismatch {
                inputs: self.inputs.rows(),
                outputs: self.outputs.rows(),
            });
        }
        if self.input_names.len() != self.inputs.cols()
            || self.output_names.len() != self.outputs.cols()
        {
            return Err(Error::ShapeMismatch(format!(
                "trial {}: channel names do not match matrix widths",
                self.trial_id
            )));
        }
        if !(self.subject.body_mass_kg > 0.0 && self.subject.height_m > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "trial {}: subject mass and height must be positive",
                self.trial_id
            )));
        }
        Ok(())
    }

    /// Prepends the normalized elapsed-time column to the inputs.
    pub fn with_time_feature(mut self) -> Result<Self> {
        if self.input_names.iter().any(|n| n == TIME_FEATURE) {
            return Err(Error::DuplicateTimeFeature);
        }
        self.inputs = append_time_feature(&self.inputs)?;
        self.input_names.insert(0, TIME_FEATURE.to_string());
        Ok(self)
    }

    pub fn has_time_feature(&self) -> bool {
        self.input_names.first().map(String::as_str) == Some(TIME_FEATURE)
    }

    pub fn meta(&self) -> TrialMeta {
        TrialMeta {
            subject_id: self.subject.subject_id.clone(),
            trial_id: self.trial_id.clone(),
            body_mass_kg: self.subject.body_mass_kg,
            height_m: self.subject.height_m,
            input_hz: self.input_hz,
            output_hz: self.output_hz,
            category: self.category,
        }
    }

    /// Writes the bundle directory (`inputs.csv`, `outputs.csv`, `meta.json`).
    pub fn save(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let inputs = Table {
            names: self.input_names.clone(),
            times: self.times.clone(),
            values: self.inputs.clone(),
        };
        let outputs = Table {
            names: self.output_names.clone(),
            times: self.times.clone(),
            values: self.outputs.clone(),
        };
        write_bundle_dir(dir.as_ref(), &self.meta(), &inputs, &outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
            let j = serde_json::to_string(&c).unwrap();
            assert_eq!(j, format!("\"{}\"", c.as_str()));
        }
        assert!("torques".parse::<Category>().is_err());
    }

    #[test]
    fn subject_must_be_positive() {
        assert!(SubjectMeta::new("s", 0.0, 1.7).is_err());
        assert!(SubjectMeta::new("s", 70.0, -1.0).is_err());
        assert!(SubjectMeta::new("s", 70.0, 1.7).is_ok());
    }

    #[test]
    fn time_feature_twice_is_rejected() {
        let b = TrialBundle::new(
            SubjectMeta::new("s1", 60.0, 1.7).unwrap(),
            "t1",
            Category::JointAngles,
            60.0,
            vec!["a".into()],
            Matrix::from_columns(&[[1.0, 2.0, 3.0]]).unwrap(),
            vec!["y".into()],
            Matrix::from_columns(&[[0.0, 0.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let once = b.with_time_feature().unwrap();
        assert!(once.has_time_feature());
        assert_eq!(once.inputs.column(0), vec![0.0, 0.5, 1.0]);
        assert!(matches!(
            once.with_time_feature(),
            Err(Error::DuplicateTimeFeature)
        ));
    }
}
