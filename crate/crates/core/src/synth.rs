//! Synthetic cohorts with known ground-truth mappings.
//!
//! Inputs are sums of low-frequency sinusoids with random phases. The linear
//! task maps each frame affinely; the temporal task multiplies a squashed
//! projection of the current frame with a linear read of the frame `lag`
//! steps back, so a memoryless affine model cannot fit it.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, Samples, SubjectMeta, TrialBundle};
use crate::error::{Error, Result};
use crate::metrics::nrmse;
use crate::numerics::{derive_seed, Matrix, RngStream};
use crate::optim::fit_linear;
use crate::parallel::map_indexed;

pub const ORACLE_FILE: &str = "oracle.json";

/// Least memoryless-fit NRMSE a temporal task must leave.
pub const MIN_MEMORYLESS_NRMSE: f64 = 0.3;

const HARMONICS: usize = 3;
const MAX_RESEEDS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Linear,
    Temporal,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(TaskKind::Linear),
            "temporal" => Ok(TaskKind::Temporal),
            _ => Err(Error::InvalidConfig(format!("unknown task {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub task: TaskKind,
    pub subjects: usize,
    pub trials_per_subject: usize,
    pub frames_per_trial: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub noise_sd: f64,
    pub subject_effect_sd: f64,
    pub seed: u64,
    /// Frames of history the temporal target depends on.
    pub lag: usize,
    /// Window length models will see; the lag must fit inside it.
    pub window: usize,
    pub hz: f64,
    pub category: Category,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            task: TaskKind::Linear,
            subjects: 5,
            trials_per_subject: 3,
            frames_per_trial: 300,
            f_in: 12,
            f_out: 4,
            noise_sd: 0.0,
            subject_effect_sd: 0.0,
            seed: 0,
            lag: 5,
            window: 10,
            hz: 100.0,
            category: Category::JointAngles,
        }
    }
}

impl SynthSpec {
    pub fn linear() -> Self {
        Self::default()
    }

    pub fn temporal() -> Self {
        Self {
            task: TaskKind::Temporal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.subjects,
            self.trials_per_subject,
            self.frames_per_trial,
            self.f_in,
            self.f_out,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidSpec("synthetic counts must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.subject_effect_sd >= 0.0) {
            return Err(Error::InvalidSpec("noise and subject effect must be non-negative".into()));
        }
        if self.hz.is_nan() || self.hz <= 0.0 {
            return Err(Error::InvalidSpec("sampling rate must be positive".into()));
        }
        if self.task == TaskKind::Temporal {
            if self.lag >= self.window {
                return Err(Error::LagTooLarge {
                    lag: self.lag,
                    window: self.window,
                });
            }
            if self.frames_per_trial < self.lag + 1 {
                return Err(Error::InvalidSpec("temporal task needs frames > lag".into()));
            }
        }
        Ok(())
    }
}

/// Ground-truth mapping of a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub task: TaskKind,
    pub lag: usize,
    /// Linear task: `f_out x f_in` mixing. Temporal task: gate projections.
    pub mix: Matrix,
    /// Temporal task: lagged read-out projections (`f_out x f_in`).
    pub lagged: Option<Matrix>,
    pub intercept: Vec<f64>,
    pub subject_offsets: BTreeMap<String, Vec<f64>>,
    pub noise_sd: f64,
    /// Seed the cohort was actually drawn from (differs after reseeding).
    pub seed_used: u64,
    pub memoryless_nrmse: Option<f64>,
}

impl OracleModel {
    /// Noise-free outputs for `inputs`, with or without the subject's offset.
    /// Frames before `lag` read the first frame as their history.
    pub fn predict(&self, subject: Option<&str>, inputs: &Matrix) -> Result<Matrix> {
        let (f_out, f_in) = self.mix.shape();
        if inputs.cols() != f_in {
            return Err(Error::ShapeMismatch(format!(
                "oracle expects {f_in} inputs, got {}",
                inputs.cols()
            )));
        }
        let offset = match subject {
            Some(s) => self
                .subject_offsets
                .get(s)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("unknown subject {s}")))?,
            None => vec![0.0; f_out],
        };
        let mut out = Matrix::zeros(inputs.rows(), f_out);
        for t in 0..inputs.rows() {
            let x = inputs.row(t);
            let past = inputs.row(t.saturating_sub(self.lag));
            for k in 0..f_out {
                let a = dot(self.mix.row(k), x);
                let v = match (&self.lagged, self.task) {
                    (Some(l), TaskKind::Temporal) => a.tanh() * dot(l.row(k), past),
                    _ => a,
                };
                out[(t, k)] = v + self.intercept[k] + offset[k];
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(rng: &mut RngStream, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| sd * rng.normal()).collect()).expect("sized")
}

/// Band-limited input curves: periods between 12 and 60 frames.
fn input_curves(rng: &mut RngStream, frames: usize, f_in: usize) -> Matrix {
    let amp = (1.0 / HARMONICS as f64).sqrt();
    let waves: Vec<(f64, f64)> = (0..f_in * HARMONICS)
        .map(|_| (rng.uniform_range(1.0 / 60.0, 1.0 / 12.0), rng.uniform_range(0.0, TAU)))
        .collect();
    let mut m = Matrix::zeros(frames, f_in);
    for t in 0..frames {
        for j in 0..f_in {
            m[(t, j)] = waves[j * HARMONICS..(j + 1) * HARMONICS]
                .iter()
                .map(|(f, p)| amp * (TAU * f * t as f64 + p).sin())
                .sum();
        }
    }
    m
}

fn subject_id(s: usize) -> String {
    format!("S{}", s + 1)
}

fn draw(spec: &SynthSpec, seed: u64) -> Result<(Vec<TrialBundle>, OracleModel)> {
    let mut prng = RngStream::new(derive_seed(seed, &[0]));
    let (f_in, f_out) = (spec.f_in, spec.f_out);
    let scale = (1.0 / f_in as f64).sqrt();
    let (mix, lagged) = match spec.task {
        TaskKind::Linear => (gaussian(&mut prng, f_out, f_in, scale), None),
        TaskKind::Temporal => (
            gaussian(&mut prng, f_out, f_in, 2.0 * scale),
            Some(gaussian(&mut prng, f_out, f_in, scale)),
        ),
    };
    let intercept = (0..f_out).map(|_| prng.normal()).collect();
    let subject_offsets = (0..spec.subjects)
        .map(|s| {
            let mut r = RngStream::new(derive_seed(seed, &[2, s as u64]));
            let off = (0..f_out).map(|_| spec.subject_effect_sd * r.normal()).collect();
            (subject_id(s), off)
        })
        .collect();
    let oracle = OracleModel {
        task: spec.task,
        lag: if spec.task == TaskKind::Temporal { spec.lag } else { 0 },
        mix,
        lagged,
        intercept,
        subject_offsets,
        noise_sd: spec.noise_sd,
        seed_used: seed,
        memoryless_nrmse: None,
    };

    let input_names: Vec<String> = (0..f_in).map(|j| format!("x{j}")).collect();
    let output_names: Vec<String> = (0..f_out).map(|k| format!("y{k}")).collect();
    let n = spec.subjects * spec.trials_per_subject;
    let bundles = map_indexed(n, crate::parallel::default_jobs().min(n), |i| {
        let (s, t) = (i / spec.trials_per_subject, i % spec.trials_per_subject);
        let path = [s as u64, t as u64];
        let mut irng = RngStream::new(derive_seed(seed, &[1, path[0], path[1]]));
        let inputs = input_curves(&mut irng, spec.frames_per_trial, f_in);
        let sid = subject_id(s);
        let mut outputs = oracle.predict(Some(&sid), &inputs)?;
        if spec.noise_sd > 0.0 {
            let mut nrng = RngStream::new(derive_seed(seed, &[3, path[0], path[1]]));
            outputs.as_mut_slice().iter_mut().for_each(|v| *v += spec.noise_sd * nrng.normal());
        }
        let meta = SubjectMeta::new(sid.clone(), 65.0 + 3.0 * s as f64, 1.70 + 0.02 * s as f64)?;
        TrialBundle::new(
            meta,
            format!("{sid}_T{}", t + 1),
            spec.category,
            spec.hz,
            input_names.clone(),
            inputs,
            output_names.clone(),
            outputs,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((bundles, oracle))
}

/// Mean over output features of the pooled NRMSE of the best affine map of
/// the current frame, fitted on noise-free outputs.
pub fn memoryless_nrmse(bundles: &[TrialBundle], oracle: &OracleModel) -> Result<f64> {
    let clean: Vec<Samples> = bundles
        .iter()
        .map(|b| {
            let y = oracle.predict(Some(b.subject_id()), &b.inputs)?;
            Samples::frames(b).with_targets(y.into_vec())
        })
        .collect::<Result<_>>()?;
    let all = Samples::concat(&clean)?;
    let model = fit_linear(&all)?;
    let pred = model.predict_samples(&all, 1)?;
    let truth = all.targets_matrix();
    let f = truth.cols();
    let mut total = 0.0;
    for k in 0..f {
        total += nrmse(&pred.column(k), &truth.column(k))?;
    }
    Ok(total / f as f64)
}

pub fn gen_linear_task(spec: &SynthSpec) -> Result<(Vec<TrialBundle>, OracleModel)> {
    if spec.task != TaskKind::Linear {
        return Err(Error::InvalidSpec("linear generator needs task = linear".into()));
    }
    spec.validate()?;
    draw(spec, spec.seed)
}

/// Temporal cohort, reseeding until a memoryless affine fit leaves at least
/// [`MIN_MEMORYLESS_NRMSE`].
pub fn gen_temporal_task(spec: &SynthSpec, lag: usize) -> Result<(Vec<TrialBundle>, OracleModel)> {
    let spec = SynthSpec {
        task: TaskKind::Temporal,
        lag,
        ..spec.clone()
    };
    spec.validate()?;
    for attempt in 0..MAX_RESEEDS {
        let seed = if attempt == 0 {
            spec.seed
        } else {
            derive_seed(spec.seed, &[99, attempt])
        };
        let (bundles, mut oracle) = draw(&spec, seed)?;
        let score = memoryless_nrmse(&bundles, &oracle)?;
        if score >= MIN_MEMORYLESS_NRMSE {
            oracle.memoryless_nrmse = Some(score);
            return Ok((bundles, oracle));
        }
        log::debug!("seed {seed}: memoryless NRMSE {score:.3} too low, reseeding");
    }
    Err(Error::InvalidSpec(
        "could not draw a temporal task that defeats memoryless models".into(),
    ))
}

pub fn generate(spec: &SynthSpec) -> Result<(Vec<TrialBundle>, OracleModel)> {
    match spec.task {
        TaskKind::Linear => gen_linear_task(spec),
        TaskKind::Temporal => gen_temporal_task(spec, spec.lag),
    }
}

/// Writes one bundle directory per trial plus the oracle file.
pub fn write_cohort(dir: impl AsRef<Path>, bundles: &[TrialBundle], oracle: &OracleModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for b in bundles {
        b.save(dir.join(&b.trial_id))?;
    }
    oracle.save(dir.join(ORACLE_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_trials;
    use crate::metrics::pearson_r;
    use crate::numerics::population_sd;

    #[test]
    fn linear_oracle_is_recovered() {
        let (bundles, oracle) = gen_linear_task(&SynthSpec::linear()).unwrap();
        assert_eq!(bundles.len(), 15);
        let train: Vec<Samples> = bundles[..12].iter().map(Samples::frames).collect();
        let model = fit_linear(&Samples::concat(&train).unwrap()).unwrap();
        // raw-unit weights: W_raw[k][j] = W[k][j] * sd_y[k] / sd_x[j]
        let w = &model.network.params()[0];
        for k in 0..4 {
            for j in 0..12 {
                let raw = w.values[k * 12 + j] * model.output_scaler.sd[k] / model.input_scaler.sd[j];
                assert!((raw - oracle.mix[(k, j)]).abs() < 1e-6);
            }
        }
        let test = Samples::frames(&bundles[14]);
        let pred = model.predict_samples(&test, 1).unwrap();
        let truth = test.targets_matrix();
        for k in 0..4 {
            assert!((pearson_r(&pred.column(k), &truth.column(k)).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_cohort() {
        let spec = SynthSpec {
            seed: 3,
            noise_sd: 0.1,
            subject_effect_sd: 0.5,
            ..SynthSpec::linear()
        };
        assert_eq!(gen_linear_task(&spec).unwrap(), gen_linear_task(&spec).unwrap());
        let other = SynthSpec { seed: 4, ..spec.clone() };
        assert_ne!(gen_linear_task(&spec).unwrap().0, gen_linear_task(&other).unwrap().0);
    }

    #[test]
    fn oracle_residual_matches_noise() {
        let spec = SynthSpec {
            subjects: 1,
            trials_per_subject: 1,
            frames_per_trial: 10_000,
            noise_sd: 0.2,
            seed: 5,
            ..SynthSpec::linear()
        };
        let (bundles, oracle) = gen_linear_task(&spec).unwrap();
        let b = &bundles[0];
        let clean = oracle.predict(Some("S1"), &b.inputs).unwrap();
        for k in 0..spec.f_out {
            let truth = b.outputs.column(k);
            let got = nrmse(&clean.column(k), &truth).unwrap();
            let want = 0.2 / population_sd(&truth);
            assert!((got / want - 1.0).abs() < 0.1, "feature {k}: {got} vs {want}");
        }
    }

    #[test]
    fn temporal_defeats_memoryless_fit() {
        let spec = SynthSpec {
            noise_sd: 0.05,
            ..SynthSpec::temporal()
        };
        let (bundles, oracle) = gen_temporal_task(&spec, 5).unwrap();
        assert!(oracle.memoryless_nrmse.unwrap() >= MIN_MEMORYLESS_NRMSE);
        for b in &bundles {
            b.validate().unwrap();
            assert!(b.outputs.is_finite());
        }
    }

    #[test]
    fn zero_lag_reads_current_frame() {
        let spec = SynthSpec {
            lag: 0,
            ..SynthSpec::temporal()
        };
        let (bundles, oracle) = draw(&spec, 1).unwrap();
        let x = bundles[0].inputs.row(7);
        let l = oracle.lagged.as_ref().unwrap();
        let want = dot(oracle.mix.row(0), x).tanh() * dot(l.row(0), x) + oracle.intercept[0];
        assert!((bundles[0].outputs[(7, 0)] - want).abs() < 1e-12);
    }

    #[test]
    fn lag_must_fit_window() {
        assert!(matches!(
            gen_temporal_task(&SynthSpec::temporal(), 10),
            Err(Error::LagTooLarge { lag: 10, window: 10 })
        ));
        let bad = SynthSpec {
            subjects: 0,
            ..SynthSpec::linear()
        };
        assert!(matches!(gen_linear_task(&bad), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn subject_effect_hurts_offset_blind_oracle() {
        let mut last = -1.0;
        for sd in [0.0, 0.3, 1.0] {
            let spec = SynthSpec {
                subject_effect_sd: sd,
                seed: 11,
                ..SynthSpec::linear()
            };
            let (bundles, oracle) = gen_linear_task(&spec).unwrap();
            let mut err = 0.0;
            for b in &bundles {
                let p = oracle.predict(None, &b.inputs).unwrap();
                for k in 0..spec.f_out {
                    err += nrmse(&p.column(k), &b.outputs.column(k)).unwrap();
                }
            }
            assert!(err > last);
            last = err;
        }
    }

    #[test]
    fn cohort_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (bundles, oracle) = gen_linear_task(&SynthSpec {
            subjects: 2,
            trials_per_subject: 2,
            frames_per_trial: 40,
            ..SynthSpec::linear()
        })
        .unwrap();
        write_cohort(dir.path(), &bundles, &oracle).unwrap();
        let back = load_trials(dir.path()).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[0].inputs, bundles[0].inputs);
        assert_eq!(OracleModel::load(dir.path().join(ORACLE_FILE)).unwrap(), oracle);
    }
}
