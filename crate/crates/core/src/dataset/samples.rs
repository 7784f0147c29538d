use std::sync::Arc;

use crate::dataset::TrialBundle;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Many-to-one window length used by the recurrent models.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `t x F_in` frames `[frame + 1 - t, frame]`.
    pub inputs: Matrix,
    pub target: Vec<f64>,
    pub subject_id: String,
    pub trial_id: String,
    /// Index of the last frame (the one the target belongs to).
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSet {
    pub t: usize,
    pub windows: Vec<Window>,
}

/// Slides a `t`-frame window over the trial with step one.
///
/// Window `k` covers frames `k..k+t` and is paired with output row `k + t - 1`.
pub fn make_windows(bundle: &TrialBundle, t: usize) -> Result<WindowedSet> {
    let frames = bundle.frames();
    if t == 0 || frames < t {
        return Err(Error::TrialTooShort {
            trial: bundle.trial_id.clone(),
            frames,
            window: t,
        });
    }
    let windows = (0..=frames - t)
        .map(|k| Window {
            inputs: bundle.inputs.slice_rows(k, k + t),
            target: bundle.outputs.row(k + t - 1).to_vec(),
            subject_id: bundle.subject.subject_id.clone(),
            trial_id: bundle.trial_id.clone(),
            frame: k + t - 1,
        })
        .collect();
    Ok(WindowedSet { t, windows })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOrigin {
    pub trial_id: Arc<str>,
    pub frame: usize,
}

/// Flat training container: `n` input sequences of `seq_len x n_in` and `n`
/// target rows of `n_out`. Per-frame data is the `seq_len == 1` case.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    seq_len: usize,
    n_in: usize,
    n_out: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    origins: Vec<SampleOrigin>,
}

impl Samples {
    pub fn empty(seq_len: usize, n_in: usize, n_out: usize) -> Self {
        Self {
            seq_len,
            n_in,
            n_out,
            inputs: Vec::new(),
            targets: Vec::new(),
            origins: Vec::new(),
        }
    }

    /// One sample per frame.
    pub fn frames(bundle: &TrialBundle) -> Self {
        let id: Arc<str> = bundle.trial_id.as_str().into();
        Self {
            seq_len: 1,
            n_in: bundle.inputs.cols(),
            n_out: bundle.outputs.cols(),
            inputs: bundle.inputs.as_slice().to_vec(),
            targets: bundle.outputs.as_slice().to_vec(),
            origins: (0..bundle.frames())
                .map(|frame| SampleOrigin {
                    trial_id: id.clone(),
                    frame,
                })
                .collect(),
        }
    }

    /// One sample per `t`-frame window; equivalent to [`make_windows`] without
    /// materializing per-window matrices.
    pub fn windows(bundle: &TrialBundle, t: usize) -> Result<Self> {
        let frames = bundle.frames();
        if t == 0 || frames < t {
            return Err(Error::TrialTooShort {
                trial: bundle.trial_id.clone(),
                frames,
                window: t,
            });
        }
        let n_in = bundle.inputs.cols();
        let count = frames - t + 1;
        let id: Arc<str> = bundle.trial_id.as_str().into();
        let src = bundle.inputs.as_slice();
        let mut inputs = Vec::with_capacity(count * t * n_in);
        let mut targets = Vec::with_capacity(count * bundle.outputs.cols());
        let mut origins = Vec::with_capacity(count);
        for k in 0..count {
            inputs.extend_from_slice(&src[k * n_in..(k + t) * n_in]);
            targets.extend_from_slice(bundle.outputs.row(k + t - 1));
            origins.push(SampleOrigin {
                trial_id: id.clone(),
                frame: k + t - 1,
            });
        }
        Ok(Self {
            seq_len: t,
            n_in,
            n_out: bundle.outputs.cols(),
            inputs,
            targets,
            origins,
        })
    }

    pub fn from_windowed(set: &WindowedSet) -> Result<Self> {
        let first = set.windows.first().ok_or(Error::EmptyTrainingSet)?;
        let mut s = Self::empty(set.t, first.inputs.cols(), first.target.len());
        for w in &set.windows {
            if w.inputs.shape() != (set.t, s.n_in) || w.target.len() != s.n_out {
                return Err(Error::ShapeMismatch("ragged windowed set".into()));
            }
            s.inputs.extend_from_slice(w.inputs.as_slice());
            s.targets.extend_from_slice(&w.target);
            s.origins.push(SampleOrigin {
                trial_id: w.trial_id.as_str().into(),
                frame: w.frame,
            });
        }
        Ok(s)
    }

    pub fn concat<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Samples>,
    {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or(Error::EmptyTrainingSet)?.clone();
        for p in iter {
            if (p.seq_len, p.n_in, p.n_out) != (out.seq_len, out.n_in, out.n_out) {
                return Err(Error::ShapeMismatch(format!(
                    "cannot concatenate samples of shape {:?} and {:?}",
                    (out.seq_len, out.n_in, out.n_out),
                    (p.seq_len, p.n_in, p.n_out)
                )));
            }
            out.inputs.extend_from_slice(&p.inputs);
            out.targets.extend_from_slice(&p.targets);
            out.origins.extend(p.origins.iter().cloned());
        }
        Ok(out)
    }

    /// Builds samples from raw buffers (e.g. already-standardized copies).
    pub fn from_parts(
        seq_len: usize,
        n_in: usize,
        n_out: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        origins: Vec<SampleOrigin>,
    ) -> Result<Self> {
        let n = origins.len();
        if inputs.len() != n * seq_len * n_in || targets.len() != n * n_out {
            return Err(Error::ShapeMismatch("sample buffers do not match counts".into()));
        }
        Ok(Self {
            seq_len,
            n_in,
            n_out,
            inputs,
            targets,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Row-major `seq_len x n_in` input of sample `i`.
    #[inline]
    pub fn input(&self, i: usize) -> &[f64] {
        let w = self.seq_len * self.n_in;
        &self.inputs[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_out..(i + 1) * self.n_out]
    }

    pub fn origin(&self, i: usize) -> &SampleOrigin {
        &self.origins[i]
    }

    pub fn origins(&self) -> &[SampleOrigin] {
        &self.origins
    }

    pub fn inputs_raw(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets_raw(&self) -> &[f64] {
        &self.targets
    }

    /// Every input frame row of every sample (windows overlap, so frames repeat).
    pub fn input_rows(&self) -> impl Iterator<Item = &[f64]> + Clone {
        self.inputs.chunks_exact(self.n_in.max(1))
    }

    pub fn target_rows(&self) -> impl Iterator<Item = &[f64]> + Clone {
        self.targets.chunks_exact(self.n_out.max(1))
    }

    pub fn targets_matrix(&self) -> Matrix {
        Matrix::new(self.len(), self.n_out, self.targets.clone()).expect("consistent buffers")
    }

    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.seq_len,
            self.n_in,
            self.n_out,
            self.inputs.clone(),
            targets,
            self.origins.clone(),
        )
    }
}
