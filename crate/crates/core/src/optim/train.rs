use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{standardize_sample, ModelSeeds, TrainedModel};
use super::{step, OptimizerConfig, OptimizerState};
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::nn::{Gradients, Network};
use crate::numerics::{derive_seed, fit_rows, RngStream, Scaler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn new(batch_size: usize, epochs: usize, shuffle_seed: u64) -> Self {
        Self {
            batch_size,
            epochs,
            shuffle_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch size and epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn dropout_seed(&self) -> u64 {
        derive_seed(self.shuffle_seed, &[1])
    }
}

/// Per-epoch losses in standardized target space. `train_loss[e]` is the mean
/// over the epoch's mini-batches of the pre-update batch loss, weighted by
/// batch size; `val_loss[e]` is measured in evaluation mode after epoch `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub optimizer_steps: u64,
}

impl TrainLog {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied().flatten()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            let v = v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([(e + 1).to_string(), t.to_string(), v])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Standardized copy of a sample set.
struct Standardized {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    in_width: usize,
    n_out: usize,
}

impl Standardized {
    fn new(s: &Samples, xs: &Scaler, ys: &Scaler) -> Self {
        let mut targets = vec![0.0; s.targets_raw().len()];
        for (src, dst) in s
            .target_rows()
            .zip(targets.chunks_exact_mut(s.n_out().max(1)))
        {
            ys.apply_row(src, dst);
        }
        Self {
            inputs: standardize_sample(xs, s.inputs_raw()),
            targets,
            in_width: s.seq_len() * s.n_in(),
            n_out: s.n_out(),
        }
    }

    fn len(&self) -> usize {
        self.targets.len() / self.n_out
    }

    fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.in_width..(i + 1) * self.in_width]
    }

    fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_out..(i + 1) * self.n_out]
    }

    fn eval_loss(&self, net: &Network) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.len() {
            let y = net.predict(self.input(i))?;
            total += y
                .iter()
                .zip(self.target(i))
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>();
        }
        Ok(total / (self.len() * self.n_out) as f64)
    }
}

fn check_shapes(net: &Network, s: &Samples) -> Result<()> {
    let spec = net.spec();
    if s.seq_len() != spec.seq_len() || s.n_in() != spec.input_dim || s.n_out() != spec.output_dim {
        return Err(Error::ShapeMismatch(format!(
            "samples ({} x {} -> {}) do not fit network ({} x {} -> {})",
            s.seq_len(),
            s.n_in(),
            s.n_out(),
            spec.seq_len(),
            spec.input_dim,
            spec.output_dim
        )));
    }
    Ok(())
}

/// Mini-batch training for exactly `tc.epochs` passes over `train_set`.
///
/// Scalers are fitted on `train_set` only. `val_set` is read solely to log
/// its loss and never influences the weights.
pub fn train(
    mut net: Network,
    train_set: &Samples,
    val_set: Option<&Samples>,
    opt: &OptimizerConfig,
    tc: &TrainConfig,
) -> Result<(TrainedModel, TrainLog)> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    opt.validate()?;
    tc.validate()?;
    check_shapes(&net, train_set)?;
    if let Some(v) = val_set {
        check_shapes(&net, v)?;
    }
    let xs = fit_train_rows(train_set.n_in(), train_set.input_rows())?;
    let ys = fit_train_rows(train_set.n_out(), train_set.target_rows())?;
    let tr = Standardized::new(train_set, &xs, &ys);
    let va = val_set.filter(|v| !v.is_empty()).map(|v| Standardized::new(v, &xs, &ys));

    let mut order: Vec<usize> = (0..tr.len()).collect();
    let mut shuffle_rng = RngStream::new(tc.shuffle_seed);
    let mut dropout_rng = RngStream::new(tc.dropout_seed());
    let mut state = OptimizerState::new(net.params());
    let mut grads = Gradients::zeros_like(&net);
    let mut d_out = vec![0.0; tr.n_out];
    let mut log = TrainLog {
        train_loss: Vec::with_capacity(tc.epochs),
        val_loss: Vec::with_capacity(tc.epochs),
        optimizer_steps: 0,
    };

    for epoch in 0..tc.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_sq = 0.0;
        for batch in order.chunks(tc.batch_size) {
            grads.fill_zero();
            let scale = 2.0 / (batch.len() * tr.n_out) as f64;
            for &i in batch {
                let (y, tape) = net.forward_train(tr.input(i), Some(&mut dropout_rng))?;
                for ((d, p), t) in d_out.iter_mut().zip(&y).zip(tr.target(i)) {
                    let e = p - t;
                    epoch_sq += e * e;
                    *d = scale * e;
                }
                net.backward(&tape, &d_out, &mut grads)?;
            }
            step(&mut state, net.params_mut(), &grads, opt)?;
        }
        let loss = epoch_sq / (tr.len() * tr.n_out) as f64;
        if !loss.is_finite() || !net.params().iter().all(|p| p.values.iter().all(|v| v.is_finite())) {
            return Err(Error::DivergedLoss {
                epoch: epoch + 1,
                value: loss,
            });
        }
        log.train_loss.push(loss);
        log.val_loss.push(match &va {
            Some(v) => Some(v.eval_loss(&net)?),
            None => None,
        });
    }
    log.optimizer_steps = state.steps();

    let seeds = ModelSeeds {
        init: None,
        shuffle: tc.shuffle_seed,
        dropout: tc.dropout_seed(),
    };
    Ok((TrainedModel::assemble(net, xs, ys, seeds, train_set), log))
}

fn fit_train_rows<'a, I>(dim: usize, rows: I) -> Result<Scaler>
where
    I: IntoIterator<Item = &'a [f64]> + Clone,
{
    fit_rows(dim, rows).map_err(|e| match e {
        Error::TooFewRows { .. } => Error::EmptyTrainingSet,
        e => e,
    })
}
