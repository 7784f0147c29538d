use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, HyperConfig};
use super::split::SplitPlan;
use crate::dataset::{Category, Samples, TrialBundle, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::nn::{init_network, Arch};
use crate::numerics::{derive_seed, RngStream};
use crate::optim::{fit_linear, loss_normalized_mse, train, TrainLog, TrainedModel};
use crate::parallel::{default_jobs, map_indexed};

/// Fold tag used when deriving seeds for the final retrain.
pub const FINAL_FOLD: u64 = u64::MAX;

/// Per-trial samples prepared once for a given sequence length.
#[derive(Debug, Clone)]
pub struct TrialData {
    seq_len: usize,
    by_id: BTreeMap<String, Samples>,
    input_names: Vec<String>,
    output_names: Vec<String>,
    category: Category,
}

impl TrialData {
    /// Frames when `seq_len == 1`, sliding windows otherwise.
    pub fn prepare(bundles: &[TrialBundle], seq_len: usize) -> Result<Self> {
        let first = bundles.first().ok_or(Error::EmptyTrainingSet)?;
        let mut by_id = BTreeMap::new();
        for b in bundles {
            if b.input_names != first.input_names || b.output_names != first.output_names {
                return Err(Error::ShapeMismatch(format!(
                    "trial {} has different channels from {}",
                    b.trial_id, first.trial_id
                )));
            }
            let s = if seq_len <= 1 {
                Samples::frames(b)
            } else {
                Samples::windows(b, seq_len)?
            };
            if by_id.insert(b.trial_id.clone(), s).is_some() {
                return Err(Error::DuplicateTrial(b.trial_id.clone()));
            }
        }
        Ok(Self {
            seq_len: seq_len.max(1),
            by_id,
            input_names: first.input_names.clone(),
            output_names: first.output_names.clone(),
            category: first.category,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn output_names(&self) -> &[String] {
        &self.output_names
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn trial(&self, id: &str) -> Result<&Samples> {
        self.by_id.get(id).ok_or_else(|| Error::UnknownTrial(id.to_string()))
    }

    /// Concatenation of the given trials, in the order given.
    pub fn gather(&self, ids: &[String]) -> Result<Samples> {
        let parts = ids.iter().map(|id| self.trial(id)).collect::<Result<Vec<_>>>()?;
        Samples::concat(parts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOptions {
    pub jobs: usize,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    /// Configurations evaluated between checkpoint flushes.
    pub chunk_configs: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            jobs: default_jobs(),
            seed: 0,
            checkpoint: None,
            chunk_configs: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigStatus {
    Ok,
    Failed,
}

/// Outcome of one configuration across all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub index: usize,
    pub config: HyperConfig,
    pub status: ConfigStatus,
    pub fold_losses: Vec<Option<f64>>,
    pub mean_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// First checkpoint line; binds records to the search that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    seed: u64,
    configs: usize,
    seq_len: usize,
    grid: GridSpec,
    plan: SplitPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub grid: GridSpec,
    pub plan: SplitPlan,
    pub seed: u64,
    pub seq_len: usize,
    pub records: Vec<ConfigRecord>,
    pub best_index: usize,
    pub best_config: HyperConfig,
    pub best_val_loss: f64,
    pub model: TrainedModel,
    pub final_log: Option<TrainLog>,
}

impl SearchResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
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

/// Seeds `(init, shuffle)` for one (config, fold) cell of the search.
pub fn run_seeds(global: u64, config: usize, fold: u64) -> (u64, u64) {
    (
        derive_seed(global, &[config as u64, fold, 0]),
        derive_seed(global, &[config as u64, fold, 1]),
    )
}

/// Trains `config` on `train_set`; returns the model, its log and the
/// final-epoch validation loss when `val_set` is given.
pub fn fit_config(
    config: &HyperConfig,
    train_set: &Samples,
    val_set: Option<&Samples>,
    seeds: (u64, u64),
) -> Result<(TrainedModel, Option<TrainLog>, Option<f64>)> {
    if config.arch == Arch::Linear {
        let model = fit_linear(train_set)?;
        let loss = match val_set {
            Some(v) => {
                let pred = model.predict_samples(v, 1)?;
                Some(loss_normalized_mse(&pred, &v.targets_matrix(), &model.output_scaler)?)
            }
            None => None,
        };
        return Ok((model, None, loss));
    }
    let spec = config.network_spec(train_set.n_in(), train_set.n_out(), train_set.seq_len());
    let net = init_network(&spec, &mut RngStream::new(seeds.0))?;
    let (mut model, log) = train(
        net,
        train_set,
        val_set,
        &config.optimizer_config(),
        &config.train_config(seeds.1),
    )?;
    model.seeds.init = Some(seeds.0);
    let loss = log.final_val_loss();
    Ok((model, Some(log), loss))
}

fn write_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads completed records, dropping a truncated final line, and rewrites
/// the file so that appending continues from a clean state.
fn resume_checkpoint(path: &Path, header: &CheckpointHeader, grid: &GridSpec) -> Result<Vec<ConfigRecord>> {
    let mut records = Vec::new();
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if let Some(first) = lines.first() {
            let found: CheckpointHeader = serde_json::from_str(first)
                .map_err(|e| Error::CheckpointMismatch(format!("unreadable header: {e}")))?;
            if found != *header {
                return Err(Error::CheckpointMismatch(
                    "checkpoint belongs to a different search".into(),
                ));
            }
            for (k, line) in lines.iter().enumerate().skip(1) {
                let rec: ConfigRecord = match serde_json::from_str(line) {
                    Ok(r) => r,
                    Err(_) if k + 1 == lines.len() && !complete => {
                        log::warn!("ignoring truncated checkpoint line {}", k + 1);
                        break;
                    }
                    Err(e) => {
                        return Err(Error::CheckpointMismatch(format!("line {}: {e}", k + 1)));
                    }
                };
                if rec.index != records.len() || rec.config != grid.config_at(rec.index)? {
                    return Err(Error::CheckpointMismatch(format!(
                        "record {} does not match the grid",
                        rec.index
                    )));
                }
                records.push(rec);
            }
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_line(&mut f, header)?;
    for r in &records {
        write_line(&mut f, r)?;
    }
    f.flush()?;
    Ok(records)
}

/// Cross-validated grid search followed by retraining the winner on every
/// non-test trial.
pub fn run_search(grid: &GridSpec, plan: &SplitPlan, data: &TrialData, opts: &SearchOptions) -> Result<SearchResult> {
    let n = grid.count()?;
    if plan.folds.is_empty() {
        return Err(Error::TooFewTrials("split plan has no folds".into()));
    }
    let folds: Vec<(Samples, Samples)> = plan
        .folds
        .iter()
        .map(|f| Ok((data.gather(&f.train)?, data.gather(&f.val)?)))
        .collect::<Result<_>>()?;
    let header = CheckpointHeader {
        seed: opts.seed,
        configs: n,
        seq_len: data.seq_len(),
        grid: grid.clone(),
        plan: plan.clone(),
    };
    let mut records = match &opts.checkpoint {
        Some(p) => resume_checkpoint(p, &header, grid)?,
        None => Vec::new(),
    };
    if !records.is_empty() {
        log::info!("resuming search at config {} of {n}", records.len());
    }
    let mut sink = match &opts.checkpoint {
        Some(p) => Some(OpenOptions::new().append(true).open(p)?),
        None => None,
    };

    let nf = folds.len();
    let chunk = opts.chunk_configs.max(1);
    while records.len() < n {
        let start = records.len();
        let end = (start + chunk).min(n);
        let configs: Vec<HyperConfig> = (start..end).map(|i| grid.config_at(i)).collect::<Result<_>>()?;
        let cells = map_indexed((end - start) * nf, opts.jobs, |k| {
            let (c, f) = (k / nf, k % nf);
            let seeds = run_seeds(opts.seed, start + c, f as u64);
            fit_config(&configs[c], &folds[f].0, Some(&folds[f].1), seeds).map(|(_, _, loss)| loss)
        });
        let mut cells = cells.into_iter();
        for (c, config) in configs.into_iter().enumerate() {
            let mut fold_losses = Vec::with_capacity(nf);
            let mut error = None;
            for r in cells.by_ref().take(nf) {
                match r {
                    Ok(l) => fold_losses.push(l),
                    Err(e) => {
                        fold_losses.push(None);
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let ok = error.is_none() && fold_losses.iter().all(Option::is_some);
            let mean = ok.then(|| fold_losses.iter().flatten().sum::<f64>() / nf as f64);
            let rec = ConfigRecord {
                index: start + c,
                config,
                status: if ok { ConfigStatus::Ok } else { ConfigStatus::Failed },
                fold_losses,
                mean_val_loss: mean,
                error,
            };
            if let Some(f) = sink.as_mut() {
                write_line(f, &rec)?;
            }
            records.push(rec);
        }
        if let Some(f) = sink.as_mut() {
            f.flush()?;
        }
        log::info!("evaluated {end} of {n} configs");
    }

    let mut best: Option<(usize, f64)> = None;
    for r in &records {
        if let Some(l) = r.mean_val_loss {
            if best.is_none_or(|(_, b)| l < b) {
                best = Some((r.index, l));
            }
        }
    }
    let (best_index, best_val_loss) = best.ok_or(Error::AllConfigsFailed)?;
    let best_config = records[best_index].config;
    let dev = data.gather(&plan.development())?;
    let (model, final_log, _) = fit_config(&best_config, &dev, None, run_seeds(opts.seed, best_index, FINAL_FOLD))?;
    let model = model
        .with_names(data.input_names().to_vec(), data.output_names().to_vec())
        .with_category(data.category());
    Ok(SearchResult {
        grid: grid.clone(),
        plan: plan.clone(),
        seed: opts.seed,
        seq_len: data.seq_len(),
        records,
        best_index,
        best_config,
        best_val_loss,
        model,
        final_log,
    })
}

/// Sequence length a grid's models consume.
pub fn seq_len_for(arch: Arch, window_t: Option<usize>) -> usize {
    match arch {
        Arch::Rnn => window_t.unwrap_or(DEFAULT_WINDOW),
        _ => 1,
    }
}
