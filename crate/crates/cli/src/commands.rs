use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;

use mskml::dataset::{load_trials, Category, TrialBundle, TIME_FEATURE};
use mskml::metrics::{write_reports_csv, MetricsReport};
use mskml::nn::Arch;
use mskml::optim::{OptimizerKind, TrainedModel};
use mskml::parallel::default_jobs;
use mskml::protocol::{
    evaluate_final, fit_config, make_plan, run_search, run_seeds, seq_len_for,
    split_subject_naive_with_test, GridSpec, HyperConfig, Preset, SearchOptions, Setting,
    SplitPlan, TrialData, TrialSet, FINAL_FOLD,
};
use mskml::synth::{generate, write_cohort, SynthSpec, TaskKind, ORACLE_FILE};

use crate::config::{resolve_seed, RunConfig};
use crate::{EvaluateArgs, ReportArgs, RunArgs, SearchArgs, SynthArgs, TrainArgs};

pub const PLAN_FILE: &str = "plan.json";
pub const MODEL_FILE: &str = "model.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.jsonl";
pub const SEARCH_FILE: &str = "search.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const CURVES_DIR: &str = "curves";

#[derive(Debug)]
pub enum Failure {
    /// Bad or missing flags: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<mskml::Error> for Failure {
    fn from(e: mskml::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> Result<T, Failure> {
    value.parse().map_err(|_| usage(format!("invalid {what}: {value}")))
}

/// Parses a value through its serde string form (e.g. `"he_normal"`).
fn parse_serde<T: DeserializeOwned>(value: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| usage(format!("invalid {what}: {value}")))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)
}

pub fn synth(a: SynthArgs) -> Outcome {
    let task: TaskKind = parse(&a.task, "task")?;
    let spec = SynthSpec {
        task,
        subjects: a.subjects,
        trials_per_subject: a.trials,
        frames_per_trial: a.frames,
        f_in: a.f_in,
        f_out: a.f_out,
        noise_sd: a.noise,
        subject_effect_sd: a.subject_effect,
        seed: resolve_seed(a.seed, None)?,
        lag: a.lag,
        window: a.window,
        ..SynthSpec::default()
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let (bundles, oracle) = generate(&spec)?;
    write_cohort(&a.out, &bundles, &oracle)?;
    for b in &bundles {
        println!("{}\t{}\t{} frames", b.trial_id, b.subject_id(), b.frames());
    }
    println!("oracle\t{}", a.out.join(ORACLE_FILE).display());
    Ok(())
}

/// Run flags merged over config-file defaults.
struct Resolved {
    data: Option<PathBuf>,
    arch: Option<Arch>,
    setting: Setting,
    test_subject: Option<String>,
    seed: u64,
    jobs: usize,
    window: Option<usize>,
    time_feature: bool,
    out: Option<PathBuf>,
}

fn resolve(run: &RunArgs, file: &RunConfig) -> Result<Resolved, Failure> {
    let arch = run
        .arch
        .as_deref()
        .or(file.arch.as_deref())
        .map(|s| parse::<Arch>(s, "architecture"))
        .transpose()?;
    let setting = run.setting.as_deref().or(file.setting.as_deref()).unwrap_or("se");
    Ok(Resolved {
        data: run.data.clone().or_else(|| file.data_dir.clone()),
        arch,
        setting: parse(setting, "setting")?,
        test_subject: run.test_subject.clone(),
        seed: resolve_seed(run.seed, file.seed)?,
        jobs: run.jobs.or(file.jobs).unwrap_or_else(default_jobs).max(1),
        window: run.window.or(file.window),
        time_feature: run.time_feature,
        out: run.out.clone().or_else(|| file.output_dir.clone()),
    })
}

fn load_cohort(dir: &Path, time_feature: bool) -> Result<Vec<TrialBundle>, Failure> {
    let bundles = load_trials(dir).with_context(|| format!("loading trials from {}", dir.display()))?;
    if bundles.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("no trials found in {}", dir.display())));
    }
    if !time_feature {
        return Ok(bundles);
    }
    Ok(bundles
        .into_iter()
        .map(TrialBundle::with_time_feature)
        .collect::<mskml::Result<_>>()?)
}

fn plan_for(r: &Resolved, bundles: &[TrialBundle]) -> Result<SplitPlan, Failure> {
    let set = TrialSet::from_bundles(bundles)?;
    let plan = match (&r.test_subject, r.setting) {
        (Some(s), Setting::SubjectNaive) => split_subject_naive_with_test(&set, s, r.seed)?,
        (Some(_), Setting::SubjectExposed) => {
            return Err(usage("--test-subject applies only to the subject-naive setting"));
        }
        (None, setting) => make_plan(setting, &set, r.seed)?,
    };
    Ok(plan)
}

pub fn train(a: TrainArgs, file: &RunConfig) -> Outcome {
    let r = resolve(&a.run, file)?;
    let arch = required(r.arch, "arch")?;
    let data_dir = required(r.data.clone(), "data")?;
    let out = required(r.out.clone(), "out")?;

    let mut cfg = HyperConfig::base(arch);
    if let Some(v) = &a.optimizer {
        cfg.optimizer = parse::<OptimizerKind>(v, "optimizer")?;
    }
    if let Some(v) = &a.activation {
        cfg.activation = parse_serde(v, "activation")?;
    }
    if let Some(v) = &a.init {
        cfg.init = parse_serde(v, "init scheme")?;
    }
    if let Some(v) = &a.cell {
        cfg.cell = Some(parse_serde(v, "cell")?);
    }
    cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.nodes = a.nodes.unwrap_or(cfg.nodes);
    cfg.hidden_layers = a.layers.unwrap_or(cfg.hidden_layers);
    cfg.dropout = a.dropout.unwrap_or(cfg.dropout);

    let bundles = load_cohort(&data_dir, r.time_feature)?;
    let plan = plan_for(&r, &bundles)?;
    let data = TrialData::prepare(&bundles, seq_len_for(arch, r.window))?;
    let dev = data.gather(&plan.development())?;
    let (model, log, _) = fit_config(&cfg, &dev, None, run_seeds(r.seed, 0, FINAL_FOLD))?;
    let model = model
        .with_names(data.input_names().to_vec(), data.output_names().to_vec())
        .with_category(data.category());

    create_dir(&out)?;
    plan.save(out.join(PLAN_FILE))?;
    model.save(out.join(MODEL_FILE))?;
    if let Some(log) = &log {
        log.save_csv(out.join(TRAIN_LOG_FILE))?;
        if let Some(last) = log.train_loss.last() {
            println!("final train loss {last}");
        }
    }
    println!("model\t{}", out.join(MODEL_FILE).display());
    Ok(())
}

fn grid_for(a: &SearchArgs, file: &RunConfig, arch: Option<Arch>) -> Result<GridSpec, Failure> {
    if let Some(path) = a.grid_file.as_ref().or(file.grid_file.as_ref()) {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading grid {}", path.display()))?;
        let grid: GridSpec = serde_json::from_str(&text).map_err(|e| usage(format!("invalid grid file: {e}")))?;
        grid.validate().map_err(|e| usage(e.to_string()))?;
        return Ok(grid);
    }
    let name = a.grid.as_deref().or(file.grid.as_deref()).unwrap_or("smoke");
    let preset: Preset = parse(name, "grid preset")?;
    let arch = match (preset, arch) {
        (_, Some(a)) => a,
        (Preset::Table1, None) => Arch::Ffnn,
        (Preset::Table2, None) => Arch::Rnn,
        (Preset::Smoke, None) => return Err(usage("the smoke grid needs --arch")),
    };
    GridSpec::preset(preset, arch).map_err(|e| usage(e.to_string()))
}

pub fn search(a: SearchArgs, file: &RunConfig) -> Outcome {
    let r = resolve(&a.run, file)?;
    let grid = grid_for(&a, file, r.arch)?;
    if a.dry_run {
        println!("{}", grid.count()?);
        return Ok(());
    }
    let data_dir = required(r.data.clone(), "data")?;
    let out = required(r.out.clone(), "out")?;
    let bundles = load_cohort(&data_dir, r.time_feature)?;
    let plan = plan_for(&r, &bundles)?;
    let data = TrialData::prepare(&bundles, seq_len_for(grid.arch, r.window))?;

    create_dir(&out)?;
    plan.save(out.join(PLAN_FILE))?;
    let opts = SearchOptions {
        jobs: r.jobs,
        seed: r.seed,
        checkpoint: Some(out.join(CHECKPOINT_FILE)),
        chunk_configs: a.chunk,
    };
    log::info!(
        "searching {} configs over {} folds with {} worker(s)",
        grid.count()?,
        plan.folds.len(),
        opts.jobs
    );
    let result = run_search(&grid, &plan, &data, &opts)?;
    result.save(out.join(SEARCH_FILE))?;
    result.model.save(out.join(MODEL_FILE))?;
    if let Some(log) = &result.final_log {
        log.save_csv(out.join(TRAIN_LOG_FILE))?;
    }
    println!(
        "best config {} (mean validation loss {})",
        result.best_index, result.best_val_loss
    );
    println!("{}", serde_json::to_string(&result.best_config).context("encoding config")?);
    println!("model\t{}", out.join(MODEL_FILE).display());
    Ok(())
}

pub fn evaluate(a: EvaluateArgs, file: &RunConfig) -> Outcome {
    let data_dir = required(a.data.clone().or_else(|| file.data_dir.clone()), "data")?;
    let out = required(a.out.clone().or_else(|| file.output_dir.clone()), "out")?;
    let model = TrainedModel::load(&a.model)?;
    let plan = a.plan.as_ref().map(SplitPlan::load).transpose()?;
    let wants_time = model.input_names.first().map(String::as_str) == Some(TIME_FEATURE);
    let mut bundles = load_cohort(&data_dir, false)?;
    if wants_time {
        bundles = bundles
            .into_iter()
            .map(|b| if b.has_time_feature() { Ok(b) } else { b.with_time_feature() })
            .collect::<mskml::Result<_>>()?;
    }
    let test: Vec<TrialBundle> = match &plan {
        Some(p) => {
            for id in &p.test {
                if !bundles.iter().any(|b| &b.trial_id == id) {
                    return Err(mskml::Error::UnknownTrial(id.clone()).into());
                }
            }
            bundles.into_iter().filter(|b| p.test.contains(&b.trial_id)).collect()
        }
        None => bundles,
    };
    let name = a.name.clone().unwrap_or_else(|| model.network.spec().arch.to_string());
    let jobs = a.jobs.or(file.jobs).unwrap_or_else(default_jobs).max(1);
    let ev = evaluate_final(&model, plan.as_ref(), &test, &name, jobs)?;

    create_dir(&out)?;
    ev.report.save(out.join(REPORT_JSON), out.join(REPORT_CSV))?;
    ev.write_curves(out.join(CURVES_DIR))?;
    for agg in &ev.report.aggregates {
        println!(
            "{}\tr {:.4}\tnrmse {:.4}\t({} rows)",
            agg.category, agg.r.mean, agg.nrmse.mean, agg.rows
        );
    }
    println!("report\t{}", out.join(REPORT_CSV).display());
    Ok(())
}

pub fn report(a: ReportArgs) -> Outcome {
    let category = a
        .category
        .as_deref()
        .map(|c| parse::<Category>(c, "category"))
        .transpose()?;
    let reports = a
        .inputs
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<MetricsReport>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    match &a.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_reports_csv(&reports, category, &mut buf)?;
            std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => write_reports_csv(&reports, category, std::io::stdout().lock())?,
    }
    Ok(())
}
