//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p mskml --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mskml::dataset::{Category, Samples, SubjectMeta, TrialBundle};
use mskml::metrics::{nrmse, pearson_r};
use mskml::nn::{
    count_params, init_network, Activation, Arch, CellKind, CellType, Gradients, Network, NetworkSpec,
};
use mskml::numerics::{cubic_resample, resampled_len, standardize_fit, Matrix, RngStream};
use mskml::optim::{fit_linear, loss_normalized_mse};
use mskml::parallel::default_jobs;
use mskml::protocol::{
    enumerate_grid, evaluate_final, make_plan, run_search, split_subject_exposed, split_subject_naive,
    GridSpec, SearchOptions, SearchResult, Setting, SplitPlan, TrialData, TrialSet,
};
use mskml::synth::{gen_linear_task, gen_temporal_task, SynthSpec};

type Check = fn() -> Result<String, String>;
type SpecMaker = Box<dyn Fn(&mut RngStream) -> NetworkSpec>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure!(
        elapsed.as_secs_f64() < limit_s,
        "{what} took {:.2} s, limit {limit_s} s",
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn grid_cardinality() -> Result<String, String> {
    let mut notes = Vec::new();
    for (name, grid, expected) in [
        ("table1", GridSpec::table1(), 43_740usize),
        ("table2", GridSpec::table2(), 23_328),
    ] {
        let start = Instant::now();
        let n = enumerate_grid(&grid).map_err(|e| e.to_string())?.count();
        within(start.elapsed(), 1.0, name)?;
        ensure!(n == expected, "{name}: {n} configs, expected {expected}");
        ensure!(grid.count().unwrap() == expected, "{name}: closed-form count disagrees");
        notes.push(format!("{name}={n}"));
    }
    Ok(notes.join(" "))
}

fn mse(net: &Network, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let p = net.predict(x).unwrap();
        total += p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total / (xs.len() * ys[0].len()) as f64
}

fn backprop(net: &Network, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<f64> {
    let mut grads = Gradients::zeros_like(net);
    let scale = 2.0 / (xs.len() * ys[0].len()) as f64;
    for (x, y) in xs.iter().zip(ys) {
        let (p, tape) = net.forward_train(x, None).unwrap();
        let d: Vec<f64> = p.iter().zip(y).map(|(a, b)| scale * (a - b)).collect();
        net.backward(&tape, &d, &mut grads).unwrap();
    }
    grads.flat()
}

fn central_differences(net: &Network, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Vec<f64> {
    let eps = 1e-5;
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.num_params());
    for pi in 0..net.params().len() {
        for vi in 0..net.params()[pi].values.len() {
            let orig = net.params()[pi].values[vi];
            probe.params_mut()[pi].values[vi] = orig + eps;
            let up = mse(&probe, xs, ys);
            probe.params_mut()[pi].values[vi] = orig - eps;
            let down = mse(&probe, xs, ys);
            probe.params_mut()[pi].values[vi] = orig;
            out.push((up - down) / (2.0 * eps));
        }
    }
    out
}

fn gradient_correctness() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = RngStream::new(20_240_601);
    let mut families: Vec<(String, SpecMaker)> = Vec::new();
    for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid] {
        families.push((
            format!("ffnn-{act:?}"),
            Box::new(move |r: &mut RngStream| {
                NetworkSpec::ffnn(1 + r.below(5), 1 + r.below(3), 1 + r.below(3), 1 + r.below(8), act)
            }),
        ));
    }
    for cell in [CellType::Vanilla, CellType::Lstm, CellType::Gru] {
        for bi in [false, true] {
            let kind = CellKind::new(cell, bi);
            families.push((
                kind.to_string(),
                Box::new(move |r: &mut RngStream| {
                    NetworkSpec::rnn(
                        1 + r.below(4),
                        1 + r.below(3),
                        kind,
                        1 + r.below(2),
                        1 + r.below(8),
                        Activation::Tanh,
                        1 + r.below(6),
                    )
                }),
            ));
        }
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for (name, make) in &families {
        for instance in 0..20 {
            let spec = make(&mut rng);
            let mut net = init_network(&spec, &mut rng).map_err(|e| e.to_string())?;
            for p in net.params_mut() {
                if p.is_bias() {
                    p.values.iter_mut().for_each(|v| *v = 0.3 * rng.normal());
                }
            }
            let width = spec.seq_len() * spec.input_dim;
            let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..width).map(|_| rng.normal()).collect()).collect();
            let ys: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..spec.output_dim).map(|_| rng.normal()).collect())
                .collect();
            let a = backprop(&net, &xs, &ys);
            let n = central_differences(&net, &xs, &ys);
            for (k, (a, n)) in a.iter().zip(&n).enumerate() {
                // central differences carry ~1e-11 rounding noise; the floor keeps near-zero partials meaningful
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                worst = worst.max(rel);
                ensure!(
                    rel < 1e-4,
                    "{name} instance {instance} param {k}: analytic {a} numeric {n} (rel {rel:.2e})"
                );
            }
            checked += a.len();
        }
    }
    within(start.elapsed(), 60.0, "gradient checks")?;
    Ok(format!("{} families x 20, {checked} partials, worst rel {worst:.1e}", families.len()))
}

fn metric_identities() -> Result<String, String> {
    let mut rng = RngStream::new(3);
    for trial in 0..200 {
        let n = 5 + rng.below(200);
        let truth: Vec<f64> = (0..n).map(|_| rng.uniform_range(-5.0, 5.0) * 3.0 + 1.0).collect();
        let mean = truth.iter().sum::<f64>() / n as f64;
        let flat = vec![mean; n];
        let e = nrmse(&flat, &truth).map_err(|e| e.to_string())?;
        ensure!((e - 1.0).abs() <= 1e-9, "mean predictor nrmse {e} (trial {trial})");

        let a = rng.uniform_range(0.01, 50.0);
        let b = rng.uniform_range(-100.0, 100.0);
        let affine: Vec<f64> = truth.iter().map(|t| a * t + b).collect();
        let r = pearson_r(&affine, &truth).map_err(|e| e.to_string())?;
        ensure!((r - 1.0).abs() <= 1e-12, "affine r {r} (trial {trial})");

        let pred: Vec<f64> = truth.iter().map(|t| t + rng.normal()).collect();
        let e = nrmse(&pred, &truth).map_err(|e| e.to_string())?;
        let truth_m = Matrix::from_columns(std::slice::from_ref(&truth)).unwrap();
        let pred_m = Matrix::from_columns(&[pred]).unwrap();
        let scaler = standardize_fit(&truth_m).map_err(|e| e.to_string())?;
        let loss = loss_normalized_mse(&pred_m, &truth_m, &scaler).map_err(|e| e.to_string())?;
        ensure!((e * e - loss).abs() <= 1e-9, "nrmse^2 {} vs loss {loss}", e * e);
    }
    Ok("200 random series".into())
}

fn cohort_set(subjects: usize, trials: usize) -> TrialSet {
    TrialSet::new((0..subjects).flat_map(|s| {
        (0..trials).map(move |t| (format!("S{}_T{}", s + 1, t + 1), format!("S{}", s + 1)))
    }))
    .unwrap()
}

fn split_invariants() -> Result<String, String> {
    let start = Instant::now();
    let set = cohort_set(5, 3);
    for seed in 0..1000u64 {
        let se = split_subject_exposed(&set, seed).map_err(|e| e.to_string())?;
        se.validate(&set).map_err(|e| format!("SE seed {seed}: {e}"))?;
        for test_trial in &se.test {
            let subj = set.subject(test_trial).unwrap();
            for fold in &se.folds {
                let exposed = fold.train.iter().any(|t| set.subject(t).unwrap() == subj);
                ensure!(exposed, "SE seed {seed}: {subj} absent from a training fold");
            }
        }
        let sn = split_subject_naive(&set, seed).map_err(|e| e.to_string())?;
        sn.validate(&set).map_err(|e| format!("SN seed {seed}: {e}"))?;
        ensure!(sn.folds.len() == 4, "SN seed {seed}: {} folds", sn.folds.len());
        for id in sn.development() {
            let subj = set.subject(&id).unwrap();
            ensure!(
                !sn.test_subjects.iter().any(|s| s == subj),
                "SN seed {seed}: development trial {id} from a test subject"
            );
        }
    }
    within(start.elapsed(), 5.0, "1000-seed split sweep")?;
    Ok("1000 seeds SE + SN".into())
}

fn index_bundle(frames: usize) -> TrialBundle {
    let inputs = Matrix::from_columns(&[
        (0..frames).map(|k| k as f64).collect::<Vec<_>>(),
        (0..frames).map(|k| -(k as f64)).collect(),
    ])
    .unwrap();
    let outputs = Matrix::from_columns(&[(0..frames).map(|k| 1000.0 + k as f64).collect::<Vec<_>>()]).unwrap();
    TrialBundle::new(
        SubjectMeta::new("S1", 70.0, 1.75).unwrap(),
        "S1_T1",
        Category::JointAngles,
        100.0,
        vec!["a".into(), "b".into()],
        inputs,
        vec!["y".into()],
        outputs,
    )
    .unwrap()
}

fn windowing() -> Result<String, String> {
    let mut rng = RngStream::new(55);
    for _ in 0..200 {
        let t = 1 + rng.below(20);
        let frames = t + rng.below(60);
        let bundle = index_bundle(frames);
        let s = Samples::windows(&bundle, t).map_err(|e| e.to_string())?;
        ensure!(s.len() == frames - t + 1, "T={frames} t={t}: {} windows", s.len());
        for i in 0..s.len() {
            let last = i + t - 1;
            ensure!(s.target(i) == [1000.0 + last as f64], "T={frames} t={t}: target {i} misaligned");
            ensure!(s.origin(i).frame == last, "T={frames} t={t}: origin {i} misaligned");
            let input = s.input(i);
            for step in 0..t {
                let frame = (i + step) as f64;
                ensure!(
                    input[step * 2] == frame && input[step * 2 + 1] == -frame,
                    "T={frames} t={t}: window {i} step {step} holds wrong frame"
                );
            }
        }
    }
    Ok("200 random (T, t)".into())
}

fn linear_recovery() -> Result<String, String> {
    let start = Instant::now();
    let spec = SynthSpec {
        noise_sd: 0.0,
        seed: 6,
        ..SynthSpec::linear()
    };
    let (bundles, _) = gen_linear_task(&spec).map_err(|e| e.to_string())?;
    let set = TrialSet::from_bundles(&bundles).unwrap();
    let data = TrialData::prepare(&bundles, 1).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for setting in [Setting::SubjectExposed, Setting::SubjectNaive] {
        let plan = make_plan(setting, &set, 6).map_err(|e| e.to_string())?;
        let dev = data.gather(&plan.development()).map_err(|e| e.to_string())?;
        let model = fit_linear(&dev).map_err(|e| e.to_string())?;
        let test: Vec<TrialBundle> = bundles.iter().filter(|b| plan.test.contains(&b.trial_id)).cloned().collect();
        let ev = evaluate_final(&model, Some(&plan), &test, "linear", 1).map_err(|e| e.to_string())?;
        let agg = &ev.report.aggregates[0];
        ensure!(agg.r.min >= 0.999, "{setting}: worst r {}", agg.r.min);
        ensure!(agg.nrmse.max <= 0.01, "{setting}: worst nrmse {}", agg.nrmse.max);
        notes.push(format!("{setting} r_min={:.6} nrmse_max={:.1e}", agg.r.min, agg.nrmse.max));
    }
    within(start.elapsed(), 10.0, "linear recovery")?;
    Ok(notes.join(", "))
}

fn temporal_advantage() -> Result<String, String> {
    let start = Instant::now();
    let spec = SynthSpec {
        frames_per_trial: 200,
        noise_sd: 0.05,
        lag: 5,
        window: 10,
        seed: 7,
        ..SynthSpec::temporal()
    };
    let (bundles, _) = gen_temporal_task(&spec, 5).map_err(|e| e.to_string())?;
    let set = TrialSet::from_bundles(&bundles).unwrap();
    let plan = split_subject_naive(&set, 7).map_err(|e| e.to_string())?;
    let test: Vec<TrialBundle> = bundles.iter().filter(|b| plan.test.contains(&b.trial_id)).cloned().collect();
    let opts = SearchOptions {
        jobs: default_jobs(),
        seed: 7,
        checkpoint: None,
        chunk_configs: 32,
    };

    let rnn_grid = GridSpec::smoke(Arch::Rnn);
    ensure!(rnn_grid.count().unwrap() == 12, "RNN smoke grid has {} configs", rnn_grid.count().unwrap());
    let rnn_data = TrialData::prepare(&bundles, 10).map_err(|e| e.to_string())?;
    let rnn = run_search(&rnn_grid, &plan, &rnn_data, &opts).map_err(|e| e.to_string())?;
    let rnn_ev = evaluate_final(&rnn.model, Some(&plan), &test, "rnn", opts.jobs).map_err(|e| e.to_string())?;

    let lin_data = TrialData::prepare(&bundles, 1).map_err(|e| e.to_string())?;
    let lin = fit_linear(&lin_data.gather(&plan.development()).unwrap()).map_err(|e| e.to_string())?;
    let lin_ev = evaluate_final(&lin, Some(&plan), &test, "linear", 1).map_err(|e| e.to_string())?;

    let rnn_nrmse = rnn_ev.report.aggregates[0].nrmse.mean;
    let lin_nrmse = lin_ev.report.aggregates[0].nrmse.mean;
    let gain = 1.0 - rnn_nrmse / lin_nrmse;
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(
        gain >= 0.30,
        "rnn nrmse {rnn_nrmse:.4} vs linear {lin_nrmse:.4}: only {:.1}% lower",
        100.0 * gain
    );
    within(start.elapsed(), 300.0, "temporal benchmark")?;
    Ok(format!(
        "rnn {} nrmse {rnn_nrmse:.4}, linear {lin_nrmse:.4}, {:.1}% lower, {elapsed:.0} s on {} worker(s)",
        rnn.best_config.cell.map(|c| c.to_string()).unwrap_or_default(),
        100.0 * gain,
        opts.jobs
    ))
}

fn smoke_search(
    plan: &SplitPlan,
    data: &TrialData,
    jobs: usize,
    dir: &std::path::Path,
) -> Result<(SearchResult, Vec<u8>), String> {
    let ckpt = dir.join(format!("jobs{jobs}.jsonl"));
    let _ = std::fs::remove_file(&ckpt);
    let opts = SearchOptions {
        jobs,
        seed: 8,
        checkpoint: Some(ckpt.clone()),
        chunk_configs: 3,
    };
    let result = run_search(&GridSpec::smoke(Arch::Ffnn), plan, data, &opts).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&ckpt).map_err(|e| e.to_string())?;
    Ok((result, bytes))
}

fn determinism() -> Result<String, String> {
    let spec = SynthSpec {
        frames_per_trial: 40,
        noise_sd: 0.05,
        seed: 8,
        ..SynthSpec::linear()
    };
    let (bundles, _) = gen_linear_task(&spec).map_err(|e| e.to_string())?;
    let set = TrialSet::from_bundles(&bundles).unwrap();
    let plan = split_subject_exposed(&set, 8).map_err(|e| e.to_string())?;
    let data = TrialData::prepare(&bundles, 1).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let (one, ckpt_one) = smoke_search(&plan, &data, 1, dir.path())?;
    let (eight, ckpt_eight) = smoke_search(&plan, &data, 8, dir.path())?;
    ensure!(ckpt_one == ckpt_eight, "checkpoints differ between jobs=1 and jobs=8");
    ensure!(one.best_index == eight.best_index, "selected config differs");
    ensure!(one.best_config == eight.best_config, "selected config differs");
    ensure!(one.model == eight.model, "final models differ");

    let (again, ckpt_again) = smoke_search(&plan, &data, 1, dir.path())?;
    ensure!(ckpt_again == ckpt_one, "rerun checkpoint differs");
    let a = serde_json::to_vec(&one).unwrap();
    let b = serde_json::to_vec(&again).unwrap();
    ensure!(a == b, "rerun search result differs");
    ensure!(
        one.model.to_json().unwrap() == again.model.to_json().unwrap(),
        "rerun model differs"
    );
    Ok(format!("{} configs, best #{}, {} checkpoint bytes", one.records.len(), one.best_index, ckpt_one.len()))
}

fn parameter_counting() -> Result<String, String> {
    let linear = count_params(&NetworkSpec::linear(483, 10)).map_err(|e| e.to_string())?;
    ensure!(linear == 4840, "linear(483->10) counts {linear}");
    let mut rng = RngStream::new(9);
    for _ in 0..100 {
        let i = 1 + rng.below(30);
        let o = 1 + rng.below(10);
        let nodes = 1 + rng.below(16);
        let layers = 1 + rng.below(3);
        let spec = match rng.below(3) {
            0 => NetworkSpec::linear(i, o),
            1 => NetworkSpec::ffnn(i, o, layers, nodes, Activation::Relu),
            _ => NetworkSpec::rnn(i, o, CellKind::ALL[rng.below(6)], layers, nodes, Activation::Tanh, 1 + rng.below(10)),
        };
        let net = init_network(&spec, &mut rng).map_err(|e| e.to_string())?;
        let enumerated: usize = net.params().iter().map(|p| p.values.len()).sum();
        let counted = count_params(&spec).map_err(|e| e.to_string())?;
        ensure!(counted == enumerated, "{spec:?}: counted {counted}, enumerated {enumerated}");
    }
    Ok("linear(483->10)=4840, 100 random specs".into())
}

fn resampling() -> Result<String, String> {
    let frames = 101;
    let src: Vec<f64> = (0..frames).map(|k| (k as f64 / 100.0).powi(3)).collect();
    let series = Matrix::from_columns(&[src]).unwrap();
    let out = cubic_resample(&series, 100.0, 60.0).map_err(|e| e.to_string())?;
    let n = resampled_len(frames, 100.0, 60.0);
    ensure!(out.rows() == n, "{} output frames, expected {n}", out.rows());
    let mut worst: f64 = 0.0;
    for j in 1..n - 1 {
        let t = j as f64 / 60.0;
        let err = (out.row(j)[0] - t.powi(3)).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "frame {j}: error {err:.2e}");
    }
    Ok(format!("{} interior frames, worst error {worst:.1e}", n - 2))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("grid cardinality", grid_cardinality),
        ("gradient correctness", gradient_correctness),
        ("metric identities", metric_identities),
        ("split invariants", split_invariants),
        ("windowing", windowing),
        ("linear recovery", linear_recovery),
        ("temporal advantage", temporal_advantage),
        ("determinism and parallel invariance", determinism),
        ("parameter counting", parameter_counting),
        ("resampling", resampling),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.2} s) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.2} s) {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
