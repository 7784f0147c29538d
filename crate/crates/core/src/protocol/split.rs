use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::TrialBundle;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    SubjectExposed,
    SubjectNaive,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::SubjectExposed => "subject_exposed",
            Setting::SubjectNaive => "subject_naive",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" | "subject_exposed" => Ok(Setting::SubjectExposed),
            "sn" | "subject_naive" => Ok(Setting::SubjectNaive),
            _ => Err(Error::InvalidConfig(format!("unknown setting {s}"))),
        }
    }
}

/// Trial ids with their owning subjects. Trial ids are unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSet {
    subject_of: BTreeMap<String, String>,
}

impl TrialSet {
    pub fn new<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut subject_of = BTreeMap::new();
        for (t, s) in pairs {
            let t = t.into();
            if subject_of.insert(t.clone(), s.into()).is_some() {
                return Err(Error::DuplicateTrial(t));
            }
        }
        Ok(Self { subject_of })
    }

    pub fn from_bundles(bundles: &[TrialBundle]) -> Result<Self> {
        Self::new(bundles.iter().map(|b| (b.trial_id.clone(), b.subject_id().to_string())))
    }

    pub fn len(&self) -> usize {
        self.subject_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject_of.is_empty()
    }

    /// Trial ids in sorted order.
    pub fn trials(&self) -> impl Iterator<Item = &str> {
        self.subject_of.keys().map(String::as_str)
    }

    pub fn subject(&self, trial: &str) -> Result<&str> {
        self.subject_of
            .get(trial)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTrial(trial.to_string()))
    }

    /// Sorted subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let s: BTreeSet<&String> = self.subject_of.values().collect();
        s.into_iter().cloned().collect()
    }

    pub fn trials_of(&self, subject: &str) -> Vec<String> {
        self.subject_of
            .iter()
            .filter(|(_, s)| s.as_str() == subject)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub setting: Setting,
    pub test: Vec<String>,
    /// Held-out subjects (subject-naive only).
    #[serde(default)]
    pub test_subjects: Vec<String>,
    pub folds: Vec<Fold>,
    pub seed: u64,
}

impl SplitPlan {
    /// Every non-test trial: the data the selected config is retrained on.
    pub fn development(&self) -> Vec<String> {
        let mut all: BTreeSet<&String> = BTreeSet::new();
        for f in &self.folds {
            all.extend(f.train.iter().chain(&f.val));
        }
        all.into_iter().cloned().collect()
    }

    /// Checks disjointness and the setting's subject invariant.
    pub fn validate(&self, set: &TrialSet) -> Result<()> {
        let test: BTreeSet<&str> = self.test.iter().map(String::as_str).collect();
        let mut leaks = Vec::new();
        for f in &self.folds {
            let train: BTreeSet<&str> = f.train.iter().map(String::as_str).collect();
            for v in &f.val {
                if train.contains(v.as_str()) {
                    leaks.push(v.clone());
                }
            }
            for t in f.train.iter().chain(&f.val) {
                set.subject(t)?;
                if test.contains(t.as_str()) {
                    leaks.push(t.clone());
                }
            }
            match self.setting {
                Setting::SubjectExposed => {
                    for t in &self.test {
                        let s = set.subject(t)?;
                        if !f.train.iter().any(|x| set.subject(x).ok() == Some(s)) {
                            return Err(Error::TooFewTrials(format!(
                                "test subject {s} has no training trial in a fold"
                            )));
                        }
                    }
                }
                Setting::SubjectNaive => {
                    let test_subjects: BTreeSet<&str> =
                        self.test.iter().filter_map(|t| set.subject(t).ok()).collect();
                    for t in f.train.iter().chain(&f.val) {
                        if test_subjects.contains(set.subject(t)?) {
                            leaks.push(t.clone());
                        }
                    }
                }
            }
        }
        if leaks.is_empty() {
            Ok(())
        } else {
            leaks.sort();
            leaks.dedup();
            Err(Error::LeakageDetected(leaks))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
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
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Shape of a subject-exposed plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposedOptions {
    pub test_trials: usize,
    pub folds: usize,
    pub val_trials: usize,
}

impl Default for ExposedOptions {
    fn default() -> Self {
        Self {
            test_trials: 2,
            folds: 4,
            val_trials: 2,
        }
    }
}

const MAX_REDRAWS: usize = 10_000;

pub fn split_subject_exposed(set: &TrialSet, seed: u64) -> Result<SplitPlan> {
    split_subject_exposed_with(set, seed, ExposedOptions::default())
}

/// Random test trials whose subjects keep at least one trial in every fold's
/// training set; validation sets are disjoint across folds.
pub fn split_subject_exposed_with(set: &TrialSet, seed: u64, opts: ExposedOptions) -> Result<SplitPlan> {
    for s in set.subjects() {
        let n = set.trials_of(&s).len();
        if n < 2 {
            return Err(Error::TooFewTrials(format!("subject {s} has {n} trial(s), need 2")));
        }
    }
    let all: Vec<String> = set.trials().map(str::to_string).collect();
    let mut rng = RngStream::new(seed);
    let mut test = None;
    for _ in 0..MAX_REDRAWS {
        let mut pool = all.clone();
        rng.shuffle(&mut pool);
        pool.truncate(opts.test_trials);
        let ok = pool.iter().all(|t| {
            let s = set.subject(t).expect("known trial");
            set.trials_of(s).iter().any(|x| !pool.contains(x))
        });
        if ok {
            test = Some(pool);
            break;
        }
    }
    let mut test = test.ok_or_else(|| Error::TooFewTrials("no valid test draw".into()))?;
    test.sort();

    let rest: Vec<String> = all.into_iter().filter(|t| !test.contains(t)).collect();
    // one remaining trial per test subject is kept out of every validation set
    let mut reserved: Vec<String> = Vec::new();
    let mut test_subjects: Vec<&str> = test.iter().map(|t| set.subject(t).expect("known")).collect();
    test_subjects.sort();
    test_subjects.dedup();
    for s in test_subjects {
        let own: Vec<&String> = rest.iter().filter(|t| set.subject(t).ok() == Some(s)).collect();
        reserved.push(own[rng.below(own.len())].clone());
    }
    let mut pool: Vec<String> = rest.iter().filter(|t| !reserved.contains(t)).cloned().collect();
    let need = opts.folds * opts.val_trials;
    if pool.len() < need || rest.len() <= opts.val_trials {
        return Err(Error::TooFewTrials(format!(
            "{} trials available for validation, {need} needed",
            pool.len()
        )));
    }
    rng.shuffle(&mut pool);
    let folds = pool
        .chunks(opts.val_trials)
        .take(opts.folds)
        .map(|chunk| {
            let mut val = chunk.to_vec();
            val.sort();
            let train = rest.iter().filter(|t| !val.contains(t)).cloned().collect();
            Fold { train, val }
        })
        .collect();
    Ok(SplitPlan {
        setting: Setting::SubjectExposed,
        test,
        test_subjects: Vec::new(),
        folds,
        seed,
    })
}

/// Random held-out subject; one fold per remaining subject as validation.
pub fn split_subject_naive(set: &TrialSet, seed: u64) -> Result<SplitPlan> {
    let subjects = set.subjects();
    check_subjects(&subjects)?;
    let mut rng = RngStream::new(seed);
    let test_subject = subjects[rng.below(subjects.len())].clone();
    build_naive(set, &subjects, test_subject, seed)
}

pub fn split_subject_naive_with_test(set: &TrialSet, test_subject: &str, seed: u64) -> Result<SplitPlan> {
    let subjects = set.subjects();
    check_subjects(&subjects)?;
    if !subjects.iter().any(|s| s == test_subject) {
        return Err(Error::InvalidConfig(format!("unknown subject {test_subject}")));
    }
    build_naive(set, &subjects, test_subject.to_string(), seed)
}

fn check_subjects(subjects: &[String]) -> Result<()> {
    if subjects.len() < 3 {
        return Err(Error::TooFewSubjects {
            got: subjects.len(),
            need: 3,
        });
    }
    Ok(())
}

fn build_naive(set: &TrialSet, subjects: &[String], test_subject: String, seed: u64) -> Result<SplitPlan> {
    let rest: Vec<&String> = subjects.iter().filter(|s| **s != test_subject).collect();
    let folds = rest
        .iter()
        .map(|v| Fold {
            train: rest
                .iter()
                .filter(|s| *s != v)
                .flat_map(|s| set.trials_of(s))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            val: set.trials_of(v),
        })
        .collect();
    Ok(SplitPlan {
        setting: Setting::SubjectNaive,
        test: set.trials_of(&test_subject),
        test_subjects: vec![test_subject],
        folds,
        seed,
    })
}
