use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, SubjectMeta, TrialBundle};
use crate::error::{Error, Result};
use crate::numerics::{cubic_resample, Matrix};

pub const INPUTS_FILE: &str = "inputs.csv";
pub const OUTPUTS_FILE: &str = "outputs.csv";
pub const META_FILE: &str = "meta.json";
const TIME_COLUMN: &str = "time_s";

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialMeta {
    pub subject_id: String,
    pub trial_id: String,
    pub body_mass_kg: f64,
    pub height_m: f64,
    pub input_hz: f64,
    pub output_hz: f64,
    pub category: Category,
}

/// A CSV table: `time_s` followed by named channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub values: Matrix,
}

fn schema(path: &Path, msg: impl Into<String>) -> Error {
    Error::SchemaError {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path))
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.get(0) != Some(TIME_COLUMN) {
        return Err(schema(path, format!("first column must be {TIME_COLUMN}")));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.iter().any(String::is_empty) {
        return Err(schema(path, "empty channel name"));
    }
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() + 1 {
            return Err(schema(path, format!("row {} has {} fields", line + 1, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| schema(path, format!("row {}: bad number {field:?}", line + 1)))?;
            if !v.is_finite() {
                return Err(schema(path, format!("row {}: non-finite value", line + 1)));
            }
            if j == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    let values = Matrix::new(times.len(), names.len(), data)?;
    Ok(Table {
        names,
        times,
        values,
    })
}

fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (t, row) in table.times.iter().zip(table.values.row_iter()) {
        rec.clear();
        // `Display` for f64 prints the shortest string that parses back exactly
        rec.push(t.to_string());
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a bundle directory from raw tables; outputs may be at a different rate.
pub fn write_bundle_dir(dir: &Path, meta: &TrialMeta, inputs: &Table, outputs: &Table) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_table(&dir.join(INPUTS_FILE), inputs)?;
    write_table(&dir.join(OUTPUTS_FILE), outputs)?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Loads a bundle directory, resampling outputs to the input rate if needed.
pub fn load_trial(dir: impl AsRef<Path>) -> Result<TrialBundle> {
    let dir = dir.as_ref();
    let meta_path = require(dir.join(META_FILE))?;
    let in_path = require(dir.join(INPUTS_FILE))?;
    let out_path = require(dir.join(OUTPUTS_FILE))?;
    let meta: TrialMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| schema(&meta_path, e.to_string()))?;
    let subject = SubjectMeta::new(meta.subject_id.clone(), meta.body_mass_kg, meta.height_m)
        .map_err(|e| schema(&meta_path, e.to_string()))?;
    if !(meta.input_hz > 0.0 && meta.output_hz > 0.0) {
        return Err(schema(&meta_path, "sampling rates must be positive"));
    }
    let inputs = read_table(&in_path)?;
    let mut outputs = read_table(&out_path)?;
    if meta.output_hz != meta.input_hz {
        outputs.values = cubic_resample(&outputs.values, meta.output_hz, meta.input_hz)?;
    }
    let (ni, no) = (inputs.values.rows(), outputs.values.rows());
    if ni.abs_diff(no) > 1 {
        return Err(Error::RowCountMismatch {
            inputs: ni,
            outputs: no,
        });
    }
    let n = ni.min(no);
    let bundle = TrialBundle {
        subject,
        trial_id: meta.trial_id,
        category: meta.category,
        input_hz: meta.input_hz,
        output_hz: meta.input_hz,
        times: inputs.times[..n].to_vec(),
        input_names: inputs.names,
        output_names: outputs.names,
        inputs: inputs.values.slice_rows(0, n),
        outputs: outputs.values.slice_rows(0, n),
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Loads every bundle directory directly under `root`, sorted by directory name.
pub fn load_trials(root: impl AsRef<Path>) -> Result<Vec<TrialBundle>> {
    let root = root.as_ref();
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(load_trial).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{resampled_len, RngStream};

    fn bundle(rng: &mut RngStream, frames: usize) -> TrialBundle {
        TrialBundle::new(
            SubjectMeta::new("s1", 66.25, 1.74).unwrap(),
            "s1_t1",
            Category::JointMoments,
            60.0,
            vec!["ax".into(), "ay".into()],
            Matrix::new(frames, 2, (0..frames * 2).map(|_| rng.normal() * 1e3).collect()).unwrap(),
            vec!["m1".into()],
            Matrix::new(frames, 1, (0..frames).map(|_| rng.normal() / 7.0).collect()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn same_rate_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(&mut RngStream::new(1), 40);
        b.save(dir.path()).unwrap();
        let back = load_trial(dir.path()).unwrap();
        assert_eq!(back, b);
        back.save(dir.path()).unwrap();
        assert_eq!(load_trial(dir.path()).unwrap(), b);
    }

    #[test]
    fn outputs_resampled_to_input_rate() {
        let dir = tempfile::tempdir().unwrap();
        let (n_in, n_out) = (60, 100);
        let ramp = |hz: f64, n: usize| -> Vec<f64> { (0..n).map(|k| k as f64 / hz).collect() };
        let inputs = Table {
            names: vec!["x".into()],
            times: ramp(60.0, n_in),
            values: Matrix::from_columns(&[ramp(60.0, n_in)]).unwrap(),
        };
        let out_vals: Vec<f64> = ramp(100.0, n_out).iter().map(|t| 2.0 * t + 1.0).collect();
        let outputs = Table {
            names: vec!["y".into()],
            times: ramp(100.0, n_out),
            values: Matrix::from_columns(&[out_vals]).unwrap(),
        };
        let meta = TrialMeta {
            subject_id: "s1".into(),
            trial_id: "t1".into(),
            body_mass_kg: 70.0,
            height_m: 1.8,
            input_hz: 60.0,
            output_hz: 100.0,
            category: Category::JointAngles,
        };
        write_bundle_dir(dir.path(), &meta, &inputs, &outputs).unwrap();
        let b = load_trial(dir.path()).unwrap();
        let resampled = resampled_len(n_out, 100.0, 60.0);
        assert_eq!(resampled, 60);
        assert_eq!(b.frames(), n_in.min(resampled));
        assert_eq!(b.output_hz, 60.0);
        for k in 0..b.frames() {
            assert!((b.outputs[(k, 0)] - (2.0 * k as f64 / 60.0 + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_meta() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(&mut RngStream::new(2), 10);
        b.save(dir.path()).unwrap();
        fs::remove_file(dir.path().join(META_FILE)).unwrap();
        assert!(matches!(load_trial(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn row_mismatch_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(&mut RngStream::new(3), 10);
        b.save(dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(OUTPUTS_FILE)).unwrap();
        let truncated: Vec<&str> = csv.lines().take(8).collect();
        fs::write(dir.path().join(OUTPUTS_FILE), truncated.join("\n")).unwrap();
        assert!(matches!(
            load_trial(dir.path()),
            Err(Error::RowCountMismatch { inputs: 10, outputs: 7 })
        ));

        fs::write(dir.path().join(OUTPUTS_FILE), "t,m1\n0,1\n").unwrap();
        assert!(matches!(load_trial(dir.path()), Err(Error::SchemaError { .. })));
        fs::write(dir.path().join(OUTPUTS_FILE), csv.replacen("\n0,", "\n0,abc", 1)).unwrap();
        assert!(matches!(load_trial(dir.path()), Err(Error::SchemaError { .. })));
    }
}
