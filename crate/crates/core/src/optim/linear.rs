use super::model::{ModelSeeds, TrainedModel};
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkSpec, Param};
use crate::numerics::{fit_rows, solve_spd, Matrix};

/// Diagonal jitter on non-intercept terms of the normal equations.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Closed-form least squares with intercept, solved in standardized space.
pub fn fit_linear(train_set: &Samples) -> Result<TrainedModel> {
    if train_set.seq_len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "linear models take single frames, got sequences of {}",
            train_set.seq_len()
        )));
    }
    let (n, f, o) = (train_set.len(), train_set.n_in(), train_set.n_out());
    if n < f + 1 {
        return Err(Error::Underdetermined {
            rows: n,
            unknowns: f + 1,
        });
    }
    let xs = fit_rows(f, train_set.input_rows())?;
    let ys = fit_rows(o, train_set.target_rows())?;

    // Augmented features [z, 1]; accumulate XtX and XtY directly.
    let k = f + 1;
    let mut xtx = Matrix::zeros(k, k);
    let mut xty = Matrix::zeros(k, o);
    let mut z = vec![0.0; k];
    let mut t = vec![0.0; o];
    for (x, y) in train_set.input_rows().zip(train_set.target_rows()) {
        xs.apply_row(x, &mut z[..f]);
        z[f] = 1.0;
        ys.apply_row(y, &mut t);
        for a in 0..k {
            for b in a..k {
                xtx[(a, b)] += z[a] * z[b];
            }
            for (c, &tc) in t.iter().enumerate() {
                xty[(a, c)] += z[a] * tc;
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    for a in 0..f {
        xtx[(a, a)] += RIDGE_LAMBDA;
    }
    let beta = solve_spd(&xtx, &xty)?;

    let mut weight = vec![0.0; o * f];
    let mut bias = vec![0.0; o];
    for c in 0..o {
        for a in 0..f {
            weight[c * f + a] = beta[(a, c)];
        }
        bias[c] = beta[(f, c)];
    }
    let params = vec![
        Param {
            name: "output.weight".into(),
            rows: o,
            cols: f,
            values: weight,
        },
        Param {
            name: "output.bias".into(),
            rows: o,
            cols: 1,
            values: bias,
        },
    ];
    let net = Network::from_parts(NetworkSpec::linear(f, o), params)?;
    Ok(TrainedModel::assemble(net, xs, ys, ModelSeeds::default(), train_set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SampleOrigin;
    use crate::numerics::RngStream;
    use std::sync::Arc;

    fn samples(inputs: Vec<f64>, n_in: usize, targets: Vec<f64>, n_out: usize) -> Samples {
        let n = targets.len() / n_out;
        let id: Arc<str> = Arc::from("trial");
        let origins = (0..n)
            .map(|frame| SampleOrigin {
                trial_id: id.clone(),
                frame,
            })
            .collect();
        Samples::from_parts(1, n_in, n_out, inputs, targets, origins).unwrap()
    }

    #[test]
    fn recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        let y = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let m = fit_linear(&samples(x, 1, y, 1)).unwrap();
        let at0 = m.predict_one(&[0.0]).unwrap()[0];
        let at1 = m.predict_one(&[1.0]).unwrap()[0];
        assert!((at0 - 1.0).abs() < 1e-8, "intercept {at0}");
        assert!((at1 - at0 - 3.0).abs() < 1e-8, "slope {}", at1 - at0);
    }

    #[test]
    fn independent_target_gives_mean() {
        let mut rng = RngStream::new(4);
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..n).map(|_| 5.0 + rng.normal()).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let m = fit_linear(&samples(x, 1, y, 1)).unwrap();
        let slope = m.predict_one(&[1.0]).unwrap()[0] - m.predict_one(&[0.0]).unwrap()[0];
        assert!(slope.abs() < 0.1);
        assert!((m.predict_one(&[0.0]).unwrap()[0] - mean).abs() < 0.1);
    }

    #[test]
    fn duplicate_columns_still_solve() {
        let x: Vec<f64> = (0..10).flat_map(|i| [i as f64, i as f64]).collect();
        let y = (0..10).map(|i| 2.0 * i as f64).collect();
        let m = fit_linear(&samples(x, 2, y, 1)).unwrap();
        assert!(m.network.params().iter().all(|p| p.values.iter().all(|v| v.is_finite())));
        assert!((m.predict_one(&[4.0, 4.0]).unwrap()[0] - 8.0).abs() < 1e-4);
    }

    #[test]
    fn underdetermined() {
        let s = samples(vec![1.0, 2.0, 3.0, 4.0], 2, vec![1.0, 2.0], 1);
        assert!(matches!(
            fit_linear(&s),
            Err(Error::Underdetermined { rows: 2, unknowns: 3 })
        ));
    }

    #[test]
    fn multi_output_matches_per_output_fits() {
        let mut rng = RngStream::new(9);
        let n = 50;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..n)
            .flat_map(|i| {
                let r = &x[i * 3..i * 3 + 3];
                [r[0] - 2.0 * r[2] + 0.3, 4.0 * r[1]]
            })
            .collect();
        let m = fit_linear(&samples(x, 3, y, 2)).unwrap();
        let p = m.predict_one(&[1.0, 1.0, 1.0]).unwrap();
        assert!((p[0] + 0.7).abs() < 1e-6);
        assert!((p[1] - 4.0).abs() < 1e-6);
    }
}
