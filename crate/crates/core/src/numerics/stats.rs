use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Columns whose standard deviation falls below this are only centered.
pub const DEGENERATE_SD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
    pub min: f64,
    pub iqr: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divides by n).
pub fn population_sd(values: &[f64]) -> f64 {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Linear-interpolation quantile of sorted data at position `(n-1) p`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = mean(values);
    Ok(SummaryStats {
        // clamp guards against rounding pushing the mean of equal values outside [min, max]
        mean: m.clamp(sorted[0], sorted[sorted.len() - 1]),
        sd: population_sd(values),
        max: sorted[sorted.len() - 1],
        min: sorted[0],
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
    })
}

/// Per-column standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl Scaler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Divisor used for column `j` (1 for degenerate columns).
    #[inline]
    pub fn scale(&self, j: usize) -> f64 {
        if self.degenerate[j] {
            1.0
        } else {
            self.sd[j]
        }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
            *o = (v - self.mean[j]) / self.scale(j);
        }
    }

    pub fn invert_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (o, &v)) in out.iter_mut().zip(row).enumerate() {
            *o = v * self.scale(j) + self.mean[j];
        }
    }

    pub fn apply(&self, cols: &Matrix) -> Result<Matrix> {
        standardize_apply(self, cols)
    }

    pub fn invert(&self, cols: &Matrix) -> Result<Matrix> {
        self.check(cols)?;
        let mut out = cols.clone();
        for i in 0..cols.rows() {
            self.invert_row(cols.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    fn check(&self, cols: &Matrix) -> Result<()> {
        if cols.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "scaler has {} columns, matrix has {}",
                self.dim(),
                cols.cols()
            )));
        }
        Ok(())
    }
}

/// Fits per-column mean and population SD, streaming over rows.
pub fn fit_rows<'a, I>(dim: usize, rows: I) -> Result<Scaler>
where
    I: IntoIterator<Item = &'a [f64]> + Clone,
{
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    for r in rows.clone() {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
        n += 1;
    }
    if n < 2 {
        return Err(Error::TooFewRows { need: 2, got: n });
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut ss = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in ss.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
    let degenerate = sd.iter().map(|&s| s < DEGENERATE_SD).collect();
    Ok(Scaler { mean, sd, degenerate })
}

pub fn standardize_fit(cols: &Matrix) -> Result<Scaler> {
    fit_rows(cols.cols(), cols.row_iter())
}

pub fn standardize_apply(scaler: &Scaler, cols: &Matrix) -> Result<Matrix> {
    scaler.check(cols)?;
    let mut out = cols.clone();
    for i in 0..cols.rows() {
        scaler.apply_row(cols.row(i), out.row_mut(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn summary_of_four() {
        let s = summary(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.sd - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((s.sd - 1.1180).abs() < 1e-4);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!((s.iqr - 1.5).abs() < 1e-15);
    }

    #[test]
    fn summary_singleton_and_constant() {
        let s = summary(&[5.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.iqr), (5.0, 0.0, 0.0));
        let c = summary(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!((c.sd, c.iqr), (0.0, 0.0));
        assert!(c.min <= c.mean && c.mean <= c.max);
        assert!(matches!(summary(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn standardize_column() {
        let m = Matrix::from_columns(&[[1.0, 2.0, 3.0]]).unwrap();
        let sc = standardize_fit(&m).unwrap();
        let z = sc.apply(&m).unwrap();
        let k = 1.0 / (2.0f64 / 3.0).sqrt();
        for (g, w) in z.as_slice().iter().zip([-k, 0.0, k]) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((z[(0, 0)] + 1.2247).abs() < 1e-4);
        assert_eq!(sc.invert(&z).unwrap().as_slice()[2], 3.0);
    }

    #[test]
    fn constant_column_is_flagged() {
        let m = Matrix::from_columns(&[[4.0, 4.0, 4.0], [1.0, 2.0, 3.0]]).unwrap();
        let sc = standardize_fit(&m).unwrap();
        assert_eq!(sc.degenerate, vec![true, false]);
        let z = sc.apply(&m).unwrap();
        assert_eq!(z.column(0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn too_few_rows() {
        let m = Matrix::zeros(1, 3);
        assert!(matches!(standardize_fit(&m), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn standardized_means_vanish() {
        let mut rng = RngStream::new(3);
        let m = Matrix::new(50, 4, (0..200).map(|_| 10.0 + 3.0 * rng.normal()).collect()).unwrap();
        let z = standardize_fit(&m).unwrap().apply(&m).unwrap();
        for j in 0..4 {
            assert!(mean(&z.column(j)).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn sd_squared_is_mean_square_deviation(v in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let s = summary(&v).unwrap();
            let m = mean(&v);
            let msd = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
            proptest::prop_assert!((s.sd * s.sd - msd).abs() <= 1e-12 * msd.max(1.0));
            proptest::prop_assert!(s.min <= s.mean && s.mean <= s.max);
            proptest::prop_assert!(s.iqr >= 0.0);
        }
    }
}
