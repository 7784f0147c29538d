use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Not-a-knot cubic spline through uniformly spaced samples (unit spacing).
struct UniformSpline<'a> {
    y: &'a [f64],
    second: Vec<f64>,
}

impl<'a> UniformSpline<'a> {
    fn fit(y: &'a [f64]) -> Self {
        let n = y.len();
        debug_assert!(n >= 4);
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1])
                }
            })
            .collect();
        let mut m = vec![0.0; n];
        // Not-a-knot at x1 and x_{n-2} forces M0 = 2M1 - M2 (and mirror), which
        // collapses the first and last interior rows to 6 M1 = r1.
        m[1] = rhs[1] / 6.0;
        m[n - 2] = rhs[n - 2] / 6.0;
        if n > 4 {
            // Tridiagonal rows i = 2..=n-3 with diagonal 4, off-diagonals 1.
            let k = n - 4;
            let mut diag = vec![4.0; k];
            let mut d: Vec<f64> = (2..=n - 3).map(|i| rhs[i]).collect();
            d[0] -= m[1];
            d[k - 1] -= m[n - 2];
            for j in 1..k {
                let w = 1.0 / diag[j - 1];
                diag[j] -= w;
                d[j] -= w * d[j - 1];
            }
            m[2 + k - 1] = d[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[2 + j] = (d[j] - m[3 + j]) / diag[j];
            }
        }
        m[0] = 2.0 * m[1] - m[2];
        m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
        Self { y, second: m }
    }

    /// Evaluates at fractional sample index `p` in `[0, n-1]`.
    fn eval(&self, p: f64) -> f64 {
        let n = self.y.len();
        let i = (p.floor() as usize).min(n - 2);
        let s = p - i as f64;
        let r = 1.0 - s;
        let (mi, mj) = (self.second[i], self.second[i + 1]);
        mi * r * r * r / 6.0
            + mj * s * s * s / 6.0
            + (self.y[i] - mi / 6.0) * r
            + (self.y[i + 1] - mj / 6.0) * s
    }
}

/// Number of output frames when resampling `frames` samples from `src_hz` to `dst_hz`.
pub fn resampled_len(frames: usize, src_hz: f64, dst_hz: f64) -> usize {
    let x = (frames.saturating_sub(1)) as f64 * dst_hz / src_hz;
    // tolerate representation error in ratios like 60/100
    (x + 1e-9 * x.max(1.0)).floor() as usize + 1
}

/// Resamples each column of a `T x F` series from `src_hz` to `dst_hz`.
///
/// Both grids start at t = 0. Each column gets its own not-a-knot cubic
/// spline, so cubic polynomials are reproduced to rounding error.
pub fn cubic_resample(series: &Matrix, src_hz: f64, dst_hz: f64) -> Result<Matrix> {
    if !(src_hz > 0.0 && dst_hz > 0.0) {
        return Err(Error::NonPositiveRate {
            src: src_hz,
            dst: dst_hz,
        });
    }
    let t = series.rows();
    if t < 4 {
        return Err(Error::TooFewSamples { got: t });
    }
    if src_hz == dst_hz {
        return Ok(series.clone());
    }
    let n_out = resampled_len(t, src_hz, dst_hz);
    let last = (t - 1) as f64;
    let positions: Vec<f64> = (0..n_out)
        .map(|k| (k as f64 * src_hz / dst_hz).min(last))
        .collect();
    let mut out = Matrix::zeros(n_out, series.cols());
    for j in 0..series.cols() {
        let col = series.column(j);
        let spline = UniformSpline::fit(&col);
        for (k, &p) in positions.iter().enumerate() {
            out[(k, j)] = spline.eval(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, n: usize, hz: f64) -> Matrix {
        Matrix::from_columns(&[(0..n).map(|i| f(i as f64 / hz)).collect::<Vec<_>>()]).unwrap()
    }

    #[test]
    fn ramp_is_exact() {
        let s = sampled(|t| 3.0 * t - 1.0, 101, 100.0);
        let out = cubic_resample(&s, 100.0, 60.0).unwrap();
        assert_eq!(out.rows(), 61);
        for k in 0..out.rows() {
            let t = k as f64 / 60.0;
            assert!((out[(k, 0)] - (3.0 * t - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn cubic_is_reproduced_at_every_length() {
        for n in 4..12 {
            let s = sampled(|t| t * t * t - 2.0 * t * t + 0.5, n, 10.0);
            let out = cubic_resample(&s, 10.0, 7.0).unwrap();
            assert_eq!(out.rows(), resampled_len(n, 10.0, 7.0));
            for k in 0..out.rows() {
                let t = k as f64 / 7.0;
                let want = t * t * t - 2.0 * t * t + 0.5;
                assert!((out[(k, 0)] - want).abs() < 1e-10, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn same_rate_is_identity() {
        let s = sampled(|t| (5.0 * t).sin(), 20, 60.0);
        assert_eq!(cubic_resample(&s, 60.0, 60.0).unwrap(), s);
    }

    #[test]
    fn knots_are_interpolated() {
        let s = sampled(|t| (3.0 * t).cos(), 30, 30.0);
        let up = cubic_resample(&s, 30.0, 60.0).unwrap();
        for i in 0..30 {
            assert!((up[(2 * i, 0)] - s[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditions() {
        let s = Matrix::zeros(3, 1);
        assert!(matches!(
            cubic_resample(&s, 100.0, 60.0),
            Err(Error::TooFewSamples { got: 3 })
        ));
        let s = Matrix::zeros(5, 1);
        assert!(matches!(
            cubic_resample(&s, 0.0, 60.0),
            Err(Error::NonPositiveRate { .. })
        ));
        assert!(cubic_resample(&s, 100.0, -1.0).is_err());
    }

    #[test]
    fn length_formula() {
        assert_eq!(resampled_len(101, 100.0, 60.0), 61);
        assert_eq!(resampled_len(100, 100.0, 60.0), 60);
        assert_eq!(resampled_len(500, 100.0, 60.0), 300);
    }
}
