//! Small dense kernels on row-major slices.

use crate::nn::Activation;

/// `out[r] += sum_c w[r, c] x[c]` for rows `rows` of a `? x cols` matrix.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], cols: usize, rows: std::ops::Range<usize>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows.len());
    for (o, r) in out.iter_mut().zip(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out[c] += sum_r w[r, c] d[r]` over rows `rows`.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], cols: usize, rows: std::ops::Range<usize>, d: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    for (&dr, r) in d.iter().zip(rows) {
        if dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * dr;
        }
    }
}

/// `g[r, c] += d[r] x[c]` over rows `rows`.
#[inline]
pub(crate) fn outer_acc(g: &mut [f64], cols: usize, rows: std::ops::Range<usize>, d: &[f64], x: &[f64]) {
    for (&dr, r) in d.iter().zip(rows) {
        if dr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, xv) in row.iter_mut().zip(x) {
            *gv += dr * xv;
        }
    }
}

#[inline]
pub(crate) fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::None => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::None => 1.0,
        }
    }
}
