//! Dense linear algebra, seeded randomness, spline resampling and descriptive
//! statistics shared by the rest of the crate.

mod matrix;
mod rng;
mod spline;
mod stats;

pub use matrix::{matmul, solve_spd, Matrix};
pub use rng::{derive_seed, RngStream, RNG_ALGORITHM};
pub use spline::{cubic_resample, resampled_len};
pub use stats::{
    fit_rows, mean, population_sd, standardize_apply, standardize_fit, summary, Scaler,
    SummaryStats, DEGENERATE_SD,
};
