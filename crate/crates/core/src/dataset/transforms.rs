use crate::dataset::{Category, SubjectMeta};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Gravitational acceleration used to convert body mass to body weight.
pub const GRAVITY: f64 = 9.81;

/// Reserved input channel name for the normalized elapsed-time feature.
pub const TIME_FEATURE: &str = "time_fraction";

/// Converts SI kinetic outputs to body-weight-relative percentages.
///
/// Forces become %BW, moments %BW x BH; activations are already relative and
/// pass through. Joint angles are kinematic and rejected.
pub fn normalize_kinetics(
    raw: &Matrix,
    category: Category,
    subject: &SubjectMeta,
    g: f64,
) -> Result<Matrix> {
    let weight = subject.body_mass_kg * g;
    let divisor = match category {
        Category::JointAngles => return Err(Error::UnsupportedCategory(category.to_string())),
        Category::JointReactionForces | Category::MuscleForces => weight,
        Category::JointMoments => weight * subject.height_m,
        Category::MuscleActivations => return Ok(raw.clone()),
    };
    let mut out = raw.clone();
    for v in out.as_mut_slice() {
        *v = 100.0 * *v / divisor;
    }
    Ok(out)
}

/// Prepends a column holding `k / (T - 1)` at frame `k`.
pub fn append_time_feature(inputs: &Matrix) -> Result<Matrix> {
    let t = inputs.rows();
    if t < 2 {
        return Err(Error::TooFewFrames { got: t, need: 2 });
    }
    let cols = inputs.cols() + 1;
    let mut data = Vec::with_capacity(t * cols);
    for (k, row) in inputs.row_iter().enumerate() {
        data.push(k as f64 / (t - 1) as f64);
        data.extend_from_slice(row);
    }
    Matrix::new(t, cols, data)
}

/// Per-frame maximum over the bundle columns of one muscle group.
pub fn muscle_envelope(bundles: &Matrix) -> Result<Vec<f64>> {
    if bundles.cols() == 0 {
        return Err(Error::EmptyGroup);
    }
    Ok(bundles
        .row_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn subject(m: f64, h: f64) -> SubjectMeta {
        SubjectMeta::new("s", m, h).unwrap()
    }

    #[test]
    fn force_to_percent_body_weight() {
        let raw = Matrix::from_rows(&[[662.5], [0.0]]).unwrap();
        let out =
            normalize_kinetics(&raw, Category::JointReactionForces, &subject(66.25, 1.7), GRAVITY)
                .unwrap();
        assert!((out[(0, 0)] - 100.0 * 662.5 / (66.25 * 9.81)).abs() < 1e-12);
        assert!((out[(0, 0)] - 101.94).abs() < 5e-3);
        assert_eq!(out[(1, 0)], 0.0);
    }

    #[test]
    fn moment_to_percent_bw_bh() {
        let raw = Matrix::from_rows(&[[50.0]]).unwrap();
        let out = normalize_kinetics(&raw, Category::JointMoments, &subject(50.0, 2.0), GRAVITY)
            .unwrap();
        assert!((out[(0, 0)] - 100.0 * 50.0 / (50.0 * 9.81 * 2.0)).abs() < 1e-12);
        assert!((out[(0, 0)] - 5.097).abs() < 1e-3);
    }

    #[test]
    fn activations_pass_and_angles_fail() {
        let raw = Matrix::from_rows(&[[12.5, 80.0]]).unwrap();
        let s = subject(70.0, 1.8);
        assert_eq!(
            normalize_kinetics(&raw, Category::MuscleActivations, &s, GRAVITY).unwrap(),
            raw
        );
        assert!(matches!(
            normalize_kinetics(&raw, Category::JointAngles, &s, GRAVITY),
            Err(Error::UnsupportedCategory(_))
        ));
    }

    #[test]
    fn time_feature_values() {
        let m = Matrix::from_rows(&[[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]]).unwrap();
        let out = append_time_feature(&m).unwrap();
        assert_eq!(out.cols(), 3);
        assert_eq!(out.column(0), vec![0.0, 0.5, 1.0]);
        for i in 0..3 {
            assert_eq!(&out.row(i)[1..], m.row(i));
        }
        let two = append_time_feature(&Matrix::zeros(2, 1)).unwrap();
        assert_eq!(two.column(0), vec![0.0, 1.0]);
        assert!(matches!(
            append_time_feature(&Matrix::zeros(1, 1)),
            Err(Error::TooFewFrames { .. })
        ));
    }

    #[test]
    fn envelope() {
        let m = Matrix::from_rows(&[[1.0, 3.0], [2.0, 2.0]]).unwrap();
        assert_eq!(muscle_envelope(&m).unwrap(), vec![3.0, 2.0]);
        let single = Matrix::from_columns(&[[4.0, -1.0, 2.5]]).unwrap();
        assert_eq!(muscle_envelope(&single).unwrap(), single.column(0));
        assert!(matches!(
            muscle_envelope(&Matrix::zeros(3, 0)),
            Err(Error::EmptyGroup)
        ));
    }

    #[test]
    fn envelope_matches_row_scan() {
        let mut rng = RngStream::new(9);
        let m = Matrix::new(50, 6, (0..300).map(|_| rng.normal()).collect()).unwrap();
        let env = muscle_envelope(&m).unwrap();
        for i in 0..50 {
            let mut best = m[(i, 0)];
            for j in 1..6 {
                if m[(i, j)] > best {
                    best = m[(i, j)];
                }
            }
            assert_eq!(env[i], best);
        }
    }

    proptest::proptest! {
        #[test]
        fn normalization_is_linear(v in -1e4f64..1e4, c in -10f64..10.0) {
            let s = subject(72.0, 1.76);
            for cat in [Category::JointReactionForces, Category::JointMoments, Category::MuscleForces] {
                let a = normalize_kinetics(&Matrix::from_rows(&[[v]]).unwrap(), cat, &s, GRAVITY).unwrap();
                let b = normalize_kinetics(&Matrix::from_rows(&[[c * v]]).unwrap(), cat, &s, GRAVITY).unwrap();
                proptest::prop_assert!((b[(0, 0)] - c * a[(0, 0)]).abs() <= 1e-9 * (1.0 + b[(0, 0)].abs()));
            }
        }
    }
}
